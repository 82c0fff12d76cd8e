from ..geometry import PickPlaceAction
from .episodes import find_episodes, load_episode, save_episode
from .metrics import (
    ROTATION_TOL,
    TRANSLATION_TOL,
    Z_TOL,
    best_assignment,
    block_in_place,
    check_success,
    rate_of_progress,
)
from .oracle import Episode, OracleError, oracle_policy, record_demo, sample_random_action
from .tasks import (
    TASK_NAMES,
    TRAIN_TASKS,
    UNSEEN_TASKS,
    BlockSpec,
    SpawnError,
    TaskSpec,
    TaskSpecError,
    all_tasks,
    get_task,
    load_task,
)
from .world import (
    COLORS,
    TABLE_COLOR,
    BlockState,
    Footprint,
    WorldState,
    apply_action,
    is_stable,
    render,
)

__all__ = [
    "BlockSpec",
    "BlockState",
    "COLORS",
    "Episode",
    "Footprint",
    "OracleError",
    "PickPlaceAction",
    "ROTATION_TOL",
    "SpawnError",
    "TABLE_COLOR",
    "TASK_NAMES",
    "TRAIN_TASKS",
    "TRANSLATION_TOL",
    "TaskSpec",
    "TaskSpecError",
    "UNSEEN_TASKS",
    "WorldState",
    "Z_TOL",
    "all_tasks",
    "apply_action",
    "best_assignment",
    "block_in_place",
    "check_success",
    "find_episodes",
    "get_task",
    "is_stable",
    "load_episode",
    "load_task",
    "oracle_policy",
    "rate_of_progress",
    "record_demo",
    "render",
    "sample_random_action",
    "save_episode",
]
