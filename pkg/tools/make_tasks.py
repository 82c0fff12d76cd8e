"""Regenerate src/rearrange/data/tasks/*.json from the layout table below.

Offsets are in units of the block pitch (block side + gap); levels count
block thicknesses. Run from the repository root.
"""

from pathlib import Path

from rearrange.geometry import PoseSE2
from rearrange.simulator import COLORS, BlockSpec, Footprint, TaskSpec

SIDE, GAP, THICK = 0.04, 0.005, 0.03
PITCH = SIDE + GAP
CENTER = (0.25, 0.25)
SPAWN = (0.02, 0.02, 0.48, 0.48)

ROW = [(0, -1, 0), (0, 0, 0), (0, 1, 0)]
LAYOUTS = {
    "tower": ("train", [(0, 0, 0), (0, 0, 1), (0, 0, 2)]),
    "row": ("train", ROW),
    "square": ("train", [(-0.5, -0.5, 0), (-0.5, 0.5, 0), (0.5, -0.5, 0), (0.5, 0.5, 0)]),
    "t-shape": ("train", ROW + [(0, 0, 1)]),
    "pyramid": ("train", ROW + [(0, -0.5, 1), (0, 0.5, 1), (0, 0, 2)]),
    "palace": ("train", [(0, -1.5, 0), (0, -0.5, 0), (0, 0.5, 0), (0, 1.5, 0), (0, -1.5, 1), (0, 1.5, 1)]),
    "plane-t": ("unseen", ROW + [(1, 0, 0)]),
    "plane-square": ("unseen", [(-1, -1, 0), (-1, 1, 0), (1, -1, 0), (1, 1, 0)]),
    "stair-2": ("unseen", [(0, -0.5, 0), (0, 0.5, 0), (0, -0.5, 1)]),
    "stair-3": ("unseen", ROW + [(0, -1, 1), (0, 0, 1), (0, -1, 2)]),
    "twin-tower": ("unseen", [(0, y, lvl) for lvl in range(3) for y in (-1, 1)]),
    "rectangle": ("unseen", [(x, y, 0) for x in (-0.5, 0.5) for y in (-1, 0, 1)]),
    "pallet": ("unseen", [(-0.5, -0.5, 0), (-0.5, 0.5, 0), (0.5, -0.5, 0), (0.5, 0.5, 0), (-0.5, 0, 1), (0.5, 0, 1)]),
    "building": ("unseen", [(0, y, lvl) for lvl in range(3) for y in (-0.5, 0.5)]),
}


def build(name: str) -> TaskSpec:
    split, layout = LAYOUTS[name]
    block = BlockSpec(Footprint("square", SIDE, SIDE), THICK, COLORS["red"])
    goals = [
        (PoseSE2(round(CENTER[0] + dx * PITCH, 6), round(CENTER[1] + dy * PITCH, 6), 0.0), round(lvl * THICK, 6))
        for dx, dy, lvl in layout
    ]
    return TaskSpec(name, [block] * len(goals), goals, SPAWN, seed=0, split=split)


if __name__ == "__main__":
    out = Path("src/rearrange/data/tasks")
    out.mkdir(parents=True, exist_ok=True)
    for name in LAYOUTS:
        build(name).to_json(out / f"{name}.json")
        print("wrote", name)
