"""Value-map overlays for eyeballing the scorer and the proposals."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .proposal import HeuristicScorer, ProposalConfig, propose_from_maps  # noqa: E402
from .simulator.tasks import get_task, load_task  # noqa: E402
from .simulator.world import render  # noqa: E402


def qmap_figure(task: str, seed: int, out: str | Path, k: int = 3, scorer: HeuristicScorer | None = None) -> Path:
    """Four panels: current RGB, goal RGB, pick map, rotation-maxed place map with proposals."""
    world, goal = load_task(get_task(task), seed)
    o, o_g = render(world), render(goal)
    maps = (scorer or HeuristicScorer()).score(o, o_g)
    prop = propose_from_maps(maps, ProposalConfig(k=k))

    fig, axes = plt.subplots(1, 4, figsize=(14, 3.8))
    axes[0].imshow(o.rgb)
    axes[0].set_title("current")
    axes[1].imshow(o_g.rgb)
    axes[1].set_title("goal")
    axes[2].imshow(o.rgb)
    axes[2].imshow(maps.q_pick, cmap="inferno", alpha=0.6)
    axes[2].plot(prop.pick.v, prop.pick.u, "c+", ms=12, mew=2)
    axes[2].set_title("pick values")
    axes[3].imshow(o.rgb)
    axes[3].imshow(maps.q_place.max(axis=2), cmap="viridis", alpha=0.6)
    for i, p in enumerate(prop.places):
        axes[3].plot(p.v, p.u, "r^", ms=9)
        axes[3].annotate(f"{i}:{p.rot_bin * 360 // maps.n_rotations}", (p.v, p.u), color="w", fontsize=8, xytext=(4, 4), textcoords="offset points")
    axes[3].set_title(f"place values, K={k}")
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.suptitle(f"{task}, seed {seed}")
    fig.tight_layout()
    out = Path(out)
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return out
