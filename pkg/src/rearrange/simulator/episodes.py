"""Episode logs on disk: `episode.jsonl` plus per-step PNG observation dumps.

Layout of an episode directory::

    episode.jsonl          header, one record per step, final record
    obs_000_rgb.png        8-bit RGB of the observation before step 0
    obs_000_height.png     16-bit height in millimetres
    ...
    obs_final_rgb.png / obs_final_height.png

Every record carries `schema_version`. Step records hold the action and
the full world state before the step, so observations can be re-rendered
exactly when image dumps are absent.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..geometry import PickPlaceAction
from ..observation import load_observation, save_observation
from .oracle import Episode
from .world import WorldState, render

EPISODE_SCHEMA_VERSION = 1
EPISODE_FILE = "episode.jsonl"


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def save_episode(ep: Episode, out_dir: str | Path, dump_images: bool = True) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [
        _dump(
            {
                "schema_version": EPISODE_SCHEMA_VERSION,
                "kind": "header",
                "task": ep.task,
                "seed": ep.seed,
                "n_random": ep.n_random,
                "n_steps": len(ep.steps),
            }
        )
    ]
    for i, (o, a) in enumerate(ep.steps):
        rec = {
            "schema_version": EPISODE_SCHEMA_VERSION,
            "kind": "step",
            "step": i,
            "random": i < ep.n_random,
            "action": a.to_dict(),
        }
        if ep.worlds:
            rec["world"] = ep.worlds[i].to_dict()
        if dump_images:
            rec["obs"] = [f"obs_{i:03d}_rgb.png", f"obs_{i:03d}_height.png"]
            save_observation(o, out / rec["obs"][0], out / rec["obs"][1])
        lines.append(_dump(rec))
    final = {"schema_version": EPISODE_SCHEMA_VERSION, "kind": "final"}
    if ep.worlds:
        final["world"] = ep.worlds[-1].to_dict()
    if dump_images:
        final["obs"] = ["obs_final_rgb.png", "obs_final_height.png"]
        save_observation(ep.final_observation, out / final["obs"][0], out / final["obs"][1])
    lines.append(_dump(final))
    (out / EPISODE_FILE).write_text("\n".join(lines) + "\n")
    return out


def load_episode(ep_dir: str | Path, prefer_images: bool = True) -> Episode:
    """Read an episode directory; observations come from PNGs when present."""
    d = Path(ep_dir)
    records = [json.loads(line) for line in (d / EPISODE_FILE).read_text().splitlines() if line.strip()]
    for r in records:
        if r.get("schema_version") != EPISODE_SCHEMA_VERSION:
            raise ValueError(f"{d}: unsupported episode schema {r.get('schema_version')}")
    header = records[0]
    step_recs = [r for r in records if r["kind"] == "step"]
    final = next(r for r in records if r["kind"] == "final")

    def obs_of(rec):
        if prefer_images and "obs" in rec:
            return load_observation(d / rec["obs"][0], d / rec["obs"][1])
        if "world" in rec:
            return render(WorldState.from_dict(rec["world"]))
        raise ValueError(f"{d}: record has neither images nor world state")

    steps = tuple((obs_of(r), PickPlaceAction.from_dict(r["action"])) for r in step_recs)
    worlds = ()
    if all("world" in r for r in step_recs) and "world" in final:
        worlds = tuple(WorldState.from_dict(r["world"]) for r in step_recs + [final])
    return Episode(header["task"], header["seed"], steps, obs_of(final), worlds, header.get("n_random", 0))


def find_episodes(root: str | Path) -> list[Path]:
    return sorted(p.parent for p in Path(root).rglob(EPISODE_FILE))
