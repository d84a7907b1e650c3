"""Ready-made deployments in a 7x4 m room and target layouts for each trajectory kind.

Room coordinates: x in [0, 7], y in [0, 4]; sensor headings in degrees from +x.

setup-1 puts one radar at the middle of each wall, all facing the room
centre: R1/R3 face each other across the long axis and R2/R4 across the
short one, so every neighbouring pair is perpendicular.
setup-2 puts the radars in the corners, facing the centre, so they sit on a
circle around the walking area.
"""
from __future__ import annotations

import numpy as np

from .geom import Pose2D
from .sim import KINDS, InvalidScenario, Scenario, SensorModel, SensorSpec, TargetSpec, substream

ROOM = (7.0, 4.0)
CENTER = (3.5, 2.0)

SETUPS = {
    "setup-1": [
        (1, (0.0, 2.0), 0.0),
        (2, (3.5, 0.0), 90.0),
        (3, (7.0, 2.0), 180.0),
        (4, (3.5, 4.0), -90.0),
    ],
    "setup-2": [
        (1, (0.0, 0.0), float(np.degrees(np.arctan2(2.0, 3.5)))),
        (2, (7.0, 0.0), float(np.degrees(np.arctan2(2.0, -3.5)))),
        (3, (7.0, 4.0), float(np.degrees(np.arctan2(-2.0, -3.5)))),
        (4, (0.0, 4.0), float(np.degrees(np.arctan2(-2.0, 3.5)))),
    ],
}

MAX_TARGETS = 3


def setup_sensors(setup: str, n_sensors: int | None = None, T_s: float = 1.0 / 15.0) -> list[SensorSpec]:
    if setup not in SETUPS:
        raise InvalidScenario(f"unknown setup {setup!r}; choose from {sorted(SETUPS)}")
    rows = SETUPS[setup][: n_sensors or None]
    return [SensorSpec(i, Pose2D.from_angle(h, p), T_s=T_s) for i, p, h in rows]


def _lanes(n: int, lo: float, hi: float) -> list[float]:
    if n == 1:
        return [(lo + hi) / 2]
    return list(np.linspace(lo, hi, n))


def preset_targets(kind: str, n_targets: int, seed: int = 0, speed: float = 0.9) -> list[TargetSpec]:
    """Target layouts for each trajectory family (up to three targets)."""
    if kind not in KINDS:
        raise InvalidScenario(f"unknown trajectory kind {kind!r}")
    if not 1 <= n_targets <= MAX_TARGETS:
        raise InvalidScenario(f"n_targets must be in [1, {MAX_TARGETS}]")
    out = []
    L = 4.6  # walk length of the straight-line families
    if kind == "in-line":
        # one lane, same direction, evenly staggered
        for k in range(n_targets):
            out.append(TargetSpec(kind, {"a": (1.2, 2.0), "b": (5.8, 2.0), "speed": speed,
                                         "phase": k * (2 * L / n_targets) / speed / 2}))
    elif kind == "vs-in-line":
        # one lane, alternate targets start from opposite ends
        for k in range(n_targets):
            ph = (k % 2) * L / speed + (k // 2) * 1.0
            out.append(TargetSpec(kind, {"a": (1.2, 2.0), "b": (5.8, 2.0), "speed": speed, "phase": ph}))
    elif kind == "parallel":
        for k, y in enumerate(_lanes(n_targets, 1.0, 3.0)):
            out.append(TargetSpec(kind, {"a": (1.2, y), "b": (5.8, y), "speed": speed, "phase": 0.7 * k}))
    elif kind == "paral-diag":
        for k, x0 in enumerate(_lanes(n_targets, 1.2, 3.6)):
            out.append(TargetSpec(kind, {"a": (x0, 0.7), "b": (x0 + 2.2, 3.3), "speed": speed, "phase": 0.7 * k}))
    elif kind == "circular":
        for k, r in enumerate(_lanes(n_targets, 0.6, 1.6) if n_targets > 1 else [1.2]):
            out.append(TargetSpec(kind, {"center": CENTER, "radius": float(r), "period": 2 * np.pi * r / speed,
                                         "phase": 2 * np.pi * k / n_targets, "direction": 1 if k % 2 == 0 else -1}))
    else:  # free
        rng = substream(seed, "spawn")
        starts: list[np.ndarray] = []
        while len(starts) < n_targets:
            p = rng.uniform((0.8, 0.8), (ROOM[0] - 0.8, ROOM[1] - 0.8))
            if all(np.linalg.norm(p - q) >= 0.5 for q in starts):
                starts.append(p)
        for k, p in enumerate(starts):
            out.append(TargetSpec(kind, {"index": k, "start": tuple(float(v) for v in p),
                                         "speed_range": (0.5, min(1.5, speed + 0.3)), "margin": 0.6}))
    return out


def make_scenario(setup: str, kind: str, n_targets: int, seed: int = 0, duration: float = 40.0,
                  n_sensors: int | None = None, model: SensorModel | None = None) -> Scenario:
    return Scenario(setup_sensors(setup, n_sensors), preset_targets(kind, n_targets, seed), ROOM, duration, seed,
                    model or SensorModel(), name=f"{setup}/{kind}/{n_targets}")


def occlusion_scenario(seed: int = 0, duration: float = 40.0, model: SensorModel | None = None) -> Scenario:
    """Three targets on concentric circles seen by three wall radars.

    The targets share one angular rate, so they stay lined up on a rotating
    spoke; whenever the spoke points at a radar the nearer targets hide the
    farther ones from it, while the other radars still see all three.
    A seed-dependent start angle varies when the blockages happen.
    """
    phase = float(substream(seed, "spawn").uniform(0, 2 * np.pi))
    period = 12.0
    targets = [TargetSpec("circular", {"center": CENTER, "radius": r, "period": period, "phase": phase})
               for r in (0.5, 1.1, 1.7)]
    return Scenario(setup_sensors("setup-1", 3), targets, ROOM, duration, seed, model or SensorModel(),
                    name="occlusion-heavy")


def calibration_scenario(seed: int = 0, duration: float = 40.0, setup: str = "setup-2",
                         model: SensorModel | None = None) -> Scenario:
    """Three free walkers seen by four radars, the layout used to score self-calibration.

    Brisk walks (0.8 to 1.4 m/s) sweep more of the shared area within the
    40 s window, which is what pins down the orientation.
    """
    sc = make_scenario(setup, "free", 3, seed, duration, model=model)
    for t in sc.targets:
        t.params["speed_range"] = (0.8, 1.4)
    sc.name = f"{setup}/free-calibration/3"
    return sc
