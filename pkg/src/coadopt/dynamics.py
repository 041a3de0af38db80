"""One-step update and trajectory simulation of the coupled dynamics.

Each step is fully synchronous: every right-hand side is evaluated on the
state at time t. Susceptibles lose mass to both adopter pools in proportion
to opinion-weighted exposure, adopters churn into the dissatisfied pools,
dissatisfied users switch to the rival technology when their opinion of it
allows, and opinions relax toward a mix of their anchor, social neighbours,
and observed adoption.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelConfig, SystemState, config_digest, validate_state

# Rounding noise below this magnitude is clamped to zero; anything more
# negative indicates a broken config or state and aborts the run.
NEGATIVE_CLAMP = 1e-14

AGGREGATE_COLUMNS = (
    "mean_s",
    "mean_a1",
    "mean_a2",
    "mean_d1",
    "mean_d2",
    "mean_x1",
    "mean_x2",
)


class DynamicsError(RuntimeError):
    """Simulation aborted: invalid inputs or a numeric contract violation."""


@dataclass(frozen=True)
class InjectionEvent:
    """Market entry of a technology at a given step.

    Per node, min(fraction, s_i) moves into the adopter compartment of
    ``technology`` right before the step at ``time``. If the technology is
    absent from the initial state (no adopters, no dissatisfied), it is
    dormant until its first event: its acquisition of the rival's
    dissatisfied users stays switched off, so it has exactly zero presence
    before entry. Events on an already-present technology are plain
    injections with no gating.
    """

    time: int
    technology: int
    fraction: float

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("event time must be nonnegative")
        if self.technology not in (1, 2):
            raise ValueError("technology must be 1 or 2")
        if not (0 < self.fraction < 1):
            raise ValueError("fraction must lie in (0,1)")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-indexed states plus the events that were actually applied.

    When simulated with ``record_states=False`` only the initial and final
    states are kept and ``aggregates`` carries the per-step node means.
    """

    states: tuple[SystemState, ...]
    events: tuple[InjectionEvent, ...]
    config_digest: str
    clamped: int = 0
    aggregates: np.ndarray | None = field(default=None, compare=False)
    streamed: bool = False

    @property
    def horizon(self) -> int:
        if self.streamed and self.aggregates is not None:
            return self.aggregates.shape[0] - 1
        return len(self.states) - 1


def _tech_arrays(cfg: ModelConfig):
    t1, t2 = cfg.tech1, cfg.tech2
    anchor1 = (1.0 - t1.lam - t1.xi) * t1.x0
    anchor2 = (1.0 - t2.lam - t2.xi) * t2.x0
    return t1, t2, anchor1, anchor2


def _matvec(m: np.ndarray, v: np.ndarray, deterministic: bool) -> np.ndarray:
    if deterministic:
        # fixed-order reduction, independent of BLAS threading
        return np.add.reduce(m * v, axis=1)
    return m @ v


def _step_arrays(cfg, blocks, anchor1, anchor2, deterministic,
                 active1=True, active2=True):
    s, a1, a2, d1, d2, x1, x2 = blocks
    t1, t2 = cfg.tech1, cfg.tech2
    W = cfg.physical.weights
    Wt = cfg.social.weights

    wa1 = _matvec(W, a1, deterministic)
    wa2 = _matvec(W, a2, deterministic)
    press1 = t1.beta * x1 * wa1
    press2 = t2.beta * x2 * wa2
    # pull on the rival's dissatisfied pool; closed while dormant pre-entry
    switch1 = t1.gamma * x1 if active1 else 0.0
    switch2 = t2.gamma * x2 if active2 else 0.0

    s_new = s - s * press1 - s * press2
    a1_new = a1 + s * press1 - t1.delta * a1 + switch1 * d2
    a2_new = a2 + s * press2 - t2.delta * a2 + switch2 * d1
    d1_new = d1 - switch2 * d1 + t1.delta * a1
    d2_new = d2 - switch1 * d2 + t2.delta * a2
    x1_new = anchor1 + t1.lam * _matvec(Wt, x1, deterministic) + t1.xi * wa1
    x2_new = anchor2 + t2.lam * _matvec(Wt, x2, deterministic) + t2.xi * wa2

    clamped = 0
    out = [s_new, a1_new, a2_new, d1_new, d2_new, x1_new, x2_new]
    for arr in out:
        low = arr.min()
        if low < 0.0:
            if low < -NEGATIVE_CLAMP:
                raise DynamicsError(
                    f"negative compartment value {low:.3e} exceeds the rounding "
                    "guard; config or state violates the model contract"
                )
            neg = arr < 0.0
            clamped += int(neg.sum())
            arr[neg] = 0.0
    return out, clamped


def step(cfg: ModelConfig, st: SystemState, deterministic_sum: bool = False,
         validate: bool = True) -> SystemState:
    """Advance the state by one synchronous step.

    The opinion update anchors to the predispositions stored in ``cfg``,
    not to the state's current opinions. With ``validate=False`` the config
    validity check is skipped (test hook for deliberately degenerate
    parameter sets).
    """
    if validate and not cfg.validation.passed:
        raise DynamicsError(f"config fails validation: {cfg.validation}")
    m = st.as_matrix()
    if not np.isfinite(m).all():
        raise DynamicsError("state contains NaN or Inf")
    _, _, anchor1, anchor2 = _tech_arrays(cfg)
    blocks = [getattr(st, b) for b in ("s", "a1", "a2", "d1", "d2", "x1", "x2")]
    out, _ = _step_arrays(cfg, blocks, anchor1, anchor2, deterministic_sum)
    return SystemState(*out)


def _apply_events(blocks, events):
    s, a1, a2 = blocks[0], blocks[1], blocks[2]
    for ev in events:
        moved = np.minimum(ev.fraction, s)
        s = s - moved
        if ev.technology == 1:
            a1 = a1 + moved
        else:
            a2 = a2 + moved
    blocks[0], blocks[1], blocks[2] = s, a1, a2
    return blocks


def simulate(
    cfg: ModelConfig,
    st0: SystemState,
    horizon: int,
    events: tuple[InjectionEvent, ...] | list[InjectionEvent] = (),
    deterministic_sum: bool = False,
    record_states: bool = True,
) -> Trajectory:
    """Run the dynamics for ``horizon`` steps from ``st0``.

    Events fire right before the step at their time (events scheduled at or
    beyond the horizon never fire); a technology that starts absent and has
    a scheduled event is dormant until then (see InjectionEvent). The run is
    deterministic; with ``deterministic_sum=True`` it is additionally
    independent of BLAS threading, for golden tests.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if not cfg.validation.passed:
        raise DynamicsError(f"config fails validation: {cfg.validation}")
    rep = validate_state(st0)
    if not rep.passed:
        raise DynamicsError(f"initial state invalid: {rep}")

    by_time: dict[int, list[InjectionEvent]] = {}
    for ev in events:
        if not isinstance(ev, InjectionEvent):
            raise DynamicsError(f"not an injection event: {ev!r}")
        by_time.setdefault(ev.time, []).append(ev)

    # a technology absent at t=0 with a scheduled event lies dormant until it
    entry_time = {1: 0, 2: 0}
    for k, (a, d) in ((1, (st0.a1, st0.d1)), (2, (st0.a2, st0.d2))):
        times = [ev.time for ev in events if ev.technology == k]
        if times and not (a > 0).any() and not (d > 0).any():
            entry_time[k] = min(times)

    _, _, anchor1, anchor2 = _tech_arrays(cfg)
    blocks = [getattr(st0, b).copy() for b in ("s", "a1", "a2", "d1", "d2", "x1", "x2")]

    states: list[SystemState] = []
    aggregates = np.empty((horizon + 1, 7)) if not record_states else None
    applied: list[InjectionEvent] = []
    clamped = 0

    def record(t):
        if record_states:
            states.append(SystemState(*blocks))
        else:
            aggregates[t] = [b.mean() for b in blocks]

    for t in range(horizon):
        todays = by_time.get(t)
        if todays:
            blocks = _apply_events(blocks, todays)
            applied.extend(todays)
        record(t)
        blocks, c = _step_arrays(cfg, blocks, anchor1, anchor2, deterministic_sum,
                                 active1=t >= entry_time[1], active2=t >= entry_time[2])
        clamped += c
    record(horizon)

    if record_states:
        return Trajectory(
            states=tuple(states),
            events=tuple(applied),
            config_digest=config_digest(cfg),
            clamped=clamped,
        )
    return Trajectory(
        states=(st0, SystemState(*blocks)),
        events=tuple(applied),
        config_digest=config_digest(cfg),
        clamped=clamped,
        aggregates=aggregates,
        streamed=True,
    )


def trajectory_metrics(tr: Trajectory) -> np.ndarray:
    """Node means per step, shape (horizon+1, 7), columns AGGREGATE_COLUMNS."""
    if tr.streamed and tr.aggregates is not None:
        return tr.aggregates
    if not tr.states:
        raise ValueError("trajectory has no states")
    return np.array([st.as_matrix().mean(axis=1) for st in tr.states])


def write_trajectory_csv(tr: Trajectory, path) -> None:
    """One row per (step, node): t,node,s,a1,a2,d1,d2,x1,x2."""
    if tr.streamed:
        raise ValueError("per-node output needs a fully recorded trajectory")
    with open(path, "w") as fh:
        fh.write("t,node,s,a1,a2,d1,d2,x1,x2\n")
        for t, st in enumerate(tr.states):
            m = st.as_matrix()
            for i in range(st.n):
                fh.write(f"{t},{i}," + ",".join(repr(float(v)) for v in m[:, i]) + "\n")


def write_aggregates_csv(tr: Trajectory, path) -> None:
    """One row per step of node means: t,mean_s,...,mean_x2."""
    agg = trajectory_metrics(tr)
    with open(path, "w") as fh:
        fh.write("t," + ",".join(AGGREGATE_COLUMNS) + "\n")
        for t, row in enumerate(agg):
            fh.write(f"{t}," + ",".join(repr(float(v)) for v in row) + "\n")
