"""Numerical certification of the model's structural properties.

Each checker is a pure function returning a :class:`PropertyReport`; nothing
here mutates trajectories or equilibria. The six-property suite covers box
and population invariance, monotone susceptibles, the opinion floor, the
structural instability of the adoption-free state, and the no-partial /
no-monopoly shape of solved equilibria.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory, simulate
from .equilibrium import Equilibrium, adoption_free_opinions, solve_adoption_diffused
from .model import ModelConfig, SystemState, config_digest, early_stage_state

PROPERTY_IDS = (
    "invariance",
    "monotone-s",
    "opinion-floor",
    "instability",
    "no-partial-adoption",
    "coexistence",
)


@dataclass(frozen=True)
class PropertyReport:
    property_id: str
    passed: bool
    worst: float
    location: tuple[int, int] | None
    note: str

    def line(self, instance: str) -> str:
        at = f"({self.location[0]},{self.location[1]})" if self.location else "(-,-)"
        status = "pass" if self.passed else "fail"
        return f"{instance} {self.property_id} {status} worst={self.worst:.3e} at={at}"

    def to_dict(self) -> dict:
        return {
            "property": self.property_id,
            "passed": self.passed,
            "worst": self.worst,
            "location": list(self.location) if self.location else None,
            "note": self.note,
        }


def _stack(tr: Trajectory) -> np.ndarray:
    if tr.streamed:
        raise ValueError("property checks need a fully recorded trajectory")
    return np.array([st.as_matrix() for st in tr.states])  # (T+1, 7, n)


def check_invariance(tr: Trajectory, tol: float = 1e-9) -> PropertyReport:
    """Box membership of every entry plus per-node population sums of 1."""
    y = _stack(tr)
    box = np.maximum(y - 1.0, -y)  # positive where outside [0,1]
    sums = y[:, :5, :].sum(axis=1)
    simplex = np.abs(sums - 1.0)

    box_worst = float(box.max())
    simplex_worst = float(simplex.max())
    if box_worst >= simplex_worst:
        t, _, node = np.unravel_index(int(box.argmax()), box.shape)
        worst, what = box_worst, "box"
    else:
        t, node = np.unravel_index(int(simplex.argmax()), simplex.shape)
        worst, what = simplex_worst, "population sum"
    passed = box_worst <= tol and simplex_worst <= tol
    return PropertyReport(
        "invariance", passed, worst, (int(t), int(node)),
        f"worst {what} deviation {worst:.3e} (tol {tol:.1e})",
    )


def check_monotone_susceptibles(tr: Trajectory, slack: float = 1e-15) -> PropertyReport:
    """Susceptibles may never grow between consecutive steps.

    Transitions that include an injection are exempt by contract, although
    injections only ever remove susceptibles.
    """
    y = _stack(tr)
    s = y[:, 0, :]
    growth = s[1:] - s[:-1]  # (T, n)
    event_times = {ev.time for ev in tr.events}
    for t in event_times:
        if 1 <= t < growth.shape[0] + 1:
            growth[t - 1] = -np.inf  # exempt the transition into the event step
    if growth.size == 0:
        return PropertyReport("monotone-s", True, 0.0, None, "no transitions to check")
    worst = float(growth.max())
    t, node = np.unravel_index(int(growth.argmax()), growth.shape)
    return PropertyReport(
        "monotone-s", worst <= slack, max(worst, 0.0), (int(t) + 1, int(node)),
        f"largest susceptible increase {worst:.3e} (slack {slack:.1e})",
    )


def check_opinion_floor(tr: Trajectory, cfg: ModelConfig, slack: float = 1e-14) -> PropertyReport:
    """Opinions never drop below their anchored share of the predisposition."""
    y = _stack(tr)
    worst = -np.inf
    loc = None
    for k, row in ((1, 5), (2, 6)):
        p = cfg.tech(k)
        floor = (1.0 - p.lam - p.xi) * p.x0
        deficit = floor[None, :] - y[:, row, :]
        d = float(deficit.max())
        if d > worst:
            worst = d
            t, node = np.unravel_index(int(deficit.argmax()), deficit.shape)
            loc = (int(t), int(node))
    return PropertyReport(
        "opinion-floor", worst <= slack, max(worst, 0.0), loc,
        f"largest floor deficit {worst:.3e} (slack {slack:.1e})",
    )


def check_instability(cfg: ModelConfig, eps: float = 0.01, horizon: int = 1000,
                      tol: float = 1e-12) -> PropertyReport:
    """Certify that the adoption-free state repels the standard perturbation.

    Starts with an eps fraction of tech-1 adopters everywhere, opinions at
    their adoption-free resting point, and checks that the susceptible block
    stays at least eps away from all-ones at every step. Nothing is claimed
    about where the trajectory goes.
    """
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0,1)")
    xe1, xe2 = adoption_free_opinions(cfg, tol)
    n = cfg.n
    zeros = np.zeros(n)
    st0 = SystemState(s=np.full(n, 1.0 - eps), a1=np.full(n, eps), a2=zeros,
                      d1=zeros, d2=zeros, x1=xe1, x2=xe2)
    tr = simulate(cfg, st0, horizon)
    s = np.array([st.s for st in tr.states])
    margins = np.abs(s - 1.0).max(axis=1)  # ||s(t) - 1||_inf per step
    worst = float(margins.min())
    t = int(margins.argmin())
    final_gap = float(np.abs(tr.states[-1].s - 1.0).max())
    # float(1 - (1-eps)) sits one ulp under eps for eps like 0.1, hence the slack
    return PropertyReport(
        "instability", worst >= eps - 1e-15, worst, (t, int(np.abs(s[t] - 1.0).argmax())),
        f"min distance of s from all-ones {worst:.6g} >= eps={eps}; "
        f"final ||y-y_free|| >= {final_gap:.6g}",
    )


def check_no_partial_adoption(eq: Equilibrium, tol: float = 1e-9) -> PropertyReport:
    """Susceptibles must vanish everywhere or saturate everywhere."""
    s = eq.state.s
    all_zero = bool((s <= tol).all())
    all_one = bool((s >= 1.0 - tol).all())
    if all_zero or all_one:
        worst = float(s.max() if all_zero else 1.0 - s.min())
        return PropertyReport("no-partial-adoption", True, worst, None,
                              "susceptibles uniformly " + ("0" if all_zero else "1"))
    mixed = np.flatnonzero((s > tol) & (s < 1.0 - tol))
    worst = float(np.minimum(s, 1.0 - s).max())
    node = int(np.minimum(s, 1.0 - s).argmax())
    return PropertyReport(
        "no-partial-adoption", False, worst, (0, node),
        f"mixed susceptible pattern at nodes {mixed.tolist()[:5]}",
    )


def check_coexistence(eq: Equilibrium, tol: float = 1e-9) -> PropertyReport:
    """Both technologies strictly present, adoption tied to quality ratio."""
    a1, a2 = eq.state.a1, eq.state.a2
    present = float(min(a1.min(), a2.min()))
    if present <= tol:
        node = int(a1.argmin() if a1.min() <= a2.min() else a2.argmin())
        return PropertyReport(
            "coexistence", False, present, (0, node),
            f"monopoly pattern: adopter fraction {present:.3e} <= {tol:.1e}",
        )
    return PropertyReport(
        "coexistence", eq.ratio_check_max_err <= tol, eq.ratio_check_max_err, None,
        f"adoption-ratio law error {eq.ratio_check_max_err:.3e} (tol {tol:.1e})",
    )


@dataclass(frozen=True, eq=False)
class CrossValidation:
    """Distance between a long simulation's endpoint and the solved equilibrium.

    Reported, never asserted: nothing guarantees trajectories converge to the
    equilibrium, so large distances are information, not failures.
    """

    distances: dict[str, float]
    horizon: int
    solver_converged: bool
    solver_residual: float
    instance: str

    @property
    def max_distance(self) -> float:
        return max(self.distances.values())


def cross_validate(cfg: ModelConfig, horizon: int = 10_000, tol: float = 1e-10,
                   seed_fraction: float = 0.01) -> CrossValidation:
    """Simulate from an early-diffusion state and compare against the solver."""
    eq = solve_adoption_diffused(cfg, tol=tol)
    st0 = early_stage_state(cfg, seed_fraction)
    tr = simulate(cfg, st0, horizon, record_states=False)
    end = tr.states[-1]
    distances = {
        b: float(np.abs(end.block(b) - eq.state.block(b)).max())
        for b in ("s", "a1", "a2", "d1", "d2", "x1", "x2")
    }
    return CrossValidation(
        distances=distances,
        horizon=horizon,
        solver_converged=eq.converged,
        solver_residual=eq.residual,
        instance=config_digest(cfg)[:12],
    )


def run_property_suite(
    cfg: ModelConfig,
    horizon: int = 1000,
    seed_fraction: float = 0.01,
    eps: float = 0.01,
    tol: float = 1e-9,
    solver_tol: float = 1e-10,
) -> list[PropertyReport]:
    """Run all six property checks on one instance, in PROPERTY_IDS order."""
    tr = simulate(cfg, early_stage_state(cfg, seed_fraction), horizon)
    eq = solve_adoption_diffused(cfg, tol=solver_tol)
    reports = [
        check_invariance(tr, tol),
        check_monotone_susceptibles(tr),
        check_opinion_floor(tr, cfg),
        check_instability(cfg, eps, min(horizon, 1000)),
        check_no_partial_adoption(eq, tol),
        check_coexistence(eq, tol),
    ]
    if not eq.converged:
        reports[-1] = PropertyReport(
            "coexistence", False, eq.residual, None,
            f"solver did not converge (residual {eq.residual:.3e})",
        )
    return reports
