"""Equilibria of the coupled dynamics.

Two equilibrium families exist: the adoption-free state (everyone
susceptible, opinions settled at their anchored resting point) and the
adoption-diffused state (nobody susceptible, both technologies strictly
present everywhere). The diffused equilibrium is found as the fixed point
of a nodewise scalar map over the tech-1 adoption vector; everything else
reconstructs from it in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelConfig, SystemState
from .netgraph import WeightedDigraph

OPINION_FLOOR = 1e-12  # below this an opinion is considered degenerate

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


class LinearSolveError(RuntimeError):
    """Opinion linear system missed the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class DegenerateOpinionError(RuntimeError):
    """An equilibrium opinion hit the positivity floor."""


@dataclass(frozen=True)
class EtaTrace:
    """Summary of the damping schedule of one solve."""

    final: float
    minimum: float
    maximum: float
    halvings: int
    raises_: int


@dataclass(frozen=True, eq=False)
class Equilibrium:
    """A full equilibrium state with solver diagnostics."""

    state: SystemState
    kind: str  # "adoption-free" | "adoption-diffused"
    residual: float
    iterations: int
    converged: bool
    lower_bound: np.ndarray | None = None
    ratio_check_max_err: float = 0.0
    simplex_max_err: float = 0.0
    boundary_contact: bool = False
    eta_trace: EtaTrace | None = None

    def to_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "state": {b: getattr(self.state, b).tolist()
                      for b in ("s", "a1", "a2", "d1", "d2", "x1", "x2")},
            "ratio_check_max_err": self.ratio_check_max_err,
            "simplex_max_err": self.simplex_max_err,
        }
        if self.lower_bound is not None:
            doc["lower_bound"] = self.lower_bound.tolist()
        if self.eta_trace is not None:
            doc["solver"] = {
                "eta_final": self.eta_trace.final,
                "eta_min": self.eta_trace.minimum,
                "eta_max": self.eta_trace.maximum,
                "eta_halvings": self.eta_trace.halvings,
                "eta_raises": self.eta_trace.raises_,
                "boundary_contact": self.boundary_contact,
            }
        return doc


def solve_anchored_opinions(
    lam: np.ndarray,
    social: WeightedDigraph,
    rhs: np.ndarray,
    tol: float,
    max_iter: int = 100_000,
    deterministic_sum: bool = False,
) -> np.ndarray:
    """Solve x = diag(lam) @ Wt @ x + rhs by fixed-point sweeps.

    The iteration matrix has max-norm max(lam) < 1 under a validated config,
    so the sweeps contract; the returned x satisfies the equation within
    ``tol`` in max-norm (which is exactly the linear residual of
    (I - diag(lam) Wt) x = rhs).
    """
    Wt = social.weights
    x = rhs.copy()
    for _ in range(max_iter):
        if deterministic_sum:
            wx = np.add.reduce(Wt * x, axis=1)
        else:
            wx = Wt @ x
        x_next = lam * wx + rhs
        if np.abs(x_next - x).max() <= tol:
            # one more residual check on the accepted iterate
            if deterministic_sum:
                wx = np.add.reduce(Wt * x_next, axis=1)
            else:
                wx = Wt @ x_next
            res = float(np.abs(lam * wx + rhs - x_next).max())
            if res <= tol:
                return x_next
        x = x_next
    res = float(np.abs(lam * (Wt @ x) + rhs - x).max())
    raise LinearSolveError(
        f"opinion solve stalled at residual {res:.3e} (target {tol:.1e})", residual=res
    )


def adoption_free_opinions(cfg: ModelConfig, tol: float = 1e-12,
                           deterministic_sum: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Resting opinions of the all-susceptible equilibrium, per technology."""
    out = []
    for k in (1, 2):
        p = cfg.tech(k)
        rhs = (1.0 - p.lam - p.xi) * p.x0
        out.append(solve_anchored_opinions(p.lam, cfg.social, rhs, tol,
                                           deterministic_sum=deterministic_sum))
    return out[0], out[1]


def adoption_free_equilibrium(cfg: ModelConfig, tol: float = 1e-12) -> Equilibrium:
    """The all-susceptible equilibrium as a full state object."""
    xe1, xe2 = adoption_free_opinions(cfg, tol)
    n = cfg.n
    zeros = np.zeros(n)
    state = SystemState(s=np.ones(n), a1=zeros, a2=zeros, d1=zeros, d2=zeros,
                        x1=xe1, x2=xe2)
    return Equilibrium(state=state, kind="adoption-free", residual=tol,
                       iterations=0, converged=True)


def _delta_ratio(cfg: ModelConfig) -> np.ndarray:
    d2 = cfg.tech2.delta
    zero = np.flatnonzero(d2 == 0.0)
    if zero.size:
        raise ZeroDivisionError(
            f"adoption ratio undefined: delta2 is zero at nodes {zero.tolist()[:5]}"
        )
    return cfg.tech1.delta / d2


def opinion_response(
    cfg: ModelConfig,
    a1: np.ndarray,
    tol: float = 1e-12,
    deterministic_sum: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Equilibrium opinions consistent with a tech-1 adoption vector.

    Tech-2 adoption is slaved to tech-1 through the dissatisfaction-rate
    ratio; each technology's opinions then solve the anchored linear system
    with the adoption feedback on the right-hand side. The response is
    entrywise nondecreasing in ``a1``.
    """
    a1 = np.asarray(a1, dtype=float)
    ratio = _delta_ratio(cfg)
    a = {1: a1, 2: ratio * a1}
    out = []
    for k in (1, 2):
        p = cfg.tech(k)
        if deterministic_sum:
            wa = np.add.reduce(cfg.physical.weights * a[k], axis=1)
        else:
            wa = cfg.physical.weights @ a[k]
        rhs = (1.0 - p.lam - p.xi) * p.x0 + p.xi * wa
        out.append(solve_anchored_opinions(p.lam, cfg.social, rhs, tol,
                                           deterministic_sum=deterministic_sum))
    return out[0], out[1]


def fixed_point_map(
    cfg: ModelConfig,
    a1: np.ndarray,
    tol: float = 1e-12,
    deterministic_sum: bool = False,
) -> np.ndarray:
    """Nodewise map whose fixed point is the diffused tech-1 adoption vector.

    Derived from the per-node conservation of population with susceptibles
    at zero: the image is one minus the slaved tech-2 adoption minus both
    dissatisfied pools expressed through the opinion response.
    """
    a1 = np.asarray(a1, dtype=float)
    ratio = _delta_ratio(cfg)
    x1s, x2s = opinion_response(cfg, a1, tol, deterministic_sum)
    if x1s.min() <= OPINION_FLOOR or x2s.min() <= OPINION_FLOOR:
        raise DegenerateOpinionError(
            "equilibrium opinion at or below the positivity floor; "
            "config cannot support the diffused equilibrium"
        )
    g1, g2 = cfg.tech1.gamma, cfg.tech2.gamma
    d1 = cfg.tech1.delta
    return 1.0 - ratio * a1 - d1 * a1 * (1.0 / (g1 * x1s) + 1.0 / (g2 * x2s))


def solver_floor(cfg: ModelConfig, tol: float = 1e-12) -> np.ndarray:
    """Safeguard lower bound: the fixed point can never sit below it.

    Built from the worst-case dissatisfied mass with opinions pinned at
    their adoption-free resting point.
    """
    xe1, xe2 = adoption_free_opinions(cfg, tol)
    ratio = _delta_ratio(cfg)
    d1 = cfg.tech1.delta
    phi_cap = d1 * (1.0 / (cfg.tech1.gamma * xe1) + 1.0 / (cfg.tech2.gamma * xe2))
    return np.maximum(0.0, 1.0 - ratio - phi_cap)


def _require_positive(name: str, v: np.ndarray) -> None:
    bad = np.flatnonzero(v <= 0.0)
    if bad.size:
        raise ValueError(
            f"{name} must be strictly positive for the diffused solve "
            f"(offending nodes {bad.tolist()[:5]})"
        )


def _reconstruct(cfg, a1, x1s, x2s, ratio):
    g1, g2 = cfg.tech1.gamma, cfg.tech2.gamma
    d1 = cfg.tech1.delta
    a2 = ratio * a1
    diss1 = d1 * a1 / (g2 * x2s)
    diss2 = d1 * a1 / (g1 * x1s)
    state = SystemState(
        s=np.zeros(cfg.n), a1=a1, a2=a2, d1=diss1, d2=diss2, x1=x1s, x2=x2s
    )
    ratio_err = float(np.abs(a2 * cfg.tech2.delta - a1 * cfg.tech1.delta).max())
    simplex_err = float(np.abs(state.compartment_sum() - 1.0).max())
    return state, ratio_err, simplex_err


def solve_adoption_diffused(
    cfg: ModelConfig,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    a0: np.ndarray | None = None,
    deterministic_sum: bool = False,
) -> Equilibrium:
    """Find the adoption-diffused equilibrium by safeguarded damped iteration.

    Iterates a <- clamp((1-eta) a + eta F(a)) onto the box [floor, 1]. Plain
    substitution diverges whenever the map's local slope is below -1 (already
    true for small instances), so the step is damped with an adaptive eta:
    halved when the residual grows, raised 25% (capped at 1) after five
    consecutive shrinks. Non-convergence returns converged=False with the
    best iterate rather than raising.

    On success the full state is rebuilt (slaved tech-2 adoption, both
    dissatisfied pools, response opinions, susceptibles identically zero)
    and checked against the per-node population identity.
    """
    if not cfg.validation.passed:
        raise ValueError(f"config fails validation: {cfg.validation}")
    _require_positive("delta1", cfg.tech1.delta)
    _require_positive("delta2", cfg.tech2.delta)
    _require_positive("x0 (tech1)", cfg.tech1.x0)
    _require_positive("x0 (tech2)", cfg.tech2.x0)
    if tol <= 0:
        raise ValueError("tol must be positive")

    inner_tol = tol / 10.0
    ratio = _delta_ratio(cfg)
    floor = solver_floor(cfg, inner_tol)

    a = np.clip(0.5 * (floor + 1.0) if a0 is None else np.asarray(a0, dtype=float),
                floor, 1.0)

    eta, eta_min, eta_max = 0.2, 0.2, 0.2
    halvings = raises_ = shrinks = 0
    fa = fixed_point_map(cfg, a, inner_tol, deterministic_sum)
    res = float(np.abs(a - fa).max())
    best_a, best_res = a, res
    iterations = 0
    while iterations < max_iter and res > tol:
        iterations += 1
        a = np.clip((1.0 - eta) * a + eta * fa, floor, 1.0)
        fa = fixed_point_map(cfg, a, inner_tol, deterministic_sum)
        new_res = float(np.abs(a - fa).max())
        if new_res > res:
            eta = 0.5 * eta
            halvings += 1
            shrinks = 0
        else:
            shrinks += 1
            if shrinks >= 5:
                eta = min(1.0, 1.25 * eta)
                raises_ += 1
                shrinks = 0
        eta_min, eta_max = min(eta_min, eta), max(eta_max, eta)
        res = new_res
        if res < best_res:
            best_a, best_res = a, res
    converged = res <= tol
    if not converged and best_res < res:
        a, res = best_a, best_res

    x1s, x2s = opinion_response(cfg, a, inner_tol, deterministic_sum)
    state, ratio_err, simplex_err = _reconstruct(cfg, a, x1s, x2s, ratio)
    if converged and simplex_err > 10.0 * tol:
        raise RuntimeError(
            f"reconstructed equilibrium misses the population identity by "
            f"{simplex_err:.3e} (> 10*tol); config and tolerance are inconsistent"
        )
    on_boundary = bool(((a <= floor) & (floor > 0.0)).any() or (a >= 1.0).any())
    return Equilibrium(
        state=state,
        kind="adoption-diffused",
        residual=res,
        iterations=iterations,
        converged=converged,
        lower_bound=floor,
        ratio_check_max_err=ratio_err,
        simplex_max_err=simplex_err,
        boundary_contact=on_boundary,
        eta_trace=EtaTrace(final=eta, minimum=eta_min, maximum=eta_max,
                           halvings=halvings, raises_=raises_),
    )


@dataclass(frozen=True, eq=False)
class UniquenessReport:
    """Multi-start corroboration that the diffused fixed point is unique."""

    runs: int
    converged_runs: int
    max_pairwise_distance: float
    fixed_points: tuple[np.ndarray, ...] = field(compare=False, default=())
    failed_starts: tuple[int, ...] = ()

    def corroborates(self, tol: float) -> bool:
        return self.converged_runs >= 1 and self.max_pairwise_distance <= 10.0 * tol


def multistart_uniqueness(
    cfg: ModelConfig,
    tol: float = DEFAULT_TOL,
    starts: int = 8,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
) -> UniquenessReport:
    """Solve from random interior points plus both box corners and compare.

    A maximum pairwise distance within 10*tol across all converged runs is
    the numerical corroboration that one fixed point attracts them all.
    """
    if starts < 0:
        raise ValueError("starts must be nonnegative")
    floor = solver_floor(cfg, tol / 10.0)
    rng = np.random.Generator(np.random.PCG64(seed))
    points = [floor, np.ones(cfg.n)]
    points += [floor + (1.0 - floor) * rng.random(cfg.n) for _ in range(starts)]

    solutions: list[np.ndarray] = []
    failed: list[int] = []
    for idx, p in enumerate(points):
        eq = solve_adoption_diffused(cfg, tol=tol, max_iter=max_iter, a0=p)
        if eq.converged:
            solutions.append(eq.state.a1)
        else:
            failed.append(idx)

    worst = 0.0
    for i in range(len(solutions)):
        for j in range(i + 1, len(solutions)):
            worst = max(worst, float(np.abs(solutions[i] - solutions[j]).max()))
    return UniquenessReport(
        runs=len(points),
        converged_runs=len(solutions),
        max_pairwise_distance=worst,
        fixed_points=tuple(solutions),
        failed_starts=tuple(failed),
    )
