"""Model parameters, system state, validation, and seeded instance generation.

A model instance couples two network layers with per-node rate vectors for
each of the two competing technologies. Configs and states are immutable
value objects; all semantic checking goes through :func:`validate_config`
and :func:`validate_state`, which return reports instead of raising so the
CLI can itemize violations.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .netgraph import (
    WeightedDigraph,
    anchored_reachability,
    check_row_stochastic,
    is_irreducible,
    load_edge_csv,
    row_normalized,
)

# Identifier of the generator behind random_instance; recorded in run
# metadata so results are portable only across matching generators.
PRNG_ID = "numpy.PCG64"

STATE_BLOCKS = ("s", "a1", "a2", "d1", "d2", "x1", "x2")


def _vector(v, n: int, name: str) -> np.ndarray:
    arr = np.array(v, dtype=float, copy=True)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TechParams:
    """Per-node rates for one technology.

    beta: adoption susceptibility rate, scaled by opinion.
    gamma: switch rate out of the rival's dissatisfied pool, scaled by opinion.
    delta: dissatisfaction rate (pure user-experience, opinion-independent).
    lam: weight of social neighbours in the opinion update.
    xi: weight of observed adoption in the opinion update.
    x0: initial opinion predisposition the update stays anchored to.
    """

    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.beta).shape[0]
        for name in ("beta", "gamma", "delta", "lam", "xi", "x0"):
            object.__setattr__(self, name, _vector(getattr(self, name), n, name))

    @property
    def n(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    violations: tuple[str, ...]

    def __str__(self) -> str:
        if self.passed:
            return "ok"
        return "; ".join(self.violations)


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """Two network layers plus the rate vectors of both technologies."""

    physical: WeightedDigraph
    social: WeightedDigraph
    tech1: TechParams
    tech2: TechParams

    def __post_init__(self):
        n = self.physical.n
        if self.social.n != n or self.tech1.n != n or self.tech2.n != n:
            raise ValueError("physical, social, tech1 and tech2 must agree on n")

    @property
    def n(self) -> int:
        return self.physical.n

    def tech(self, k: int) -> TechParams:
        if k == 1:
            return self.tech1
        if k == 2:
            return self.tech2
        raise ValueError(f"technology index must be 1 or 2, got {k}")

    @cached_property
    def validation(self) -> ValidationReport:
        return validate_config(self)


@dataclass(frozen=True, eq=False)
class SystemState:
    """Per-node compartment fractions and opinions at one time step."""

    s: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.s).shape[0]
        for name in STATE_BLOCKS:
            object.__setattr__(self, name, _vector(getattr(self, name), n, name))

    @property
    def n(self) -> int:
        return self.s.shape[0]

    def block(self, name: str) -> np.ndarray:
        if name not in STATE_BLOCKS:
            raise KeyError(name)
        return getattr(self, name)

    def as_matrix(self) -> np.ndarray:
        """Stack the seven blocks into a (7, n) array, block order fixed."""
        return np.stack([getattr(self, b) for b in STATE_BLOCKS])

    @staticmethod
    def from_matrix(m) -> "SystemState":
        m = np.asarray(m, dtype=float)
        return SystemState(*(m[i] for i in range(7)))

    def compartment_sum(self) -> np.ndarray:
        return self.s + self.a1 + self.a2 + self.d1 + self.d2


def validate_config(cfg: ModelConfig, tol: float = 1e-12) -> ValidationReport:
    """Check every structural requirement the dynamics and solvers rely on.

    Both layers row-stochastic, physical layer strongly connected, xi > 0,
    every node socially chained to an anchor (a node with lam < 1 and
    positive initial opinion) for each technology, combined adoption rates
    in (0,1), lam + xi < 1, gamma strictly inside (0,1), delta in [0,1],
    plus plain box constraints on beta, lam and x0.
    """
    v: list[str] = []

    for name, g in (("physical", cfg.physical), ("social", cfg.social)):
        rep = check_row_stochastic(g, tol)
        if not rep.passed:
            v.append(
                f"{name} graph is not row-stochastic: worst deviation "
                f"{rep.worst_deviation:.3e} at rows {list(rep.bad_rows)[:5]}"
            )
    if not is_irreducible(cfg.physical):
        v.append("physical graph is not strongly connected")

    for k in (1, 2):
        p = cfg.tech(k)
        if (p.xi <= 0).any():
            v.append(f"tech{k}: xi must be strictly positive")
        if (p.lam < 0).any():
            v.append(f"tech{k}: lambda must be nonnegative")
        if (p.lam + p.xi >= 1).any():
            bad = np.flatnonzero(p.lam + p.xi >= 1)
            v.append(f"tech{k}: lambda + xi must be < 1 (nodes {bad.tolist()[:5]})")
        if ((p.gamma <= 0) | (p.gamma >= 1)).any():
            v.append(f"tech{k}: gamma must lie strictly inside (0,1)")
        if ((p.delta < 0) | (p.delta > 1)).any():
            v.append(f"tech{k}: delta must lie in [0,1]")
        if ((p.beta < 0) | (p.beta > 1)).any():
            v.append(f"tech{k}: beta must lie in [0,1]")
        if ((p.x0 < 0) | (p.x0 > 1)).any():
            v.append(f"tech{k}: x0 must lie in [0,1]")
        anchored = (p.lam < 1) & (p.x0 > 0)
        reach = anchored_reachability(cfg.social, anchored)
        if not reach.all():
            bad = np.flatnonzero(~reach)
            v.append(
                f"tech{k}: nodes {bad.tolist()[:5]} reach no anchor "
                "(lambda < 1 and x0 > 0) in the social graph"
            )

    bsum = cfg.tech1.beta + cfg.tech2.beta
    bad = np.flatnonzero((bsum <= 0) | (bsum >= 1))
    for i in bad[:5]:
        v.append(f"beta sum = {bsum[i]:.6g} not in (0,1) at node {int(i)}")

    return ValidationReport(passed=not v, violations=tuple(v))


def validate_state(st: SystemState, tol: float = 1e-9) -> ValidationReport:
    """Box constraint on all seven blocks plus per-node compartment sum of 1."""
    v: list[str] = []
    m = st.as_matrix()
    low, high = float(m.min()), float(m.max())
    if low < -tol or high > 1 + tol:
        v.append(f"box violation: entries span [{low:.6g}, {high:.6g}]")
    dev = np.abs(st.compartment_sum() - 1.0)
    if (dev > tol).any():
        i = int(dev.argmax())
        v.append(f"compartment sum off by {dev[i]:.3e} at node {i}")
    return ValidationReport(passed=not v, violations=tuple(v))


# ---------------------------------------------------------------------------
# Random instance generation


@dataclass(frozen=True)
class ParameterRanges:
    """Closed sampling intervals per parameter and technology.

    Defaults put technology 1 in the aggressive-but-lower-quality corner
    (higher adoption rate, higher dissatisfaction) and technology 2 in the
    opposite one, while guaranteeing every sampled instance validates.
    """

    beta1: tuple[float, float] = (0.25, 0.45)
    beta2: tuple[float, float] = (0.15, 0.35)
    gamma1: tuple[float, float] = (0.3, 0.7)
    gamma2: tuple[float, float] = (0.3, 0.7)
    delta1: tuple[float, float] = (0.15, 0.3)
    delta2: tuple[float, float] = (0.05, 0.15)
    lam1: tuple[float, float] = (0.1, 0.4)
    lam2: tuple[float, float] = (0.1, 0.4)
    xi1: tuple[float, float] = (0.1, 0.4)
    xi2: tuple[float, float] = (0.1, 0.4)
    x01: tuple[float, float] = (0.3, 0.7)
    x02: tuple[float, float] = (0.3, 0.7)

    beta_sum_cap: float = 0.95
    lam_xi_cap: float = 0.9


DEFAULT_RANGES = ParameterRanges()

# Aggressive-marketing scenario: tech 1 acquires users much faster on every
# node but churns them harder, so it leads early and still loses the long
# run. The default ranges never produce that early lead (dissatisfaction
# drains the seed pool faster than exposure refills it), hence the disjoint
# beta intervals and milder deltas here.
CROSSOVER_RANGES = ParameterRanges(
    beta1=(0.55, 0.75),
    beta2=(0.10, 0.18),
    delta1=(0.06, 0.10),
    delta2=(0.015, 0.035),
)


class InfeasibleRangesError(ValueError):
    """Requested sampling ranges cannot guarantee a valid instance."""


def _check_ranges(r: ParameterRanges) -> None:
    def ordered(name):
        lo, hi = getattr(r, name)
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
            raise InfeasibleRangesError(f"range {name}=({lo}, {hi}) is not a valid interval")
        return lo, hi

    for name in ("beta1", "beta2"):
        lo, hi = ordered(name)
        if lo < 0 or hi > 1:
            raise InfeasibleRangesError(f"range {name} must lie inside [0,1]")
    b1lo, _ = getattr(r, "beta1")
    b2lo, _ = getattr(r, "beta2")
    if b1lo + b2lo >= r.beta_sum_cap:
        raise InfeasibleRangesError(
            f"beta1={r.beta1} and beta2={r.beta2}: smallest possible sum "
            f"{b1lo + b2lo:.3g} already reaches the cap {r.beta_sum_cap}"
        )
    if b1lo + b2lo <= 0:
        raise InfeasibleRangesError("beta ranges must allow a strictly positive sum")
    for name in ("gamma1", "gamma2"):
        lo, hi = ordered(name)
        if lo <= 0 or hi >= 1:
            raise InfeasibleRangesError(f"range {name} must lie strictly inside (0,1)")
    for name in ("delta1", "delta2"):
        lo, hi = ordered(name)
        if lo < 0 or hi > 1:
            raise InfeasibleRangesError(f"range {name} must lie inside [0,1]")
    for k in ("1", "2"):
        llo, _ = ordered(f"lam{k}")
        xlo, xhi = ordered(f"xi{k}")
        if llo < 0:
            raise InfeasibleRangesError(f"range lam{k} must be nonnegative")
        if xlo <= 0:
            raise InfeasibleRangesError(f"range xi{k} must be strictly positive")
        if llo + xlo > r.lam_xi_cap:
            raise InfeasibleRangesError(
                f"lam{k} and xi{k}: smallest possible sum exceeds the cap {r.lam_xi_cap}"
            )
    for name in ("x01", "x02"):
        lo, hi = ordered(name)
        if lo <= 0 or hi > 1:
            raise InfeasibleRangesError(f"range {name} must lie inside (0,1]")


def _sample_pair_capped(rng, lo1, hi1, lo2, hi2, cap, n, what):
    """Sample two vectors entrywise with a rejection cap on their sum."""
    v1 = rng.uniform(lo1, hi1, size=n)
    v2 = rng.uniform(lo2, hi2, size=n)
    for _ in range(10_000):
        bad = v1 + v2 >= cap if what == "beta" else v1 + v2 > cap
        if not bad.any():
            return v1, v2
        idx = np.flatnonzero(bad)
        v1[idx] = rng.uniform(lo1, hi1, size=idx.size)
        v2[idx] = rng.uniform(lo2, hi2, size=idx.size)
    raise InfeasibleRangesError(f"rejection sampling for {what} ranges did not terminate")


def _random_graph(rng, n: int, density: float) -> WeightedDigraph:
    """Directed Erdos-Renyi layer plus a ring, row-normalized.

    The ring edge i -> i+1 guarantees strong connectivity and a positive
    entry in every row before normalization.
    """
    mask = rng.random((n, n)) < density
    np.fill_diagonal(mask, False)
    weights = np.where(mask, rng.uniform(0.1, 1.0, size=(n, n)), 0.0)
    if n == 1:
        weights[0, 0] = 1.0
    else:
        for src in range(n):
            dst = (src + 1) % n
            if weights[dst, src] == 0.0:
                weights[dst, src] = 1.0
    return WeightedDigraph(row_normalized(weights))


def random_instance(
    n: int,
    seed: int,
    ranges: ParameterRanges = DEFAULT_RANGES,
    density: float = 0.2,
) -> ModelConfig:
    """Seeded random model instance that always validates.

    Identical (n, seed, ranges, density) yield bit-identical configs. The
    generator is numpy's PCG64 (see PRNG_ID).
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not (0 < density <= 1):
        raise ValueError("density must lie in (0, 1]")
    _check_ranges(ranges)
    rng = np.random.Generator(np.random.PCG64(seed))

    physical = _random_graph(rng, n, density)
    social = _random_graph(rng, n, density)

    b1, b2 = _sample_pair_capped(
        rng, *ranges.beta1, *ranges.beta2, ranges.beta_sum_cap, n, "beta"
    )
    techs = {}
    for k, (b, lam_r, xi_r, g_r, d_r, x_r) in {
        1: (b1, ranges.lam1, ranges.xi1, ranges.gamma1, ranges.delta1, ranges.x01),
        2: (b2, ranges.lam2, ranges.xi2, ranges.gamma2, ranges.delta2, ranges.x02),
    }.items():
        lam, xi = _sample_pair_capped(rng, *lam_r, *xi_r, ranges.lam_xi_cap, n, "lam+xi")
        techs[k] = TechParams(
            beta=b,
            gamma=rng.uniform(*g_r, size=n),
            delta=rng.uniform(*d_r, size=n),
            lam=lam,
            xi=xi,
            x0=rng.uniform(*x_r, size=n),
        )

    cfg = ModelConfig(physical=physical, social=social, tech1=techs[1], tech2=techs[2])
    rep = cfg.validation
    if not rep.passed:
        raise InfeasibleRangesError(f"sampled instance failed validation: {rep}")
    return cfg


def early_stage_state(cfg: ModelConfig, seed_fraction: float = 0.01, which=(1, 2)) -> SystemState:
    """Uniform early-diffusion state: small adopter pools, nobody dissatisfied.

    Every node starts with ``seed_fraction`` adopters of each technology in
    ``which``, the rest susceptible, and opinions at the configured
    predispositions.
    """
    which = tuple(sorted(set(which)))
    if any(k not in (1, 2) for k in which):
        raise ValueError(f"technologies must be a subset of {{1, 2}}, got {which}")
    total = seed_fraction * len(which)
    if not (0 < seed_fraction < 1) or total >= 1:
        raise ValueError("seed_fraction times the number of seeded technologies must be in (0,1)")
    n = cfg.n
    zeros = np.zeros(n)
    a1 = np.full(n, seed_fraction) if 1 in which else zeros
    a2 = np.full(n, seed_fraction) if 2 in which else zeros
    return SystemState(
        s=np.full(n, 1.0 - total),
        a1=a1,
        a2=a2,
        d1=zeros,
        d2=zeros,
        x1=cfg.tech1.x0,
        x2=cfg.tech2.x0,
    )


# ---------------------------------------------------------------------------
# Serialization

_TECH_KEYS = ("beta", "gamma", "delta", "lambda", "xi", "x0")


def _tech_to_dict(p: TechParams) -> dict:
    return {
        "beta": p.beta.tolist(),
        "gamma": p.gamma.tolist(),
        "delta": p.delta.tolist(),
        "lambda": p.lam.tolist(),
        "xi": p.xi.tolist(),
        "x0": p.x0.tolist(),
    }


def _tech_from_dict(d: dict, label: str) -> TechParams:
    missing = [k for k in _TECH_KEYS if k not in d]
    if missing:
        raise ValueError(f"{label}: missing arrays {missing}")
    return TechParams(
        beta=d["beta"],
        gamma=d["gamma"],
        delta=d["delta"],
        lam=d["lambda"],
        xi=d["xi"],
        x0=d["x0"],
    )


def config_to_dict(cfg: ModelConfig, meta: dict | None = None) -> dict:
    doc = {
        "n": cfg.n,
        "physical": cfg.physical.weights.tolist(),
        "social": cfg.social.weights.tolist(),
        "tech1": _tech_to_dict(cfg.tech1),
        "tech2": _tech_to_dict(cfg.tech2),
    }
    if meta:
        doc["meta"] = dict(meta)
    return doc


def _graph_from_field(value, base_dir: Path, n: int | None) -> WeightedDigraph:
    if isinstance(value, dict):
        path = Path(value["path"])
        if not path.is_absolute():
            path = base_dir / path
        return load_edge_csv(path, n=n, normalize=bool(value.get("normalize", False)))
    return WeightedDigraph(value)


def config_from_dict(doc: dict, base_dir: Path | str = ".") -> ModelConfig:
    base_dir = Path(base_dir)
    try:
        n = int(doc["n"])
        physical = _graph_from_field(doc["physical"], base_dir, n)
        social = _graph_from_field(doc["social"], base_dir, n)
        tech1 = _tech_from_dict(doc["tech1"], "tech1")
        tech2 = _tech_from_dict(doc["tech2"], "tech2")
    except KeyError as exc:
        raise ValueError(f"config document missing field {exc}") from exc
    cfg = ModelConfig(physical=physical, social=social, tech1=tech1, tech2=tech2)
    if cfg.n != n:
        raise ValueError(f"declared n={n} does not match arrays of length {cfg.n}")
    return cfg


def save_config(cfg: ModelConfig, path, meta: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg, meta), fh, indent=1)
        fh.write("\n")


def load_config(path) -> ModelConfig:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config document must be a JSON object")
    return config_from_dict(doc, base_dir=Path(path).parent)


def config_digest(cfg: ModelConfig) -> str:
    """SHA-256 of the canonical JSON form; stable across load/save cycles."""
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def save_state_csv(st: SystemState, path) -> None:
    with open(path, "w") as fh:
        fh.write("node," + ",".join(STATE_BLOCKS) + "\n")
        m = st.as_matrix()
        for i in range(st.n):
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in m[:, i]) + "\n")


def load_state_csv(path) -> SystemState:
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    cols = [data[b] for b in STATE_BLOCKS]
    return SystemState(*[np.atleast_1d(np.asarray(c, dtype=float)) for c in cols])
