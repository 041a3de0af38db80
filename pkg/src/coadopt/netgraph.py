"""Directed weighted interaction networks and their structural checks.

Both network layers of the model (physical contact and social influence) are
plain dense nonnegative matrices wrapped in :class:`WeightedDigraph`. Entry
``weights[i, j]`` is the influence node ``j`` exerts on node ``i``, so row
``i`` lists the in-neighbours node ``i`` listens to.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class SpectralRadiusError(RuntimeError):
    """Power iteration did not converge; carries the best estimate seen."""

    def __init__(self, message: str, estimate: float, residual: float):
        super().__init__(message)
        self.estimate = estimate
        self.residual = residual


def _frozen_matrix(weights) -> np.ndarray:
    w = np.array(weights, dtype=float, copy=True)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weights must be a square matrix, got shape {w.shape}")
    if w.shape[0] < 1:
        raise ValueError("graph needs at least one node")
    if not np.isfinite(w).all():
        raise ValueError("weights must be finite")
    if (w < 0).any():
        raise ValueError("weights must be nonnegative")
    w.flags.writeable = False
    return w


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """Immutable dense directed graph; ``weights[i, j] > 0`` means j influences i."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen_matrix(self.weights))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def transposed(self) -> "WeightedDigraph":
        return WeightedDigraph(self.weights.T)


@dataclass(frozen=True)
class RowStochasticReport:
    passed: bool
    worst_deviation: float
    bad_rows: tuple[int, ...]


def check_row_stochastic(g: WeightedDigraph, tol: float = 1e-12) -> RowStochasticReport:
    """Report whether every row of the weight matrix sums to 1 within ``tol``."""
    dev = np.abs(g.weights.sum(axis=1) - 1.0)
    bad = np.flatnonzero(dev > tol)
    return RowStochasticReport(
        passed=bad.size == 0,
        worst_deviation=float(dev.max()),
        bad_rows=tuple(int(i) for i in bad),
    )


def row_normalized(weights) -> np.ndarray:
    """Divide each row by its sum. Rows of all zeros are rejected."""
    w = np.array(weights, dtype=float)
    sums = w.sum(axis=1)
    zero = np.flatnonzero(sums == 0.0)
    if zero.size:
        raise ValueError(f"cannot row-normalize: zero rows {zero.tolist()}")
    return w / sums[:, None]


def _reach_from(adj_rows: np.ndarray, start: int) -> np.ndarray:
    """Boolean reach set from ``start`` where adj_rows[u] lists successors of u."""
    n = adj_rows.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(adj_rows[u]):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return seen


def is_irreducible(g: WeightedDigraph) -> bool:
    """True iff the positive-weight directed graph is strongly connected.

    Uses forward plus backward reachability from node 0 (two O(n + |E|)
    traversals). A single node counts as irreducible regardless of its
    self-loop.
    """
    if g.n == 1:
        return True
    adj = g.weights > 0
    if not _reach_from(adj, 0).all():
        return False
    return _reach_from(adj.T, 0).all()


def anchored_reachability(g: WeightedDigraph, anchored) -> np.ndarray:
    """Which nodes reach an anchored node through their chain of influencers.

    Node ``i`` directly listens to ``j`` when ``weights[i, j] > 0``; entry
    ``i`` of the result is True iff some anchored node can be found by
    following such listening links from ``i`` (a node counts as reaching
    itself).
    """
    anchored = np.asarray(anchored, dtype=bool)
    if anchored.shape != (g.n,):
        raise ValueError(f"anchored must have length {g.n}")
    adj = g.weights > 0
    reached = anchored.copy()
    frontier = np.flatnonzero(reached)
    while frontier.size:
        # listeners of the frontier: i with adj[i, j] for some reached j
        listeners = adj[:, frontier].any(axis=1) & ~reached
        reached |= listeners
        frontier = np.flatnonzero(listeners)
    return reached


def spectral_radius(m, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Dominant-root estimate of a nonnegative matrix by power iteration.

    Iterates on ``m + sigma*I`` from the all-ones vector; the diagonal shift
    leaves the Perron root in place (shifted by sigma) while breaking the
    periodicity that stalls plain power iteration on cycle-like graphs.
    For an irreducible matrix the min/max Rayleigh ratios bracket the true
    root, so the returned value is within ``tol`` of it. For reducible input
    the bracket need not close and the stabilized max-ratio is returned as a
    plain estimate.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if (m < 0).any():
        raise ValueError("matrix must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    n = m.shape[0]
    scale = float(np.abs(m).sum(axis=1).max())
    if scale == 0.0:
        return 0.0
    sigma = 0.5 * scale
    irreducible = is_irreducible(WeightedDigraph(m))

    x = np.ones(n)
    estimate = scale
    stable = 0
    for _ in range(max_iter):
        y = m @ x + sigma * x
        ratios = y / x  # x stays > 0: y >= sigma*x entrywise
        lo, hi = float(ratios.min()), float(ratios.max())
        if irreducible and hi - lo <= tol:
            return 0.5 * (lo + hi) - sigma
        new_estimate = hi - sigma
        if not irreducible:
            stable = stable + 1 if abs(new_estimate - estimate) <= tol else 0
            if stable >= 10:
                return new_estimate
        estimate = new_estimate
        x = y / hi
    raise SpectralRadiusError(
        f"power iteration did not converge in {max_iter} iterations",
        estimate=estimate,
        residual=hi - lo,
    )


def load_edge_csv(path, n: int | None = None, normalize: bool = False) -> WeightedDigraph:
    """Load a directed graph from an edge list CSV with header ``src,dst,weight``.

    A line ``src,dst,w`` stores ``weights[dst, src] = w`` (src influences dst).
    Node indices are 0-based; negative weights and out-of-range indices are
    rejected. With ``normalize=True`` the matrix is row-normalized on load.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["src", "dst", "weight"]:
            raise ValueError(f"{path}: expected header 'src,dst,weight'")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                src, dst, w = int(rec[0]), int(rec[1]), float(rec[2])
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed edge record {rec!r}") from exc
            if w < 0:
                raise ValueError(f"{path}:{lineno}: negative weight {w}")
            rows.append((src, dst, w))

    if n is None:
        if not rows:
            raise ValueError(f"{path}: empty edge list and no node count given")
        n = 1 + max(max(s, d) for s, d, _ in rows)
    for src, dst, _ in rows:
        if not (0 <= src < n and 0 <= dst < n):
            raise ValueError(f"edge ({src},{dst}) out of range for n={n}")

    weights = np.zeros((n, n))
    for src, dst, w in rows:
        weights[dst, src] += w
    if normalize:
        weights = row_normalized(weights)
    return WeightedDigraph(weights)


def save_edge_csv(g: WeightedDigraph, path) -> None:
    """Write the positive entries of the graph as an edge list CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "weight"])
        for dst, src in zip(*np.nonzero(g.weights)):
            writer.writerow([int(src), int(dst), repr(float(g.weights[dst, src]))])
