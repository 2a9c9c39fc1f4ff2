"""Multi-start search for several equilibria."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import NetworkModel
from ._common import FixedPointResult, PreconditionError, SolverOptions
from .generic import solve_bracket, solve_damped


@dataclass
class ScanReport:
    starts: np.ndarray
    results: list[FixedPointResult]
    clusters: list[np.ndarray]
    members: list[list[int]]
    bracket: FixedPointResult | None
    seed: int
    notes: list[str] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_failed(self) -> int:
        return sum(not r.converged for r in self.results)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_starts": len(self.results),
            "n_converged": len(self.results) - self.n_failed,
            "n_clusters": self.n_clusters,
            "clusters": [c.tolist() for c in self.clusters],
            "members": self.members,
            "failed_starts": [i for i, r in enumerate(self.results) if not r.converged],
            "bracket": None if self.bracket is None else self.bracket.to_dict(),
            "notes": self.notes,
        }


def _rel_dist(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def cluster(points: list[np.ndarray], rtol: float = 1e-6) -> tuple[list[np.ndarray], list[list[int]]]:
    """Greedy clustering by relative sup distance to each cluster's first member."""
    reps: list[np.ndarray] = []
    members: list[list[int]] = []
    for i, z in enumerate(points):
        for c, rep in enumerate(reps):
            if _rel_dist(z, rep) < rtol:
                members[c].append(i)
                break
        else:
            reps.append(z)
            members.append([i])
    return reps, members


def scan_multistability(model: NetworkModel, n_starts: int = 32, seed: int = 0,
                        opts: SolverOptions | None = None, rtol: float = 1e-6) -> ScanReport:
    """Damped iteration from ``n_starts`` log-uniform points in ``[1e-3, 1e3]^K``
    plus the bracketing iteration; converged results are clustered.

    More than one cluster is evidence of several equilibria. Starts that do
    not converge are reported, not raised.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    opts = opts or SolverOptions()
    rng = np.random.default_rng(seed)
    starts = 10.0 ** rng.uniform(-3.0, 3.0, size=(n_starts, model.K))
    results = [solve_damped(model, z0, opts) for z0 in starts]
    notes = []
    try:
        bracket = solve_bracket(model, opts)
    except PreconditionError as exc:
        bracket = None
        notes.append(f"bracketing iteration skipped: {exc}")
    pool = [r.z_star for r in results if r.converged]
    if bracket is not None and bracket.converged:
        pool.append(bracket.z_star)
    reps, members = cluster(pool, rtol)
    if bracket is not None and not bracket.converged:
        notes.append("bracket did not collapse")
    return ScanReport(starts, results, reps, members, bracket, seed, notes)
