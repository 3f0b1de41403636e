"""Per-lag directed information and its redundancy/uniqueness/synergy split.

For each lag the empirical lag dataset is grouped by target-history context;
the plug-in joint distribution of every context is decomposed exactly and the
results are combined by context weight.  Per-step (normalized) values divide
the cumulative sum by the number of contributing timesteps, making lags
comparable; both forms are exposed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pid
from .distributions import SequenceBundle, build_lag_dataset, conditional_joint


class EstimationError(RuntimeError):
    pass


@dataclass
class RusTrajectory:
    """Per-lag interaction components for one modality pair, in bits."""

    pair: tuple[str, str]
    lags: list[int]
    redundancy: list[float]
    unique_x1: list[float]
    unique_x2: list[float]
    synergy: list[float]
    di: list[float]
    normalized: bool
    markov_order: int
    sample_counts: list[int] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for tau_idx in range(len(self.lags)):
            total = (self.redundancy[tau_idx] + self.unique_x1[tau_idx]
                     + self.unique_x2[tau_idx] + self.synergy[tau_idx])
            if abs(total - self.di[tau_idx]) > 1e-6:
                raise ValueError(
                    f"component sum {total} != DI {self.di[tau_idx]} at lag "
                    f"{self.lags[tau_idx]}")
            floor = min(self.redundancy[tau_idx], self.unique_x1[tau_idx],
                        self.unique_x2[tau_idx], self.synergy[tau_idx])
            if floor < -1e-9:
                raise ValueError(f"negative component {floor} at lag {self.lags[tau_idx]}")

    def component(self, name: str) -> list[float]:
        return {"R": self.redundancy, "U1": self.unique_x1, "U2": self.unique_x2,
                "S": self.synergy, "DI": self.di}[name]

    def uniqueness_of(self, modality: str) -> list[float]:
        if modality == self.pair[0]:
            return self.unique_x1
        if modality == self.pair[1]:
            return self.unique_x2
        raise KeyError(f"{modality!r} not in pair {self.pair}")

    def to_json(self) -> str:
        return json.dumps({
            "pair": list(self.pair),
            "lags": self.lags,
            "R": self.redundancy,
            "U1": self.unique_x1,
            "U2": self.unique_x2,
            "S": self.synergy,
            "DI": self.di,
            "normalized": self.normalized,
            "k": self.markov_order,
        })

    @classmethod
    def from_json(cls, text: str) -> "RusTrajectory":
        doc = json.loads(text)
        return cls(pair=tuple(doc["pair"]), lags=doc["lags"], redundancy=doc["R"],
                   unique_x1=doc["U1"], unique_x2=doc["U2"], synergy=doc["S"],
                   di=doc["DI"], normalized=doc["normalized"], markov_order=doc["k"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "RusTrajectory":
        return cls.from_json(Path(path).read_text())


def _context_groups(bundle: SequenceBundle, pair, tau: int, k: int,
                    min_context_count: int):
    ds = build_lag_dataset(bundle, pair, tau, k)
    groups = conditional_joint(ds, min_context_count=min_context_count)
    if len(ds) < min_context_count:
        raise EstimationError(
            f"only {len(ds)} samples at lag {tau}; below merge threshold")
    return ds, groups


def directed_information(bundle: SequenceBundle, pair, tau: int, k: int,
                         normalized: bool = True,
                         min_context_count: int = 5) -> float:
    """Plug-in estimate of the lag-tau information flow, in bits.

    The cumulative form sums one conditional term per target step; the
    normalized form divides by the number of steps.
    """
    ds, groups = _context_groups(bundle, pair, tau, k, min_context_count)
    per_step = sum(w * pid.mi_sources_y(dist.prob) for _, w, dist in groups)
    return per_step if normalized else per_step * len(ds)


def decompose_lag(bundle: SequenceBundle, pair, tau: int, k: int,
                  normalized: bool = True, min_context_count: int = 5,
                  tol: float = 1e-9):
    """Per-lag (R, U1, U2, S) in bits, context-weighted like the DI sum."""
    ds, groups = _context_groups(bundle, pair, tau, k, min_context_count)
    acc = np.zeros(4)
    for _, w, dist in groups:
        acc += w * np.array(pid.decompose(dist, tol=tol).as_tuple())
    if not normalized:
        acc *= len(ds)
    return tuple(float(v) for v in acc)


def compute_trajectory(bundle: SequenceBundle, pair, max_lag: int, k: int,
                       normalized: bool = True, min_context_count: int = 5,
                       tol: float = 1e-9) -> RusTrajectory:
    """Trajectory over lags 1..max_lag for one modality pair."""
    if max_lag > len(bundle) - 2:
        raise EstimationError(
            f"max lag {max_lag} too large for sequence length {len(bundle)}")
    lags = list(range(1, max_lag + 1))
    comps = {key: [] for key in ("R", "U1", "U2", "S", "DI")}
    counts = []
    for tau in lags:
        ds, groups = _context_groups(bundle, pair, tau, k, min_context_count)
        acc = np.zeros(4)
        di = 0.0
        for _, w, dist in groups:
            acc += w * np.array(pid.decompose(dist, tol=tol).as_tuple())
            di += w * pid.mi_sources_y(dist.prob)
        scale = 1.0 if normalized else len(ds)
        # report DI as the component sum so the identity is exact after clamping
        comps["R"].append(acc[0] * scale)
        comps["U1"].append(acc[1] * scale)
        comps["U2"].append(acc[2] * scale)
        comps["S"].append(acc[3] * scale)
        comps["DI"].append(float(acc.sum() * scale))
        counts.append(len(ds))
    return RusTrajectory(
        pair=tuple(pair), lags=lags, redundancy=comps["R"], unique_x1=comps["U1"],
        unique_x2=comps["U2"], synergy=comps["S"], di=comps["DI"],
        normalized=normalized, markov_order=k, sample_counts=counts)


def aggregate_uniqueness(trajectories: list[RusTrajectory]) -> dict[str, list[float]]:
    """Per-modality uniqueness: mean of U_m over all pairs containing m."""
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for traj in trajectories:
        for modality in traj.pair:
            u = np.asarray(traj.uniqueness_of(modality))
            if modality in sums:
                sums[modality] = sums[modality] + u
                counts[modality] += 1
            else:
                sums[modality] = u.copy()
                counts[modality] = 1
    return {m: list(sums[m] / counts[m]) for m in sums}
