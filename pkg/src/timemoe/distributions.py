"""Finite discrete joint distributions and lag-windowed empirical datasets.

A :class:`SequenceBundle` holds aligned multimodal sequences plus a target
sequence.  :func:`build_lag_dataset` extracts source observations at a fixed
lag behind each target step, together with a bounded window of target history
used as the conditioning context; :func:`conditional_joint` turns that into
one empirical joint table per observed context.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RARE_CONTEXT = "rare"


class EmptyDataError(ValueError):
    pass


class LagRangeError(ValueError):
    pass


@dataclass(frozen=True)
class JointDistribution:
    """Normalized probability table over (x1, x2, y)."""

    prob: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.prob, dtype=np.float64)
        if p.ndim != 3:
            raise ValueError(f"expected a 3-d table, got shape {p.shape}")
        if (p < 0).any():
            raise ValueError("negative probability entry")
        total = p.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "prob", p)
        self.prob.setflags(write=False)

    @property
    def support(self):
        return self.prob.shape

    def marginal_x1y(self) -> np.ndarray:
        return self.prob.sum(axis=1)

    def marginal_x2y(self) -> np.ndarray:
        return self.prob.sum(axis=0)

    def marginal_y(self) -> np.ndarray:
        return self.prob.sum(axis=(0, 1))

    def marginal_x1x2(self) -> np.ndarray:
        return self.prob.sum(axis=2)


def from_counts(counts) -> JointDistribution:
    """Normalize a 3-d nonnegative count table into a JointDistribution."""
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 3:
        raise ValueError(f"expected a 3-d count table, got shape {c.shape}")
    if (c < 0).any():
        raise ValueError("negative count")
    total = c.sum()
    if total == 0:
        raise EmptyDataError("all counts are zero")
    p = c / total
    return JointDistribution(p / p.sum())


@dataclass
class SequenceBundle:
    """Aligned multimodal sequences and a target sequence of equal length.

    Each modality is either a length-n integer array of discrete symbols or
    an (n, d) float array of features; the target is always discrete.
    """

    modalities: dict[str, np.ndarray]
    target: np.ndarray
    alphabet_sizes: dict[str, int] = field(default_factory=dict)
    n_classes: int = 0

    def __post_init__(self):
        self.target = np.asarray(self.target)
        n = len(self.target)
        norm = {}
        for name, seq in self.modalities.items():
            seq = np.asarray(seq)
            if len(seq) != n:
                raise ValueError(
                    f"modality {name!r} has length {len(seq)}, target has {n}")
            if seq.ndim == 1 and np.issubdtype(seq.dtype, np.integer):
                size = self.alphabet_sizes.get(name, int(seq.max()) + 1 if n else 0)
                if seq.size and (seq.min() < 0 or seq.max() >= size):
                    raise ValueError(f"modality {name!r} symbols outside alphabet")
                self.alphabet_sizes[name] = size
            norm[name] = seq
        self.modalities = norm
        if self.n_classes == 0:
            self.n_classes = int(self.target.max()) + 1 if n else 0
        if self.target.size and (self.target.min() < 0 or self.target.max() >= self.n_classes):
            raise ValueError("target symbols outside declared class range")

    def __len__(self) -> int:
        return len(self.target)

    @property
    def names(self) -> list[str]:
        return list(self.modalities)

    def is_discrete(self, name: str) -> bool:
        return self.modalities[name].ndim == 1

    def slice(self, start: int, stop: int) -> "SequenceBundle":
        return SequenceBundle(
            {m: seq[start:stop] for m, seq in self.modalities.items()},
            self.target[start:stop],
            alphabet_sizes=dict(self.alphabet_sizes),
            n_classes=self.n_classes,
        )


@dataclass
class LagDataset:
    """Paired source observations at lag tau behind each target step."""

    tau: int
    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray
    contexts: list[tuple]
    markov_order: int
    sizes: tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.y)


def build_lag_dataset(bundle: SequenceBundle, pair: tuple[str, str],
                      tau: int, k: int) -> LagDataset:
    """Emit (x1[t-tau], x2[t-tau], y[t], y[t-k..t-1]) for t = tau+1 .. n.

    Timesteps are 1-based in this description; contexts shorter than k occur
    only when the available history is shorter.  Requires discrete modalities
    (quantize features first).
    """
    m1, m2 = pair
    if tau < 0 or k < 0:
        raise LagRangeError("lag and Markov order must be nonnegative")
    n = len(bundle)
    if tau > n - 2:
        raise LagRangeError(f"lag {tau} too large for sequence length {n}")
    for name in pair:
        if not bundle.is_discrete(name):
            raise ValueError(f"modality {name!r} is not discrete; quantize first")
    s1, s2 = bundle.modalities[m1], bundle.modalities[m2]
    y = bundle.target
    # 0-based: target index t in [tau, n), sources at t - tau
    ts = np.arange(tau, n)
    x1 = s1[ts - tau]
    x2 = s2[ts - tau]
    yt = y[ts]
    contexts = [tuple(y[max(0, t - k):t]) for t in ts]
    return LagDataset(
        tau=tau, x1=x1, x2=x2, y=yt, contexts=contexts, markov_order=k,
        sizes=(bundle.alphabet_sizes[m1], bundle.alphabet_sizes[m2], bundle.n_classes),
    )


def conditional_joint(ds: LagDataset, min_context_count: int = 5
                      ) -> list[tuple[tuple, float, JointDistribution]]:
    """One empirical joint per observed target-history context.

    Contexts observed fewer than ``min_context_count`` times are pooled into a
    single rare-context bucket.  Weights are empirical context probabilities
    and sum to 1.
    """
    if len(ds) == 0:
        raise EmptyDataError("empty lag dataset")
    groups: dict[tuple, list[int]] = {}
    for i, ctx in enumerate(ds.contexts):
        groups.setdefault(ctx, []).append(i)
    merged: dict[tuple, list[int]] = {}
    rare: list[int] = []
    for ctx, idx in groups.items():
        if len(idx) < min_context_count and len(groups) > 1:
            rare.extend(idx)
        else:
            merged[ctx] = idx
    if rare:
        merged.setdefault((RARE_CONTEXT,), []).extend(sorted(rare))
    total = len(ds)
    out = []
    for ctx in sorted(merged, key=repr):
        idx = merged[ctx]
        counts = np.zeros(ds.sizes)
        np.add.at(counts, (ds.x1[idx], ds.x2[idx], ds.y[idx]), 1.0)
        out.append((ctx, len(idx) / total, from_counts(counts)))
    return out


def quantize(features: np.ndarray, bins: int = 4) -> np.ndarray:
    """Per-dimension equal-frequency binning of (n, d) features to symbols.

    Multi-dimensional features are flattened to a single alphabet of size
    bins**d by mixed-radix combination.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    n, d = f.shape
    codes = np.zeros(n, dtype=np.int64)
    for j in range(d):
        edges = np.quantile(f[:, j], np.linspace(0, 1, bins + 1)[1:-1])
        codes = codes * bins + np.searchsorted(edges, f[:, j], side="right")
    return codes


# ---------------------------------------------------------------------------
# CSV sequence format: one row per timestep, columns t, <modality>_<dim>..., y


def write_csv(bundle: SequenceBundle, path) -> None:
    path = Path(path)
    header = ["t"]
    columns = []
    for name in bundle.names:
        seq = bundle.modalities[name]
        width = 1 if seq.ndim == 1 else seq.shape[1]
        for dim in range(width):
            header.append(f"{name}_{dim}")
        columns.append(seq if seq.ndim == 2 else seq[:, None])
    header.append("y")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(len(bundle)):
            row = [t]
            for seq in columns:
                for v in seq[t]:
                    row.append(int(v) if float(v).is_integer() else repr(float(v)))
            row.append(int(bundle.target[t]))
            writer.writerow(row)


def read_csv(path) -> SequenceBundle:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    if header[0] != "t" or header[-1] != "y":
        raise ValueError(f"{path}: header must start with 't' and end with 'y'")
    groups: dict[str, list[int]] = {}
    for col, label in enumerate(header[1:-1], start=1):
        name, _, dim = label.rpartition("_")
        if not name or not dim.isdigit():
            raise ValueError(f"{path}: column {label!r} is not <modality>_<dim>")
        groups.setdefault(name, []).append(col)
    raw = np.array([[float(v) for v in row] for row in rows])
    modalities = {}
    for name, cols in groups.items():
        block = raw[:, cols]
        if block.shape[1] == 1 and np.allclose(block, np.round(block)):
            modalities[name] = block[:, 0].astype(np.int64)
        else:
            modalities[name] = block
    target = raw[:, -1]
    if not np.allclose(target, np.round(target)):
        raise ValueError(f"{path}: target column must be integer class labels")
    return SequenceBundle(modalities, target.astype(np.int64))
