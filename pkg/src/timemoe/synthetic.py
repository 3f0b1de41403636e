"""Multimodal sequence generators with planted lag-specific interactions.

Every rule drives the target from source symbols a fixed lag in the past and
flips the result with a configurable noise rate, so the information carried
through the planted channel is exactly the binary symmetric channel capacity
1 - H_b(noise).  Non-participating modalities are i.i.d. noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .distributions import SequenceBundle
from .temporal import RusTrajectory

RULES = ("lagged-copy", "lagged-redundant", "lagged-xor", "mixture")


class SpecValidationError(ValueError):
    """Invalid plant specification; message names the offending field."""


class UnsupportedRuleError(ValueError):
    pass


@dataclass
class PlantSpec:
    modalities: list[str]
    rule: str
    lag: int
    length: int
    seed: int
    noise: float = 0.0
    source: str | None = None            # lagged-copy
    pair: list[str] | None = None        # lagged-redundant / lagged-xor
    redundant_pair: list[str] | None = None   # mixture
    synergy_pair: list[str] | None = None     # mixture
    emit: str = "discrete"               # or "onehot"
    onehot_sigma: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.modalities or len(self.modalities) < 2:
            raise SpecValidationError("modalities: need at least two names")
        if len(set(self.modalities)) != len(self.modalities):
            raise SpecValidationError("modalities: names must be unique")
        if self.rule not in RULES:
            raise SpecValidationError(f"rule: {self.rule!r} not one of {RULES}")
        if self.lag < 1:
            raise SpecValidationError("lag: must be >= 1")
        if not 0.0 <= self.noise < 0.5:
            raise SpecValidationError("noise: must lie in [0, 0.5)")
        if self.length < self.lag + 2:
            raise SpecValidationError("length: too short for the planted lag")
        if self.emit not in ("discrete", "onehot"):
            raise SpecValidationError(f"emit: {self.emit!r} not discrete|onehot")
        if self.rule == "lagged-copy":
            if self.source not in self.modalities:
                raise SpecValidationError("source: must name a modality")
        elif self.rule in ("lagged-redundant", "lagged-xor"):
            if not self.pair or len(self.pair) != 2 \
                    or any(m not in self.modalities for m in self.pair):
                raise SpecValidationError("pair: must name two modalities")
        elif self.rule == "mixture":
            for name in ("redundant_pair", "synergy_pair"):
                value = getattr(self, name)
                if not value or len(value) != 2 \
                        or any(m not in self.modalities for m in value):
                    raise SpecValidationError(f"{name}: must name two modalities")
            shared = set(self.redundant_pair) & set(self.synergy_pair)
            if len(shared) != 1:
                raise SpecValidationError(
                    "synergy_pair: must share exactly one modality with redundant_pair")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PlantSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecValidationError(f"spec file: invalid JSON ({exc})") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise SpecValidationError(f"{sorted(unknown)[0]}: unknown field")
        missing = {"modalities", "rule", "lag", "length", "seed"} - set(doc)
        if missing:
            raise SpecValidationError(f"{sorted(missing)[0]}: missing field")
        return cls(**doc)


def _flip(bits: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    if eps <= 0:
        return bits
    return bits ^ (rng.random(bits.shape) < eps).astype(np.int64)


def generate(spec: PlantSpec) -> SequenceBundle:
    """Deterministic-per-seed bundle following the planted rule.

    The mixture rule gives the redundant-pair modalities 4-symbol alphabets
    (a shared bit plus a private bit) and emits 4-class labels: the high label
    bit copies the shared bit (pure redundancy between the pair), the low bit
    is the XOR of the shared member's private bit with the other synergy-pair
    modality (pure synergy, never revealed by the label alone).
    """
    rng = np.random.default_rng(spec.seed)
    n, tau = spec.length, spec.lag
    sources = {m: rng.integers(0, 2, size=n) for m in spec.modalities}
    alphabets = {m: 2 for m in spec.modalities}
    if spec.rule == "lagged-redundant":
        m1, m2 = spec.pair
        sources[m2] = sources[m1].copy()

    y = rng.integers(0, 2, size=n)
    if spec.rule == "lagged-copy":
        y[tau:] = _flip(sources[spec.source][:-tau].copy(), spec.noise, rng)
        n_classes = 2
    elif spec.rule == "lagged-redundant":
        y[tau:] = _flip(sources[spec.pair[0]][:-tau].copy(), spec.noise, rng)
        n_classes = 2
    elif spec.rule == "lagged-xor":
        m1, m2 = spec.pair
        y[tau:] = _flip(sources[m1][:-tau] ^ sources[m2][:-tau], spec.noise, rng)
        n_classes = 2
    else:  # mixture
        ra, rb = spec.redundant_pair
        shared_mod = (set(spec.redundant_pair) & set(spec.synergy_pair)).pop()
        other_mod = next(m for m in spec.synergy_pair if m != shared_mod)
        shared_bit = rng.integers(0, 2, size=n)
        private = {ra: rng.integers(0, 2, size=n), rb: rng.integers(0, 2, size=n)}
        for m in (ra, rb):
            sources[m] = 2 * shared_bit + private[m]
            alphabets[m] = 4
        bit_a = _flip(shared_bit[:-tau].copy(), spec.noise, rng)
        bit_b = _flip(private[shared_mod][:-tau] ^ sources[other_mod][:-tau],
                      spec.noise, rng)
        y = rng.integers(0, 4, size=n)
        y[tau:] = 2 * bit_a + bit_b
        n_classes = 4

    if spec.emit == "onehot":
        noise_rng = np.random.default_rng(spec.seed + 1)
        feats = {}
        for m in spec.modalities:
            onehot = np.eye(alphabets[m])[sources[m]]
            feats[m] = onehot + spec.onehot_sigma * noise_rng.standard_normal(onehot.shape)
        return SequenceBundle(feats, y, n_classes=n_classes)
    return SequenceBundle(sources, y, alphabet_sizes=alphabets, n_classes=n_classes)


def binary_entropy(eps: float) -> float:
    if eps <= 0.0 or eps >= 1.0:
        return 0.0
    return float(-eps * np.log2(eps) - (1 - eps) * np.log2(1 - eps))


def ground_truth_rus(spec: PlantSpec, max_lag: int) -> RusTrajectory:
    """Analytic per-step trajectory for single-gate rules.

    The planted component carries the binary symmetric channel capacity
    1 - H_b(noise) at the planted lag and is zero elsewhere.
    """
    if spec.rule == "mixture":
        raise UnsupportedRuleError("mixture rules need the empirical oracle")
    capacity = 1.0 - binary_entropy(spec.noise)
    lags = list(range(1, max_lag + 1))
    zeros = [0.0] * len(lags)

    def planted(component_hit):
        return [capacity if (lag == spec.lag and component_hit) else 0.0
                for lag in lags]

    if spec.rule == "lagged-copy":
        other = next(m for m in spec.modalities if m != spec.source)
        pair = (spec.source, other)
        r, u1, u2, s = zeros, planted(True), zeros, zeros
    elif spec.rule == "lagged-redundant":
        pair = tuple(spec.pair)
        r, u1, u2, s = planted(True), zeros, zeros, zeros
    else:  # lagged-xor
        pair = tuple(spec.pair)
        r, u1, u2, s = zeros, zeros, zeros, planted(True)
    di = [r[i] + u1[i] + u2[i] + s[i] for i in range(len(lags))]
    return RusTrajectory(pair=pair, lags=lags, redundancy=r, unique_x1=u1,
                         unique_x2=u2, synergy=s, di=di, normalized=True,
                         markov_order=0)
