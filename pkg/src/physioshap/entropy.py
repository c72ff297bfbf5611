"""Complexity and energy features of decomposed components.

Sample entropy is -log(A/B) where B counts template pairs of length m whose
Chebyshev distance stays below the tolerance and A counts the same for
length m+1. Fuzzy entropy replaces the hard indicator with the membership
exp(-d^n / r) computed on mean-centered templates, and takes the log-ratio
of the average memberships at the two lengths.

Both kernels compare all O(N^2) template pairs. They process rows in
chunks so memory stays bounded for long recordings while each row's
reduction is performed exactly as the one-shot reference would, keeping
optimized and reference results in lockstep. Everything here is pure and
safe to call from many workers at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError, SchemaMismatchError
from .signals import _as_values

_CHUNK_ROWS = 128

#: Feature-name channel tags and the number of components each contributes,
#: in canonical channel order. SCR appears under its GSR feature alias with
#: two components: the leading phasic component and the tonic remainder.
COMPONENT_SCHEMA: tuple[tuple[str, int], ...] = (
    ("hEOG", 2),
    ("vEOG", 2),
    ("zEMG", 1),
    ("tEMG", 3),
    ("GSR", 2),
    ("PPG", 4),
    ("Resp", 2),
    ("Temp", 1),
)

FEATURE_KINDS: tuple[str, ...] = ("SE", "FE", "En")

FEATURE_NAMES: tuple[str, ...] = tuple(
    f"{tag}{idx}_{kind}"
    for tag, count in COMPONENT_SCHEMA
    for idx in range(1, count + 1)
    for kind in FEATURE_KINDS
)

N_FEATURES = len(FEATURE_NAMES)  # 17 components x 3 feature kinds = 51


@dataclass(frozen=True)
class EntropyConfig:
    """Embedding dimension, tolerance, and fuzzy membership exponent.

    With ``tolerance_mode="std_scaled"``, sample entropy widens its match
    tolerance to r times the population standard deviation, and fuzzy
    entropy evaluates its membership on the std-normalized signal; both
    choices make the measures scale-free. "absolute" uses r as given on
    the raw signal.
    """

    m: int = 2
    r: float = 0.15
    n: int = 2
    tolerance_mode: str = "std_scaled"

    def __post_init__(self):
        if self.m < 1:
            raise InvalidArgumentError("embedding dimension m must be >= 1")
        if not (self.r > 0):
            raise InvalidArgumentError("tolerance r must be positive")
        if self.n < 1:
            raise InvalidArgumentError("fuzzy exponent n must be >= 1")
        if self.tolerance_mode not in ("absolute", "std_scaled"):
            raise InvalidArgumentError(f"unknown tolerance_mode {self.tolerance_mode!r}")


def _effective_tolerance(x: np.ndarray, cfg: EntropyConfig) -> float:
    r = cfg.r * x.std() if cfg.tolerance_mode == "std_scaled" else cfg.r
    if not (r > 0):
        raise InvalidArgumentError("effective tolerance is zero (constant signal?)")
    return float(r)


def _check_length(x: np.ndarray, m: int):
    if x.size <= m + 1:
        raise InvalidArgumentError(f"signal length {x.size} too short for m={m}")


def sample_entropy(ts, cfg: EntropyConfig | None = None) -> float:
    """Sample entropy -log(A/B) with strict Chebyshev matching, no self-pairs.

    Both template lengths run over the same N-m start positions. If no
    (m+1)-pairs match (A = 0) the finite cap log(B) + log(N-m) is returned
    instead of infinity so downstream feature vectors stay finite; a B of
    zero is capped the same way with B treated as 1.
    """
    cfg = cfg or EntropyConfig()
    x = _as_values(ts)
    _check_length(x, cfg.m)
    r = _effective_tolerance(x, cfg)
    m = cfg.m
    n_templates = x.size - m
    cols = [x[k : k + n_templates] for k in range(m + 1)]
    b_ordered = 0
    a_ordered = 0
    dist = np.empty((min(_CHUNK_ROWS, n_templates), n_templates))
    diff = np.empty_like(dist)
    for start in range(0, n_templates, _CHUNK_ROWS):
        rows = slice(start, min(start + _CHUNK_ROWS, n_templates))
        c = rows.stop - rows.start
        d = dist[:c]
        t = diff[:c]
        np.abs(np.subtract.outer(cols[0][rows], cols[0]), out=d)
        for k in range(1, m):
            np.abs(np.subtract.outer(cols[k][rows], cols[k]), out=t)
            np.maximum(d, t, out=d)
        b_ordered += int((d < r).sum())
        np.abs(np.subtract.outer(cols[m][rows], cols[m]), out=t)
        np.maximum(d, t, out=d)
        a_ordered += int((d < r).sum())
    # remove self-pairs (distance zero) and halve: unordered pair counts
    b = (b_ordered - n_templates) // 2
    a = (a_ordered - n_templates) // 2
    if a == 0:
        return math.log(max(b, 1)) + math.log(n_templates)
    return math.log(b) - math.log(a)


def fuzzy_entropy(ts, cfg: EntropyConfig | None = None) -> float:
    """Fuzzy entropy ln(phi_m) - ln(phi_{m+1}) on mean-centered templates.

    The membership exp(-d^n / r) is applied to the raw signal in absolute
    mode and to the std-normalized signal in std_scaled mode; normalizing
    the signal (rather than multiplying r by std) is what keeps the d^n
    exponent scale-free.
    """
    cfg = cfg or EntropyConfig()
    x = _as_values(ts)
    _check_length(x, cfg.m)
    if cfg.tolerance_mode == "std_scaled":
        sd = x.std()
        if not (sd > 0):
            raise InvalidArgumentError("effective tolerance is zero (constant signal?)")
        x = x / sd
    r = cfg.r
    m = cfg.m
    n_templates = x.size - m
    phi_m = _fuzzy_phi(x, m, n_templates, r, cfg.n)
    phi_m1 = _fuzzy_phi(x, m + 1, n_templates, r, cfg.n)
    if phi_m1 <= 0.0 or phi_m <= 0.0:
        raise NumericalFailureError("fuzzy membership averages underflowed to zero")
    return math.log(phi_m) - math.log(phi_m1)


def _fuzzy_phi(x: np.ndarray, length: int, n_templates: int, r: float, n_power: int) -> float:
    templates = np.lib.stride_tricks.sliding_window_view(x, length)[:n_templates]
    centered = templates - templates.mean(axis=1, keepdims=True)
    cols = [np.ascontiguousarray(centered[:, k]) for k in range(length)]
    row_means = np.empty(n_templates)
    dist = np.empty((min(_CHUNK_ROWS, n_templates), n_templates))
    diff = np.empty_like(dist)
    for start in range(0, n_templates, _CHUNK_ROWS):
        rows = slice(start, min(start + _CHUNK_ROWS, n_templates))
        c = rows.stop - rows.start
        d = dist[:c]
        t = diff[:c]
        np.abs(np.subtract.outer(cols[0][rows], cols[0]), out=d)
        for k in range(1, length):
            np.abs(np.subtract.outer(cols[k][rows], cols[k]), out=t)
            np.maximum(d, t, out=d)
        # membership exp(-(d^n)/r); the self-match contributes exp(0) = 1
        np.power(d, n_power, out=d)
        np.divide(d, -r, out=d)
        np.exp(d, out=d)
        row_means[rows] = (d.sum(axis=1) - 1.0) / (n_templates - 1)
    return float(np.mean(row_means))


def energy(ts) -> float:
    """Mean squared amplitude of the signal."""
    x = _as_values(ts)
    if x.size == 0:
        raise InvalidArgumentError("energy of an empty signal is undefined")
    return float(np.mean(x**2))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """The 51 named scalar features of one trial, in canonical order."""

    values: Mapping[str, float]

    def __post_init__(self):
        keys = tuple(self.values.keys())
        if keys != FEATURE_NAMES:
            missing = [k for k in FEATURE_NAMES if k not in self.values]
            unexpected = [k for k in keys if k not in FEATURE_NAMES]
            if missing or unexpected:
                raise SchemaMismatchError(
                    f"feature schema mismatch: missing={missing[:4]} unexpected={unexpected[:4]}"
                )
            raise SchemaMismatchError("feature names are out of canonical order")
        vals = np.array([float(self.values[k]) for k in FEATURE_NAMES])
        if not np.all(np.isfinite(vals)):
            bad = [k for k, v in zip(FEATURE_NAMES, vals) if not np.isfinite(v)]
            raise InvalidArgumentError(f"non-finite features: {bad}")
        object.__setattr__(self, "values", dict(zip(FEATURE_NAMES, map(float, vals))))

    def as_array(self) -> np.ndarray:
        return np.array([self.values[k] for k in FEATURE_NAMES])

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def extract_feature_vector(
    trial_components: Mapping[str, Sequence], cfg: EntropyConfig | None = None
) -> FeatureVector:
    """Compute SE, FE, and En for each of the 17 components of one trial.

    ``trial_components`` maps the channel tag (GSR for skin conductance) to
    its ordered component list; counts must match COMPONENT_SCHEMA exactly.
    """
    cfg = cfg or EntropyConfig()
    for tag, count in COMPONENT_SCHEMA:
        if tag not in trial_components:
            raise SchemaMismatchError(f"missing components for channel {tag}")
        have = len(trial_components[tag])
        if have != count:
            raise SchemaMismatchError(f"channel {tag}: expected {count} components, got {have}")
    unknown = [t for t in trial_components if t not in dict(COMPONENT_SCHEMA)]
    if unknown:
        raise SchemaMismatchError(f"unknown channel tags: {unknown}")
    values: dict[str, float] = {}
    for tag, count in COMPONENT_SCHEMA:
        for idx in range(1, count + 1):
            comp = trial_components[tag][idx - 1]
            values[f"{tag}{idx}_SE"] = sample_entropy(comp, cfg)
            values[f"{tag}{idx}_FE"] = fuzzy_entropy(comp, cfg)
            values[f"{tag}{idx}_En"] = energy(comp)
    return FeatureVector(values)
