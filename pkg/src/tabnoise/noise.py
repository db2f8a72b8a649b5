"""Stochastic perturbation transforms.

All operations take an explicit sampler (see :mod:`tabnoise.rng`) and are
pure functions of their inputs plus the sampler's stream. The normative
consumption order inside a transform is: Bernoulli mask first (one draw per
row, in row order), then the noise or replacement vector (one draw per
activated entry, in activation order). Entries whose source cell was missing
are never perturbed.

Numeric injection follows

    injected = scaled + mask * noise

with the mask drawn per entry at the flip probability and the noise vector
sampled only for activated entries. Categoric injection replaces activated
ordinal codes with a weighted choice over the training vocabulary,
renormalized after excluding the current code. Range-preserving injection
for unit-interval scalings caps noise at +/-0.5 and shrinks it toward the
nearest boundary so the result stays inside [0, 1]; its mean correction is a
secant step on the post-scaling mean measured by Monte Carlo on the training
distribution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .rng import NOISE_DISTRIBUTIONS

CALIBRATION_DRAWS = 100_000


@dataclass
class NoiseSpec:
    """Resolved per-transform noise parameters (train and test variants)."""

    trainnoise: bool = True
    testnoise: bool = False
    flip_prob: float = 0.03
    test_flip_prob: float | None = None  # None: matched to flip_prob
    sigma: float = 0.06
    test_sigma: float = 0.03
    mu: float = 0.0
    test_mu: float = 0.0
    noisedistribution: str = "normal"
    test_noisedistribution: str = "normal"
    weighted: bool = True
    test_weighted: bool = True
    rescale_sigmas: bool = True
    retain_basis: bool = False
    protected_feature: str | None = None
    mask_value: float = 0.0
    noise_scaling_bias_offset: bool = True
    direct_flip: bool = False
    swap_noise: bool = False

    def __post_init__(self):
        for dist in (self.noisedistribution, self.test_noisedistribution):
            if dist not in NOISE_DISTRIBUTIONS:
                raise ConfigError(f"unknown noise distribution: {dist!r}")
        for prob in (self.flip_prob, self.test_flip_prob):
            if prob is not None and not 0.0 <= prob <= 1.0:
                raise ConfigError("flip probabilities must be in [0, 1]")
        if self.sigma < 0 or self.test_sigma < 0:
            raise ConfigError("sigma must be nonnegative")

    def phase_params(self, phase: str) -> dict:
        """Effective (flip_prob, mu, sigma, distribution, weighted) for a phase."""
        if phase == "train":
            return {
                "flip_prob": self.flip_prob,
                "mu": self.mu,
                "sigma": self.sigma,
                "distribution": self.noisedistribution,
                "weighted": self.weighted,
            }
        flip = self.test_flip_prob if self.test_flip_prob is not None else self.flip_prob
        return {
            "flip_prob": flip,
            "mu": self.test_mu,
            "sigma": self.test_sigma,
            "distribution": self.test_noisedistribution,
            "weighted": self.test_weighted,
        }

    def fires(self, phase: str) -> bool:
        return self.trainnoise if phase == "train" else self.testnoise


def sample_bernoulli_mask(sampler, n: int, p: float, missing_mask=None) -> np.ndarray:
    """Independent 0/1 activations at probability p; missing-source rows forced 0.

    Always consumes one draw per row so generator use does not depend on the
    missing pattern.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    mask = (sampler.uniforms(n) < p).astype(np.int8)
    if missing_mask is not None:
        mask[np.asarray(missing_mask, dtype=bool)] = 0
    return mask


def sample_noise(sampler, distribution: str, mu: float, sigma: float, count: int) -> np.ndarray:
    """Noise vector for activated entries only (count = number of activations)."""
    return sampler.shaped(distribution, mu, sigma, count)


def inject_numeric(scaled: np.ndarray, mask: np.ndarray, noise: np.ndarray) -> np.ndarray:
    active = np.flatnonzero(mask)
    if len(active) != len(noise):
        raise ValueError(
            f"noise length {len(noise)} does not match {len(active)} mask activations"
        )
    out = np.array(scaled, dtype=np.float64, copy=True)
    out[active] += noise
    return out


def scale_noise_minmax(noise: np.ndarray, minmax: np.ndarray) -> np.ndarray:
    """Entry-dependent shrink that keeps unit-interval values in range.

    Noise is capped to [-0.5, 0.5]; negative noise on entries below 0.5 is
    scaled by entry/0.5, positive noise on entries at or above 0.5 by
    (1-entry)/0.5, and the other two quadrants pass through unscaled. The
    injected value entry+scaled is then guaranteed to stay in [0, 1].
    """
    noise = np.clip(np.asarray(noise, dtype=np.float64), -0.5, 0.5)
    minmax = np.asarray(minmax, dtype=np.float64)
    low = minmax < 0.5
    negative = noise < 0.0
    scaled = noise.copy()
    shrink_low = low & negative
    scaled[shrink_low] = noise[shrink_low] * minmax[shrink_low] / 0.5
    shrink_high = ~low & ~negative
    scaled[shrink_high] = noise[shrink_high] * (1.0 - minmax[shrink_high]) / 0.5
    return scaled


def adjust_noise_mean(
    minmax_train: np.ndarray,
    mu0: float,
    sigma: float,
    distribution: str,
    sampler,
    draws: int = CALIBRATION_DRAWS,
) -> tuple[float, bool]:
    """Secant correction of the pre-scaling noise mean toward zero post-scaling mean.

    Measures the post-scaling mean at mu0 (giving mu1) and at mu1 (giving
    mu2) by Monte Carlo against the training distribution, then solves the
    secant step for the root. ``sampler`` is either a sampler or a callable
    producing one sampler per sampling operation. Returns (mu_adjusted,
    degenerate) where degenerate marks a flat response (mu2 == mu1); the
    uncorrected mean is returned in that case.
    """
    minmax_train = np.asarray(minmax_train, dtype=np.float64)
    if len(minmax_train) == 0:
        raise ValueError("minmax_train must be nonempty")
    reps = int(np.ceil(draws / len(minmax_train)))
    panel = np.tile(minmax_train, reps)[:draws]
    provide = sampler if callable(sampler) else (lambda: sampler)

    noise0 = sample_noise(provide(), distribution, mu0, sigma, draws)
    mu1 = float(np.mean(scale_noise_minmax(noise0, panel)))
    noise1 = sample_noise(provide(), distribution, mu1, sigma, draws)
    mu2 = float(np.mean(scale_noise_minmax(noise1, panel)))
    if mu2 == mu1:
        return mu0, True
    return mu0 - mu1 * (mu1 - mu0) / (mu2 - mu1), False


def flip_boolean_direct(encoded: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """abs(boolean - mask): activated entries flip, others pass through."""
    return np.abs(np.asarray(encoded, dtype=np.int64) - np.asarray(mask, dtype=np.int64))


def weighted_flip(
    codes: np.ndarray,
    vocab_size: int,
    weights: np.ndarray,
    mask: np.ndarray,
    sampler,
    segment_weights: np.ndarray | None = None,
) -> np.ndarray:
    """Replace activated codes with a choice over the training vocabulary.

    Codes index the vocabulary from 1 (0 is the unknown slot, missing codes
    sit above the vocabulary); replacements always come from codes
    1..vocab_size. The current code is excluded and weights renormalized, so
    a flip always changes the value. ``weights`` has one entry per vocabulary
    value; ``segment_weights`` optionally supplies a per-row weight vector
    (rows x vocab) for protected-attribute segmentation. One uniform draw is
    consumed per activation.
    """
    codes = np.asarray(codes, dtype=np.int64)
    out = codes.copy()
    active = np.flatnonzero(mask)
    if len(active) == 0:
        return out
    if vocab_size <= 1:
        warnings.warn("vocabulary has no alternate values; flip noise is a no-op")
        return out
    base = np.asarray(weights, dtype=np.float64)
    draws = sampler.uniforms(len(active))
    for draw, row in zip(draws, active):
        w = base if segment_weights is None else segment_weights[row]
        current = out[row]
        cur_idx = current - 1 if 1 <= current <= vocab_size else -1
        total = float(np.sum(w)) - (float(w[cur_idx]) if cur_idx >= 0 else 0.0)
        if total <= 0.0:
            continue
        target = draw * total
        acc = 0.0
        pick = -1
        for j in range(vocab_size):
            if j == cur_idx:
                continue
            acc += w[j]
            if target < acc:
                pick = j
                break
        if pick < 0:  # float round-off on the last bucket
            for j in range(vocab_size - 1, -1, -1):
                if j != cur_idx and w[j] > 0:
                    pick = j
                    break
        if pick >= 0:
            out[row] = pick + 1
    return out


def swap_noise(values, mask: np.ndarray, sampler):
    """Replace activated entries with a uniform choice over rows of the same column.

    Sampling is over the set being transformed, so test-time swaps reflect
    the test batch distribution. A single-row input is returned unchanged
    with a warning.
    """
    n = len(values)
    out = np.array(values) if isinstance(values, np.ndarray) else list(values)
    active = np.flatnonzero(mask)
    if len(active) == 0:
        return out
    if n < 2:
        warnings.warn("swap noise needs at least two rows; input returned unchanged")
        return out
    picks = sampler.bounded_ints(len(active), n)
    if isinstance(out, np.ndarray):
        out[active] = np.asarray(values)[picks]
    else:
        src = list(values)
        for row, pick in zip(active, picks):
            out[row] = src[pick]
    return out


def mask_noise(values: np.ndarray, mask: np.ndarray, mask_value: float) -> np.ndarray:
    out = np.array(values, dtype=np.float64, copy=True)
    out[np.asarray(mask, dtype=bool)] = mask_value
    return out


def rescale_sigma_passthrough(sigma: float, train_std: float) -> float:
    """Scale a unit-convention sigma by the training standard deviation."""
    return sigma * train_std if train_std > 0.0 else 0.0


@dataclass
class ProtectedBasis:
    """Per-segment noise adjustments fitted on training data.

    Numeric targets store the ratio segment_std / aggregate_std per protected
    attribute value; categoric targets store per-segment frequency tables.
    Segments unseen in training fall back to no adjustment (ratio 1, or the
    aggregate frequency table).
    """

    ratios: dict = field(default_factory=dict)
    segment_frequencies: dict = field(default_factory=dict)
    flagged_segments: list = field(default_factory=list)

    def ratio_for(self, segment_key: str) -> float:
        return self.ratios.get(segment_key, 1.0)

    def to_dict(self) -> dict:
        return {
            "ratios": dict(self.ratios),
            "segment_frequencies": {k: list(v) for k, v in self.segment_frequencies.items()},
            "flagged_segments": list(self.flagged_segments),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProtectedBasis":
        return cls(
            ratios=dict(data["ratios"]),
            segment_frequencies={k: list(v) for k, v in data["segment_frequencies"].items()},
            flagged_segments=list(data["flagged_segments"]),
        )


def _segment_key(cell) -> str:
    from .table import format_cell

    return format_cell(cell)


def fit_protected_numeric(target: np.ndarray, target_missing: np.ndarray, protected_cells) -> ProtectedBasis:
    """Segment std ratios of the (encoded) noise target, keyed by protected value."""
    target = np.asarray(target, dtype=np.float64)
    present = ~np.asarray(target_missing, dtype=bool)
    overall = target[present]
    aggregate_std = float(np.sqrt(np.mean((overall - overall.mean()) ** 2))) if len(overall) else 0.0
    basis = ProtectedBasis()
    keys = np.array([_segment_key(c) for c in protected_cells])
    for key in sorted(set(keys)):
        rows = (keys == key) & present
        segment = target[rows]
        if len(segment) < 2 or aggregate_std <= 0.0:
            basis.ratios[key] = 1.0
            basis.flagged_segments.append(key)
            continue
        seg_std = float(np.sqrt(np.mean((segment - segment.mean()) ** 2)))
        basis.ratios[key] = seg_std / aggregate_std
    return basis


def fit_protected_categoric(codes: np.ndarray, vocab_size: int, protected_cells) -> ProtectedBasis:
    """Per-segment vocabulary frequency tables for weighted replacement."""
    codes = np.asarray(codes, dtype=np.int64)
    basis = ProtectedBasis()
    keys = np.array([_segment_key(c) for c in protected_cells])
    for key in sorted(set(keys)):
        rows = keys == key
        counts = np.zeros(vocab_size, dtype=np.float64)
        for code in codes[rows]:
            if 1 <= code <= vocab_size:
                counts[code - 1] += 1
        if counts.sum() < 2:
            basis.flagged_segments.append(key)
        basis.segment_frequencies[key] = counts.tolist()
    return basis


def protected_ratio_vector(basis: ProtectedBasis, protected_cells, rows: np.ndarray) -> np.ndarray:
    keys = [_segment_key(protected_cells[r]) for r in rows]
    return np.array([basis.ratio_for(k) for k in keys], dtype=np.float64)


def protected_weight_matrix(
    basis: ProtectedBasis, aggregate_weights: np.ndarray, protected_cells, n_rows: int
) -> np.ndarray:
    """(rows x vocab) weight table; unseen segments use the aggregate weights."""
    vocab_size = len(aggregate_weights)
    out = np.empty((n_rows, vocab_size), dtype=np.float64)
    for i in range(n_rows):
        key = _segment_key(protected_cells[i])
        table = basis.segment_frequencies.get(key)
        if table is None or sum(table) <= 0:
            out[i] = aggregate_weights
        else:
            out[i] = table
    return out


def resolve_param(value, retain_basis: bool, stored, sampler):
    """Resolve a possibly randomized parameter to a concrete value.

    Fixed values pass through. A list is a choice sampling over candidates; a
    mapping with a ``distribution`` key is one draw from that shape. With
    ``retain_basis`` and a previously resolved value, the stored value wins.
    """
    if not is_randomized_param(value):
        return value
    if retain_basis and stored is not None:
        return stored
    if isinstance(value, (list, tuple)):
        if not value:
            raise ConfigError("candidate list for parameter randomization is empty")
        if len(value) == 1:
            return value[0]
        pick = int(sampler.bounded_ints(1, len(value))[0])
        return value[pick]
    spec = dict(value)
    name = spec.pop("distribution")
    if name == "normal":
        return float(sampler.normals(1, spec.get("mu", 0.0), spec.get("sigma", 1.0))[0])
    if name == "laplace":
        return float(sampler.laplaces(1, spec.get("mu", 0.0), spec.get("sigma", 1.0))[0])
    if name == "uniform":
        low = spec.get("low", 0.0)
        high = spec.get("high", 1.0)
        return float(low + (high - low) * sampler.uniforms(1)[0])
    raise ConfigError(f"unknown parameter distribution: {name!r}")


def is_randomized_param(value) -> bool:
    if isinstance(value, (list, tuple)):
        return True
    return isinstance(value, dict) and "distribution" in value
