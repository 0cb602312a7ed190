"""Numeric primitives: log-domain weights, softmax selection, noise schedules
and counter-based random streams.

Every stochastic operation in the package draws through :class:`RngStream`
so that results are reproducible bit-for-bit and independent of execution
order across candidates, trials and threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightsError, NumericError, ParameterError

SCHEDULE_SHAPES = ("linear_log", "cosine")


@dataclass(frozen=True)
class WeightVector:
    """A normalized probability vector together with its log-domain scores."""

    log_weights: np.ndarray
    normalized: np.ndarray

    def __len__(self) -> int:
        return len(self.normalized)


def normalize_log_weights(log_weights) -> WeightVector:
    """Normalize log-domain scores into a probability vector.

    Uses a max-shift (log-sum-exp) so arbitrarily large finite inputs never
    overflow. Entries equal to -inf map to exactly 0. The result is invariant
    to adding a constant to all entries.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.ndim != 1 or lw.size == 0:
        raise ParameterError("log_weights must be a non-empty 1-D array")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise NumericError("log_weights must be finite or -inf")
    m = np.max(lw)
    if m == -np.inf:
        raise DegenerateWeightsError("degenerate weights: all log-weights are -inf")
    w = np.exp(lw - m)
    w /= w.sum()
    return WeightVector(log_weights=lw, normalized=w)


def softmax_select(values, temperature: float) -> WeightVector:
    """Softmax weighting of scores at temperature ``temperature``.

    As the temperature goes to 0 the weight concentrates on the argmax
    (exact ties split uniformly, by symmetry of the shift).
    """
    v = np.asarray(values, dtype=float)
    if not np.isfinite(temperature) or temperature <= 0:
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    if v.size == 0:
        raise ParameterError("values must be non-empty")
    if not np.all(np.isfinite(v)):
        raise NumericError("values must be finite")
    return normalize_log_weights(v / temperature)


def reward_softmax(rewards, temperature: float) -> WeightVector:
    """Softmax selection over rewards with a spread-adaptive temperature.

    Rewards are shifted and scaled to [-1, 0] by their range before the
    softmax, so ``temperature`` acts on relative reward differences rather
    than absolute reward units. This keeps the selection discriminative
    whenever the candidate set has any reward spread at all, no matter how
    small the absolute values are. Shift and positive scaling preserve the
    argmax, so the temperature -> 0 limit still concentrates on the best
    candidate; zero spread yields uniform weights.
    """
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ParameterError("rewards must be non-empty")
    if not np.all(np.isfinite(r)):
        raise NumericError("rewards must be finite")
    span = float(r.max() - r.min())
    if span > 0.0:
        r = (r - r.max()) / span
    else:
        r = np.zeros_like(r)
    return softmax_select(r, temperature)


@dataclass(frozen=True)
class NoiseSchedule:
    """Monotone non-increasing sequence of noise standard deviations.

    ``sigmas[0]`` is the largest (first denoising step), ``sigmas[-1]`` the
    smallest (last step).
    """

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=float)
        if s.ndim != 1 or s.size < 1:
            raise ParameterError("sigmas must be a 1-D array")
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ParameterError("sigmas must be strictly positive and finite")
        if np.any(np.diff(s) > 0):
            raise ParameterError("sigmas must be monotone non-increasing")
        object.__setattr__(self, "sigmas", s)

    @property
    def n_steps(self) -> int:
        return len(self.sigmas)


def make_schedule(
    n_steps: int,
    sigma_max: float = 1.0,
    sigma_min: float = 0.02,
    shape: str = "linear_log",
) -> NoiseSchedule:
    """Build a noise schedule from ``sigma_max`` down to ``sigma_min``.

    ``linear_log`` interpolates geometrically (linear in log-space); ``cosine``
    uses a half-cosine ramp between the two endpoints. Endpoints are exact.
    """
    if n_steps < 2:
        raise ParameterError("n_steps must be >= 2")
    if not (sigma_max > sigma_min > 0):
        raise ParameterError("need sigma_max > sigma_min > 0")
    if shape == "linear_log":
        sig = np.geomspace(sigma_max, sigma_min, n_steps)
    elif shape == "cosine":
        t = np.linspace(0.0, 1.0, n_steps)
        ramp = 0.5 * (1.0 + np.cos(np.pi * t))  # 1 -> 0
        sig = sigma_min + (sigma_max - sigma_min) * ramp
    else:
        raise ParameterError(f"unknown schedule shape {shape!r}")
    sig[0], sig[-1] = sigma_max, sigma_min
    return NoiseSchedule(sigmas=sig)


def _derive_stream_id(parent_id: int, parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(parent_id.to_bytes(8, "little", signed=False))
    for p in parts:
        h.update(repr(p).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (base_seed, stream_id).

    Identical keys give identical draw sequences; distinct stream ids are
    statistically independent (Philox keying). Streams are cheap value
    objects: derive one per (trial, step, purpose) with :meth:`child` instead
    of sharing a mutable generator.
    """

    base_seed: int
    stream_id: int = 0

    def child(self, *parts) -> "RngStream":
        """A derived, independent stream keyed by hashable labels."""
        return RngStream(self.base_seed, _derive_stream_id(self.stream_id, parts))

    def generator(self) -> np.random.Generator:
        key = (self.base_seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF)
        return np.random.Generator(np.random.Philox(key=key))


def draw_gaussian(shape, rng: RngStream) -> np.ndarray:
    """I.i.d. standard-normal array, deterministic for a given stream."""
    return rng.generator().standard_normal(shape)
