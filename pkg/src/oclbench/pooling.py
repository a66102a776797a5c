"""Global pooling of ``h x w x d`` feature maps into flat embeddings.

The centrepiece is moment pooling: per channel, the spatial mean, the
population standard deviation, and standardized central moments
``E[((g - mu) / sigma)^r]`` for ``r = 3..R`` concatenated block-wise, so the
output is ``[means | stds | skews | ...]`` of length ``R * d``.

The other kinds (avg, max, avgmax, mix, lp, stochastic, rap) are the usual
competitors. All statistics are accumulated in float64.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError
from .tensors import FeatureMap

KINDS = ("moments", "avg", "max", "avgmax", "mix", "lp", "stochastic", "rap")

_PARAMS = {
    "moments": ("R", "sigma_floor"),
    "avg": (),
    "max": (),
    "avgmax": (),
    "mix": ("alpha",),
    "lp": ("p",),
    "stochastic": (),
    "rap": ("k_percent",),
}


@dataclass(frozen=True)
class PoolingSpec:
    kind: str = "moments"
    R: int | None = None
    alpha: float | None = None
    p: float | None = None
    k_percent: float | None = None
    sigma_floor: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown pooling kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        allowed = _PARAMS[self.kind]
        for name in ("R", "alpha", "p", "k_percent", "sigma_floor"):
            if name not in allowed and getattr(self, name) is not None:
                raise ContractError(f"parameter {name} does not apply to pooling kind {self.kind!r}")
        # fill defaults for the active kind
        if self.kind == "moments":
            if self.R is None:
                object.__setattr__(self, "R", 3)
            if self.sigma_floor is None:
                object.__setattr__(self, "sigma_floor", 1e-12)
            if int(self.R) != self.R or self.R < 1:
                raise ContractError(f"moment order R must be an integer >= 1, got {self.R}")
            object.__setattr__(self, "R", int(self.R))
            if self.sigma_floor < 0:
                raise ContractError("sigma_floor must be >= 0")
        elif self.kind == "mix":
            if self.alpha is None:
                object.__setattr__(self, "alpha", 0.5)
            if not 0.0 <= self.alpha <= 1.0:
                raise ContractError(f"mix alpha must lie in [0, 1], got {self.alpha}")
        elif self.kind == "lp":
            if self.p is None:
                object.__setattr__(self, "p", 2.0)
            if not self.p >= 1.0:
                raise ContractError(f"lp order p must be >= 1, got {self.p}")
        elif self.kind == "rap":
            if self.k_percent is None:
                object.__setattr__(self, "k_percent", 0.01)
            if not 0.0 < self.k_percent <= 1.0:
                raise ContractError(f"rap k_percent must lie in (0, 1], got {self.k_percent}")

    @classmethod
    def moments(cls, R=3, sigma_floor=1e-12):
        return cls("moments", R=R, sigma_floor=sigma_floor)

    def rap_k(self, h, w):
        # tolerate float noise such as 0.07 * 100 = 7.000000000000001
        return max(1, math.ceil(round(self.k_percent * h * w, 9)))

    def output_dim(self, h, w, d):
        if self.kind == "moments":
            return self.R * d
        if self.kind == "avgmax":
            return 2 * d
        if self.kind == "rap":
            return d * self.rap_k(h, w)
        return d

    @property
    def label(self):
        if self.kind == "moments":
            return f"moments{self.R}"
        if self.kind == "mix":
            return f"mix{self.alpha:g}"
        if self.kind == "lp":
            return f"lp{self.p:g}"
        if self.kind == "rap":
            return f"rap{self.k_percent:g}"
        return self.kind


def _as_array(g):
    if isinstance(g, FeatureMap):
        return g.data
    arr = np.asarray(g)
    if arr.ndim < 3:
        raise ContractError(f"expected a feature map (h, w, d), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("feature map contains non-finite values")
    return arr


def _flatten(arr):
    """(..., h, w, d) -> float64 (..., h*w, d)."""
    *lead, h, w, d = arr.shape
    return arr.reshape(*lead, h * w, d).astype(np.float64)


def _avg(x):
    return x.mean(axis=-2)


def _moments(x, R, sigma_floor):
    mu = _avg(x)
    out = [mu]
    if R >= 2:
        centered = x - mu[..., None, :]
        sigma = np.sqrt(np.mean(centered * centered, axis=-2))
        out.append(sigma)
        if R >= 3:
            ok = sigma > sigma_floor
            safe = np.where(ok, sigma, 1.0)
            z = centered / safe[..., None, :]
            power = z * z
            for _ in range(3, R + 1):
                power = power * z
                out.append(np.where(ok, power.mean(axis=-2), 0.0))
    return np.concatenate(out, axis=-1)


def pool_moments(g, R=3, sigma_floor=1e-12):
    """Concatenate the first ``R`` per-channel moments of ``g``.

    Standardized moments are reported as 0 for channels whose standard
    deviation does not exceed ``sigma_floor``.
    """
    if int(R) != R or R < 1:
        raise ContractError(f"moment order R must be an integer >= 1, got {R}")
    return _moments(_flatten(_as_array(g)), int(R), sigma_floor)


def _stochastic(x, rng):
    # x: (n, d) for one map; one uniform draw per channel
    n, d = x.shape
    shifted = x - x.min(axis=0, keepdims=True)
    totals = shifted.sum(axis=0)
    out = np.empty(d)
    for c in range(d):
        u = rng.uniform()
        if totals[c] > 0:
            cdf = np.cumsum(shifted[:, c]) / totals[c]
            idx = min(int(np.searchsorted(cdf, u, side="right")), n - 1)
        else:
            idx = min(int(u * n), n - 1)
        out[c] = x[idx, c]
    return out


def _rap(x, k):
    # stable argsort on the negated values: descending, ties by spatial index
    order = np.argsort(-x, axis=-2, kind="stable")[..., :k, :]
    top = np.take_along_axis(x, order, axis=-2)
    # channel-major: [c0 top-k | c1 top-k | ...]
    return np.swapaxes(top, -1, -2).reshape(*x.shape[:-2], -1)


def pool(g, spec, rng=None):
    """Pool a feature map (or a stack ``(..., h, w, d)``) according to ``spec``."""
    if (rng is not None) != (spec.kind == "stochastic"):
        raise ContractError("an RngStream is required for stochastic pooling and only for it")
    arr = _as_array(g)
    h, w = arr.shape[-3], arr.shape[-2]
    x = _flatten(arr)
    kind = spec.kind
    if kind == "moments":
        return _moments(x, spec.R, spec.sigma_floor)
    if kind == "avg":
        return _avg(x)
    if kind == "max":
        return x.max(axis=-2)
    if kind == "avgmax":
        return np.concatenate([_avg(x), x.max(axis=-2)], axis=-1)
    if kind == "mix":
        return spec.alpha * _avg(x) + (1.0 - spec.alpha) * x.max(axis=-2)
    if kind == "lp":
        return np.mean(np.abs(x) ** spec.p, axis=-2) ** (1.0 / spec.p)
    if kind == "rap":
        return _rap(x, spec.rap_k(h, w))
    # stochastic
    if x.ndim == 2:
        return _stochastic(x, rng)
    flat = x.reshape(-1, *x.shape[-2:])
    return np.stack([_stochastic(m, rng) for m in flat]).reshape(*x.shape[:-2], -1)


def moment_drift(values_a, values_b):
    """1-D Wasserstein-1 distance between two empirical samples.

    Equal-size samples use the sorted coupling directly; otherwise the area
    between the two empirical CDFs is integrated.
    """
    a = np.sort(np.asarray(values_a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(values_b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ContractError("moment_drift needs two non-empty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    grid = np.concatenate([a, b])
    grid.sort(kind="mergesort")
    widths = np.diff(grid)
    cdf_a = np.searchsorted(a, grid[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, grid[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * widths))
