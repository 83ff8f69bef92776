"""I.i.d. single-site potentials with a bounded, compactly supported density.

Draws are counter based: the value at site ``xi`` of sample ``k`` is a pure
function of ``(seed, k, xi)`` computed with Philox4x32-10, so any subset of
sites or samples can be regenerated independently and in any order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .hamiltonian import PotentialField
from .lattice import RectangularDomain

__all__ = [
    "DensitySpec",
    "uniform",
    "triangular",
    "truncated_normal",
    "density_from_config",
    "density_at",
    "philox4x32",
    "uniform_draws",
    "sample_values",
    "sample_potential",
    "clamp_site",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10) -> np.ndarray:
    """Philox4x32 block function, vectorised over leading axes.

    ``counter`` has shape ``(..., 4)`` and ``key`` shape ``(..., 2)`` (32-bit
    words, broadcast against each other).  Returns uint32 words of shape
    ``(..., 4)``.
    """
    ctr = np.asarray(counter, dtype=np.uint64) & _MASK
    key = np.asarray(key, dtype=np.uint64) & _MASK
    lead = np.broadcast_shapes(ctr.shape[:-1], key.shape[:-1])
    ctr = np.broadcast_to(ctr, lead + (4,))
    key = np.broadcast_to(key, lead + (2,))
    c0, c1, c2, c3 = (ctr[..., i].copy() for i in range(4))
    k0, k1 = key[..., 0].copy(), key[..., 1].copy()
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _SHIFT) ^ c3 ^ k1,
            p0 & _MASK,
        )
    return np.stack([c0, c1, c2, c3], axis=-1).astype(np.uint32)


def _split64(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.uint64)
    return x & _MASK, x >> _SHIFT


def encode_sites(sites) -> np.ndarray:
    """Injective 64-bit code of d-dimensional sites (zig-zag packed coordinates)."""
    arr = np.asarray(sites, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[:, None]
    d = arr.shape[1]
    bits = 64 // d
    if d > 8:
        raise ValueError("site encoding supports d <= 8")
    lim = 1 << (bits - 1)
    if np.any(arr >= lim) or np.any(arr < -lim):
        raise ValueError(f"site coordinates must lie in [-{lim}, {lim}) for d={d}")
    zz = np.where(arr >= 0, 2 * arr, -2 * arr - 1).astype(np.uint64)
    code = np.zeros(arr.shape[0], dtype=np.uint64)
    for nu in range(d):
        code = (code << np.uint64(bits)) | zz[:, nu]
    return code


def uniform_draws(seed: int, sample_indices, site_codes) -> np.ndarray:
    """Uniform [0, 1) doubles of shape ``(len(sample_indices), len(site_codes))``."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    samples = np.atleast_1d(np.asarray(sample_indices, dtype=np.uint64))
    codes = np.atleast_1d(np.asarray(site_codes, dtype=np.uint64))
    s_lo, s_hi = _split64(samples[:, None])
    c_lo, c_hi = _split64(codes[None, :])
    shape = (len(samples), len(codes))
    counter = np.stack(
        [np.broadcast_to(w, shape) for w in (c_lo, c_hi, s_lo, s_hi)], axis=-1
    )
    key = np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)
    words = philox4x32(counter, np.broadcast_to(key, shape + (2,))).astype(np.uint64)
    # 53-bit mantissa from two 32-bit words
    hi = words[..., 0] >> np.uint64(5)
    lo = words[..., 1] >> np.uint64(6)
    return (hi.astype(np.float64) * 67108864.0 + lo.astype(np.float64)) / 9007199254740992.0


@dataclass(frozen=True)
class DensitySpec:
    """Bounded density with compact support ``[support_min, support_max]``.

    ``family`` is ``"uniform"``, ``"triangular"`` (symmetric, peak at the
    midpoint) or ``"truncnormal"``.
    """

    family: str
    params: tuple[float, ...]
    support_min: float
    support_max: float
    sup_norm: float

    def pdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        a, b = self.support_min, self.support_max
        inside = (t >= a) & (t <= b)
        if self.family == "uniform":
            out = np.full_like(t, 1.0 / (b - a))
        elif self.family == "triangular":
            mid = 0.5 * (a + b)
            out = self.sup_norm * (1.0 - np.abs(t - mid) / (mid - a))
        else:
            out = self._frozen().pdf(t)
        return np.where(inside, out, 0.0)

    def cdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        a, b = self.support_min, self.support_max
        s = np.clip((t - a) / (b - a), 0.0, 1.0)
        if self.family == "uniform":
            return s
        if self.family == "triangular":
            return np.where(s <= 0.5, 2 * s * s, 1 - 2 * (1 - s) ** 2)
        return self._frozen().cdf(t)

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        a, b = self.support_min, self.support_max
        if self.family == "uniform":
            return a + (b - a) * u
        if self.family == "triangular":
            return np.where(
                u <= 0.5, a + (b - a) * np.sqrt(u / 2), b - (b - a) * np.sqrt((1 - u) / 2)
            )
        return np.clip(self._frozen().ppf(u), a, b)

    def _frozen(self):
        mu, sigma, a, b = self.params
        return stats.truncnorm((a - mu) / sigma, (b - mu) / sigma, loc=mu, scale=sigma)

    def to_config(self) -> dict:
        names = {"uniform": ("a", "b"), "triangular": ("a", "b"),
                 "truncnormal": ("mu", "sigma", "a", "b")}[self.family]
        return {"family": self.family, **dict(zip(names, self.params))}


def _check_interval(a: float, b: float):
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("only compactly supported densities are supported")
    if not a < b:
        raise ValueError(f"support must satisfy a < b, got [{a}, {b}]")


def uniform(a: float = 0.0, b: float = 1.0) -> DensitySpec:
    _check_interval(a, b)
    return DensitySpec("uniform", (a, b), a, b, 1.0 / (b - a))


def triangular(a: float, b: float) -> DensitySpec:
    _check_interval(a, b)
    return DensitySpec("triangular", (a, b), a, b, 2.0 / (b - a))


def truncated_normal(mu: float, sigma: float, a: float, b: float) -> DensitySpec:
    _check_interval(a, b)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    mode = min(max(mu, a), b)
    mass = stats.norm.cdf((b - mu) / sigma) - stats.norm.cdf((a - mu) / sigma)
    peak = stats.norm.pdf((mode - mu) / sigma) / (sigma * mass)
    return DensitySpec("truncnormal", (mu, sigma, a, b), a, b, float(peak))


def density_from_config(cfg) -> DensitySpec:
    if not isinstance(cfg, dict) or "family" not in cfg:
        raise ValueError("density.family: missing")
    family = cfg["family"]
    keys = {"uniform": ("a", "b"), "triangular": ("a", "b"),
            "truncnormal": ("mu", "sigma", "a", "b")}
    if family not in keys:
        raise ValueError(f"density.family: unknown family {family!r}")
    args = []
    for k in keys[family]:
        if k not in cfg:
            raise ValueError(f"density.{k}: missing")
        args.append(float(cfg[k]))
    builder = {"uniform": uniform, "triangular": triangular, "truncnormal": truncated_normal}
    return builder[family](*args)


def density_at(density: DensitySpec, t: float) -> float:
    """Pointwise density value, 0 outside the support."""
    return float(density.pdf(t))


def sample_values(sites, density: DensitySpec, seed: int, sample_indices) -> np.ndarray:
    """Potential values of shape ``(len(sample_indices), len(sites))``."""
    u = uniform_draws(seed, sample_indices, encode_sites(sites))
    return density.ppf(u)


def sample_potential(
    domain: RectangularDomain, density: DensitySpec, seed: int, sample_index: int = 0
) -> PotentialField:
    """One draw per distinct site of the union of the domain's factors."""
    sites = domain.particle_sites()
    return PotentialField(tuple(sites), sample_values(sites, density, seed, [sample_index])[0])


def clamp_site(v: PotentialField, xi, which: str, density: DensitySpec) -> PotentialField:
    """Copy of ``v`` with ``v(xi)`` set to the top (``"max"``) or bottom (``"min"``) of the support."""
    if which == "max":
        return v.with_value(xi, density.support_max)
    if which == "min":
        return v.with_value(xi, density.support_min)
    raise ValueError(f"which must be 'min' or 'max', got {which!r}")
