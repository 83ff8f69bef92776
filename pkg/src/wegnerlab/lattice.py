"""Rectangles in Z^d, rectangular product domains in Z^(N d) and their indexing.

Sites of a domain are enumerated in mixed-radix lexicographic order over the
particle blocks ``(x_1, ..., x_N)``; inside a block the rectangle's own
lexicographic order is used.  With this order the multi-particle Hilbert space
is the Kronecker product of the single-rectangle spaces, first particle
slowest.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "DomainError",
    "NonRegularDomainError",
    "Rectangle",
    "RectangularDomain",
    "RegularityInfo",
    "rectangle_sites",
    "classify_regularity",
    "site_index",
    "index_site",
    "normal_form",
    "require_regular",
    "domain_from_config",
    "domain_to_config",
]


class DomainError(ValueError):
    """Invalid geometry or a site outside the domain."""


class NonRegularDomainError(DomainError):
    """An operation that needs a regular domain received a non-regular one."""


@dataclass(frozen=True)
class Rectangle:
    """Integer box ``{xi : lower[nu] <= xi[nu] <= upper[nu]}``."""

    lower: tuple[int, ...]
    upper: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(int(c) for c in self.lower)
        upper = tuple(int(c) for c in self.upper)
        if len(lower) != len(upper) or not lower:
            raise DomainError(f"rectangle bounds have mismatched length: {lower} / {upper}")
        if any(lo > hi for lo, hi in zip(lower, upper)):
            raise DomainError(f"rectangle has lower > upper: {lower} / {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def interval(cls, a: int, b: int) -> "Rectangle":
        return cls((a,), (b,))

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(hi - lo + 1 for lo, hi in zip(self.lower, self.upper))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def __contains__(self, xi) -> bool:
        xi = tuple(xi)
        return len(xi) == self.d and all(
            lo <= c <= hi for c, lo, hi in zip(xi, self.lower, self.upper)
        )

    def intersects(self, other: "Rectangle") -> bool:
        return all(
            max(a, c) <= min(b, e)
            for a, b, c, e in zip(self.lower, self.upper, other.lower, other.upper)
        )

    def local_index(self, xi) -> int:
        if xi not in self:
            raise DomainError(f"site {tuple(xi)} is not in rectangle {self}")
        idx = 0
        for c, lo, n in zip(xi, self.lower, self.shape):
            idx = idx * n + (c - lo)
        return idx

    def local_site(self, idx: int) -> tuple[int, ...]:
        if not 0 <= idx < self.size:
            raise DomainError(f"index {idx} out of range for rectangle of size {self.size}")
        coords = []
        for lo, n in zip(reversed(self.lower), reversed(self.shape)):
            idx, r = divmod(idx, n)
            coords.append(lo + r)
        return tuple(reversed(coords))


def rectangle_sites(R: Rectangle) -> list[tuple[int, ...]]:
    """All sites of ``R`` in lexicographic order."""
    return list(
        itertools.product(*(range(lo, hi + 1) for lo, hi in zip(R.lower, R.upper)))
    )


@dataclass(frozen=True)
class RegularityInfo:
    is_regular: bool
    classes: tuple[tuple[int, ...], ...]
    """Groups of 0-based coordinates whose rectangles are identical."""
    K: int


@dataclass(frozen=True)
class RectangularDomain:
    """Product ``Lambda_1 x ... x Lambda_N`` of rectangles in Z^d."""

    factors: tuple[Rectangle, ...]
    _strides: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise DomainError("a domain needs at least one factor")
        d = factors[0].d
        if any(R.d != d for R in factors):
            raise DomainError("all factors must live in the same Z^d")
        object.__setattr__(self, "factors", factors)
        sizes = [R.size for R in factors]
        strides = [int(np.prod(sizes[i + 1:])) for i in range(len(sizes))]
        object.__setattr__(self, "_strides", tuple(strides))

    @classmethod
    def of(cls, *factors: Rectangle) -> "RectangularDomain":
        return cls(tuple(factors))

    @property
    def d(self) -> int:
        return self.factors[0].d

    @property
    def N(self) -> int:
        return len(self.factors)

    @property
    def size(self) -> int:
        return int(np.prod([R.size for R in self.factors]))

    def __len__(self) -> int:
        return self.size

    def sites(self):
        """Iterate over N*d-tuples in index order."""
        for blocks in itertools.product(*(rectangle_sites(R) for R in self.factors)):
            yield tuple(c for b in blocks for c in b)

    def particle_sites(self) -> list[tuple[int, ...]]:
        """Distinct sites of the union of the factors, sorted lexicographically."""
        seen = set()
        for R in self.factors:
            seen.update(rectangle_sites(R))
        return sorted(seen)

    def block_coords(self) -> np.ndarray:
        """Array of shape ``(size, N, d)`` holding every site, in index order."""
        grids = [np.asarray(rectangle_sites(R), dtype=np.int64) for R in self.factors]
        locals_ = np.indices([R.size for R in self.factors]).reshape(self.N, -1)
        return np.stack([grids[i][locals_[i]] for i in range(self.N)], axis=1)


def classify_regularity(domain: RectangularDomain) -> RegularityInfo:
    """Group identical factors and decide whether all other pairs are disjoint."""
    classes: list[list[int]] = []
    for i, R in enumerate(domain.factors):
        for cls in classes:
            if domain.factors[cls[0]] == R:
                cls.append(i)
                break
        else:
            classes.append([i])
    regular = all(
        not domain.factors[a[0]].intersects(domain.factors[b[0]])
        for a, b in itertools.combinations(classes, 2)
    )
    K = next(len(c) for c in classes if 0 in c)
    return RegularityInfo(regular, tuple(tuple(c) for c in classes), K)


def require_regular(domain: RectangularDomain) -> RegularityInfo:
    info = classify_regularity(domain)
    if not info.is_regular:
        raise NonRegularDomainError(
            f"domain is not regular: some factors overlap without being equal ({domain.factors})"
        )
    return info


def site_index(domain: RectangularDomain, x: Sequence[int]) -> int:
    """Linear index of the N*d-dimensional site ``x``."""
    x = tuple(int(c) for c in x)
    d = domain.d
    if len(x) != domain.N * d:
        raise DomainError(f"site {x} has length {len(x)}, expected {domain.N * d}")
    return sum(
        R.local_index(x[i * d:(i + 1) * d]) * s
        for i, (R, s) in enumerate(zip(domain.factors, domain._strides))
    )


def index_site(domain: RectangularDomain, idx: int) -> tuple[int, ...]:
    if not 0 <= idx < domain.size:
        raise DomainError(f"index {idx} out of range 0..{domain.size - 1}")
    out: list[int] = []
    for R, s in zip(domain.factors, domain._strides):
        local, idx = divmod(idx, s)
        out.extend(R.local_site(local))
    return tuple(out)


def normal_form(domain: RectangularDomain) -> tuple[RectangularDomain, tuple[int, ...]]:
    """Reorder coordinates so that the class of coordinate 0 comes first.

    Returns the permuted domain and ``perm`` with ``new.factors[k] ==
    domain.factors[perm[k]]``.  Afterwards factors ``0..K-1`` coincide and are
    disjoint from every later factor.
    """
    info = require_regular(domain)
    first = next(c for c in info.classes if 0 in c)
    perm = tuple(first) + tuple(i for i in range(domain.N) if i not in first)
    return RectangularDomain(tuple(domain.factors[p] for p in perm)), perm


def domain_from_config(cfg) -> RectangularDomain:
    """Build a domain from ``{d, N, factors: [[lower], [upper]], ...}``.

    ``d`` and ``N`` are optional but checked when given.
    """
    if not isinstance(cfg, dict):
        raise DomainError("domain: expected a mapping with a 'factors' key")
    if "factors" not in cfg:
        raise DomainError("domain.factors: missing")
    factors = []
    for k, f in enumerate(cfg["factors"]):
        try:
            lower, upper = f
            lower = [lower] if isinstance(lower, int) else list(lower)
            upper = [upper] if isinstance(upper, int) else list(upper)
            factors.append(Rectangle(tuple(lower), tuple(upper)))
        except (TypeError, ValueError) as exc:
            raise DomainError(f"domain.factors[{k}]: {exc}") from None
    dom = RectangularDomain(tuple(factors))
    if "d" in cfg and cfg["d"] != dom.d:
        raise DomainError(f"domain.d: declared {cfg['d']} but factors have d={dom.d}")
    if "N" in cfg and cfg["N"] != dom.N:
        raise DomainError(f"domain.N: declared {cfg['N']} but {dom.N} factors given")
    return dom


def domain_to_config(domain: RectangularDomain) -> dict:
    return {
        "d": domain.d,
        "N": domain.N,
        "factors": [[list(R.lower), list(R.upper)] for R in domain.factors],
    }
