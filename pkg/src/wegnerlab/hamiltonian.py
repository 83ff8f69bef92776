"""Finite-volume multi-particle Anderson operators.

The operator on a rectangular domain is the matrix truncation of

    H = sum_i h0^(i) + V + U,     V(x) = sum_i v(x_i),

where ``h0`` is nearest-neighbour hopping with entries +1 (no diagonal term),
``v`` is a single random potential shared by all particles and ``U`` is a
deterministic bounded interaction.  Hopping that leaves the domain is dropped.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .lattice import (
    DomainError,
    RectangularDomain,
    Rectangle,
    rectangle_sites,
    require_regular,
    site_index,
)

__all__ = [
    "PotentialField",
    "PairPotential",
    "GeneralBounded",
    "Interaction",
    "AssembledHamiltonian",
    "PerturbationInfo",
    "OperatorTemplate",
    "contact_interaction",
    "interaction_from_config",
    "kinetic_matrix",
    "potential_diagonal",
    "interaction_diagonal",
    "incidence_matrix",
    "assemble",
    "perturbation_info",
    "write_triplets",
]


@dataclass(frozen=True)
class PotentialField:
    """One real value per lattice site of Z^d, shared by all particles."""

    sites: tuple[tuple[int, ...], ...]
    values: np.ndarray
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sites = tuple(tuple(int(c) for c in s) for s in self.sites)
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        if values.shape != (len(sites),):
            raise ValueError(f"{len(sites)} sites but values of shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("potential values must be finite")
        lookup = {s: k for k, s in enumerate(sites)}
        if len(lookup) != len(sites):
            raise ValueError("duplicate site in potential field")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_lookup", lookup)

    @classmethod
    def zeros(cls, domain: RectangularDomain) -> "PotentialField":
        sites = domain.particle_sites()
        return cls(tuple(sites), np.zeros(len(sites)))

    @classmethod
    def from_mapping(cls, values: Mapping) -> "PotentialField":
        raw = {(k,) if isinstance(k, int) else tuple(k): v for k, v in values.items()}
        keys = sorted(raw)
        return cls(tuple(keys), np.array([raw[k] for k in keys], dtype=float))

    def __contains__(self, xi) -> bool:
        return tuple(xi) in self._lookup

    def position(self, xi) -> int:
        try:
            return self._lookup[tuple(int(c) for c in xi)]
        except KeyError:
            raise KeyError(f"site {tuple(xi)} has no potential value") from None

    def __getitem__(self, xi) -> float:
        return float(self.values[self.position(xi)])

    def with_value(self, xi, value: float) -> "PotentialField":
        values = self.values.copy()
        values[self.position(xi)] = value
        return PotentialField(self.sites, values)

    def shifted(self, xi, delta: float) -> "PotentialField":
        return self.with_value(xi, self[xi] + delta)

    def restricted_to(self, sites: Sequence) -> np.ndarray:
        """Values at ``sites`` in the given order; raises if any is missing."""
        return np.array([self.values[self.position(s)] for s in sites])


@dataclass(frozen=True)
class PairPotential:
    """``U(x) = sum_{i != j} u(x_i - x_j)`` over ordered pairs.

    ``u`` maps difference vectors to values; missing differences give 0.
    """

    u: Mapping[tuple[int, ...], float]

    @property
    def range(self) -> int:
        return max((sum(abs(c) for c in r) for r in self.u), default=0)

    def sup_norm(self, N: int) -> float:
        return N * (N - 1) * max((abs(x) for x in self.u.values()), default=0.0)


@dataclass(frozen=True)
class GeneralBounded:
    """Arbitrary interaction given as a table over N*d-dimensional sites."""

    table: Mapping[tuple[int, ...], float]


Interaction = Union[PairPotential, GeneralBounded, None]


def contact_interaction(g: float, d: int) -> PairPotential:
    """On-site pair interaction ``u(r) = g * [r == 0]``."""
    return PairPotential({(0,) * d: float(g)})


def interaction_from_config(cfg, d: int) -> Interaction:
    """Parse ``None``, ``{type: contact, g}`` or ``{type: pair, u: [[r, value], ...]}``."""
    if cfg is None:
        return None
    if not isinstance(cfg, dict) or "type" not in cfg:
        raise ValueError("interaction.type: missing")
    kind = cfg["type"]
    if kind in ("none", None):
        return None
    if kind == "contact":
        if "g" not in cfg:
            raise ValueError("interaction.g: missing")
        return contact_interaction(float(cfg["g"]), d)
    if kind == "pair":
        table = {}
        for r, val in cfg.get("u", []):
            r = (r,) if isinstance(r, int) else tuple(r)
            if len(r) != d:
                raise ValueError(f"interaction.u: difference {r} is not {d}-dimensional")
            table[r] = float(val)
        return PairPotential(table)
    raise ValueError(f"interaction.type: unknown kind {kind!r}")


@dataclass(frozen=True)
class AssembledHamiltonian:
    matrix: sp.csr_matrix
    domain: RectangularDomain

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


def _path_hopping(n: int) -> sp.csr_matrix:
    off = np.ones(n - 1)
    return sp.diags([off, off], [-1, 1], shape=(n, n), format="csr")


def _kron_sum(mats: Sequence[sp.spmatrix]) -> sp.csr_matrix:
    sizes = [m.shape[0] for m in mats]
    total = sp.csr_matrix((int(np.prod(sizes)),) * 2)
    for k, m in enumerate(mats):
        left = sp.identity(int(np.prod(sizes[:k])), format="csr")
        right = sp.identity(int(np.prod(sizes[k + 1:])), format="csr")
        total = total + sp.kron(sp.kron(left, m), right)
    return total.tocsr()


def rectangle_hopping(R: Rectangle) -> sp.csr_matrix:
    """Single-particle hopping ``h0`` truncated to ``R`` (2d neighbours)."""
    return _kron_sum([_path_hopping(n) for n in R.shape])


def kinetic_matrix(domain: RectangularDomain) -> AssembledHamiltonian:
    """``sum_i h0^(i)`` restricted to the domain."""
    mat = _kron_sum([rectangle_hopping(R) for R in domain.factors])
    mat.eliminate_zeros()
    mat.sort_indices()
    return AssembledHamiltonian(mat, domain)


def incidence_matrix(domain: RectangularDomain, sites: Sequence[tuple[int, ...]],
                     strict: bool = True) -> sp.csr_matrix:
    """Sparse ``(|Lambda|, len(sites))`` matrix of ``m_xi(x) = #{i : x_i = xi}``.

    With ``strict`` every particle coordinate of every domain site must appear
    in ``sites``; otherwise coordinates outside ``sites`` are ignored.
    """
    lookup = {tuple(s): k for k, s in enumerate(sites)}
    rows, cols = [], []
    for i, R in enumerate(domain.factors):
        rsites = rectangle_sites(R)
        if strict:
            missing = [s for s in rsites if s not in lookup]
            if missing:
                raise KeyError(f"site {missing[0]} has no potential value")
        local_cols = np.array([lookup.get(s, -1) for s in rsites])
        # particle i's coordinate at linear index x
        col = local_cols[(np.arange(domain.size) // domain._strides[i]) % R.size]
        keep = col >= 0
        rows.append(np.flatnonzero(keep))
        cols.append(col[keep])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(domain.size, len(sites)))


def potential_diagonal(domain: RectangularDomain, v: PotentialField) -> np.ndarray:
    """``V(x) = sum_i v(x_i)`` for every site in index order."""
    return incidence_matrix(domain, v.sites) @ v.values


def interaction_diagonal(domain: RectangularDomain, U: Interaction) -> np.ndarray:
    if U is None:
        return np.zeros(domain.size)
    if isinstance(U, GeneralBounded):
        out = np.zeros(domain.size)
        for x, val in U.table.items():
            try:
                out[site_index(domain, x)] = val
            except DomainError:
                continue  # entries outside the domain are truncated away
        return out
    if isinstance(U, PairPotential):
        coords = domain.block_coords()
        out = np.zeros(domain.size)
        for r, val in U.u.items():
            r = np.asarray(r, dtype=np.int64)
            for i in range(domain.N):
                for j in range(domain.N):
                    if i != j:
                        hit = np.all(coords[:, i, :] - coords[:, j, :] == r, axis=1)
                        out[hit] += val
        return out
    raise TypeError(f"unsupported interaction {U!r}")


def assemble(domain: RectangularDomain, v: PotentialField, U: Interaction = None) -> AssembledHamiltonian:
    """Sparse matrix of the finite-volume operator."""
    diag = potential_diagonal(domain, v) + interaction_diagonal(domain, U)
    mat = (kinetic_matrix(domain).matrix + sp.diags(diag, format="csr")).tocsr()
    mat.sort_indices()
    return AssembledHamiltonian(mat, domain)


class OperatorTemplate:
    """Precomputed pieces of ``assemble`` for repeated dense builds.

    Monte Carlo loops draw many potentials for one ``(domain, U)``; the kinetic
    part, the interaction diagonal and the incidence matrix stay fixed, so a
    sample costs one matrix-vector product.
    """

    def __init__(self, domain: RectangularDomain, U: Interaction = None):
        self.domain = domain
        self.U = U
        self.sites = tuple(domain.particle_sites())
        self.kinetic = kinetic_matrix(domain).dense()
        self.interaction = interaction_diagonal(domain, U)
        self.incidence = incidence_matrix(domain, self.sites).toarray()

    @property
    def dim(self) -> int:
        return self.domain.size

    def diagonal(self, values: np.ndarray) -> np.ndarray:
        """Diagonals for site values of shape ``(n_sites,)`` or ``(batch, n_sites)``."""
        return np.asarray(values) @ self.incidence.T + self.interaction

    def dense(self, values: np.ndarray) -> np.ndarray:
        """Dense matrices; a batch of site values gives a stacked array."""
        diag = self.diagonal(values)
        out = np.broadcast_to(self.kinetic, diag.shape + (self.dim,)).copy()
        idx = np.arange(self.dim)
        out[..., idx, idx] += diag
        return out

    def field(self, values: np.ndarray) -> PotentialField:
        return PotentialField(self.sites, values)


@dataclass(frozen=True)
class PerturbationInfo:
    site: tuple[int, ...]
    support: frozenset
    rank: int
    M: int


def perturbation_info(domain: RectangularDomain, xi) -> PerturbationInfo:
    """Support and rank of the diagonal change caused by moving ``v(xi)``.

    ``xi`` must lie in the first factor; ``M = K |Lambda| / |Lambda_1|``.
    """
    info = require_regular(domain)
    xi = tuple(int(c) for c in xi)
    R1 = domain.factors[0]
    if xi not in R1:
        raise DomainError(f"site {xi} is not in the first factor {R1}")
    coords = domain.block_coords()
    hit = np.any(np.all(coords == np.asarray(xi), axis=2), axis=1)
    support = frozenset(np.flatnonzero(hit).tolist())
    M = info.K * domain.size // R1.size
    rank = len(support)
    if rank > M:
        raise AssertionError(f"perturbation rank {rank} exceeds M={M}")
    return PerturbationInfo(xi, support, rank, M)


def write_triplets(H: AssembledHamiltonian, fh) -> None:
    """Write nonzero entries as ``row col value`` lines, 17 significant digits."""
    coo = H.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        fh.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n")
