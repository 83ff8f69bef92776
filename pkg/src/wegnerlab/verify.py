"""Numerical checks of the Wegner-estimate proof steps.

Each check works on a single realization and returns a small report object;
the ``run_suite`` driver repeats them over seeds and tallies the outcomes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .hamiltonian import (
    Interaction,
    PotentialField,
    assemble,
    incidence_matrix,
    perturbation_info,
)
from .lattice import RectangularDomain, rectangle_sites, require_regular
from .randomness import DensitySpec, clamp_site, sample_potential
from .spectral import Spectrum, eigen_symmetric, eigenvalues, spectral_distance, windowed_trace

__all__ = [
    "InapplicableCheck",
    "QuadratureError",
    "SmoothSwitch",
    "smooth_switch",
    "adaptive_simpson",
    "fh_derivative",
    "fh_derivatives",
    "fd_derivative",
    "fd_derivatives",
    "lemma31_check",
    "interlacing_check",
    "lemma32_oracle",
    "chain_check",
    "chain_rule_check",
    "run_suite",
    "SUITES",
]

SLACK = 1e-9
FD_TOL = 1e-6
QUAD_TOL = 1e-6


class InapplicableCheck(Exception):
    """The precondition of a check does not hold; not a failure of the check."""


class QuadratureError(RuntimeError):
    pass


def _bump(u):
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    safe = np.where(inside, 1.0 - u * u, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


_BUMP_MASS = integrate.quad(lambda u: float(_bump(u)), -1.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)[0]


@dataclass(frozen=True)
class SmoothSwitch:
    """C-infinity switch rising from 0 at ``-kappa`` to 1 at ``kappa``.

    ``value(t) = (1/Z) * int_{-1}^{t/kappa} exp(-1/(1-u^2)) du``, clamped.
    """

    kappa: float
    Z: float = _BUMP_MASS

    def derivative(self, t):
        return _bump(np.asarray(t, dtype=float) / self.kappa) / (self.kappa * self.Z)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t).ravel()
        out = (flat >= self.kappa).astype(float)
        for k in np.flatnonzero(np.abs(flat) < self.kappa):
            s = flat[k] / self.kappa
            # integrate the shorter tail and use the bump's evenness
            part = integrate.quad(lambda u: float(_bump(u)), -1.0, -abs(s),
                                  epsabs=1e-15, epsrel=1e-13, limit=200)[0] / self.Z
            out[k] = part if s <= 0 else 1.0 - part
        return float(out[0]) if t.ndim == 0 else out.reshape(t.shape)

    __call__ = value


def smooth_switch(kappa: float) -> SmoothSwitch:
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    return SmoothSwitch(float(kappa))


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-8, max_depth: int = 50) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        if depth >= max_depth:
            raise QuadratureError(f"adaptive Simpson did not converge on [{a}, {b}]")
        return (recurse(a, m, fa, flm, fm, left, tol / 2, depth + 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2, depth + 1))

    if a == b:
        return 0.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 0)


# -- Feynman-Hellmann and finite differences ---------------------------------

def _site_column(domain: RectangularDomain, xi) -> np.ndarray:
    coords = domain.block_coords()
    return np.all(coords == np.asarray(xi), axis=2).sum(axis=1).astype(float)


def fh_derivative(S: Spectrum, domain: RectangularDomain, n: int, xi) -> float:
    """``sum_x |psi_n(x)|^2 #{i : x_i = xi}``."""
    psi = S.eigenvectors[:, n]
    return float(np.dot(psi * psi, _site_column(domain, xi)))


def fh_derivatives(S: Spectrum, domain: RectangularDomain, sites) -> np.ndarray:
    """All Feynman-Hellmann derivatives, shape ``(dim, len(sites))``."""
    A = incidence_matrix(domain, sites, strict=False)
    return np.asarray((A.T @ (S.eigenvectors ** 2)).T)


def _gaps(w: np.ndarray) -> np.ndarray:
    d = np.diff(w)
    return np.minimum(np.r_[np.inf, d], np.r_[d, np.inf])


def fd_derivatives(domain, v: PotentialField, U: Interaction, xi, h: float = 1e-4,
                   min_gap: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of every eigenvalue in ``v(xi)``.

    Returns ``(derivatives, applicable)``; ``applicable[n]`` is False where the
    gap of ``E_n`` to its neighbours is below ``max(min_gap, 10 h)``.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    w0 = eigenvalues(assemble(domain, v, U))
    wp = eigenvalues(assemble(domain, v.shifted(xi, h), U))
    wm = eigenvalues(assemble(domain, v.shifted(xi, -h), U))
    return (wp - wm) / (2 * h), _gaps(w0) > max(min_gap, 10 * h)


def fd_derivative(domain, v, U, xi, n: int, h: float = 1e-4, min_gap: float = 1e-3) -> float:
    values, ok = fd_derivatives(domain, v, U, xi, h, min_gap)
    if not ok[n]:
        raise InapplicableCheck(f"eigenvalue {n} is (nearly) degenerate; derivative not defined")
    return float(values[n])


# -- proof steps --------------------------------------------------------------

@dataclass(frozen=True)
class Lemma31Report:
    K: int
    sums: np.ndarray
    deviations: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(self.deviations.max())

    @property
    def passed(self) -> bool:
        return self.max_deviation <= SLACK


def lemma31_check(domain: RectangularDomain, v: PotentialField, U: Interaction = None,
                  spectrum: Spectrum | None = None) -> Lemma31Report:
    """Sum of eigenvalue derivatives over the first factor, per eigenvalue."""
    info = require_regular(domain)
    S = spectrum if spectrum is not None else eigen_symmetric(assemble(domain, v, U))
    sums = fh_derivatives(S, domain, rectangle_sites(domain.factors[0])).sum(axis=1)
    return Lemma31Report(info.K, sums, np.abs(sums - info.K))


@dataclass(frozen=True)
class InterlacingReport:
    site: tuple
    M: int
    rank: int
    lower_slack: float
    upper_slack: float
    top_edge: int
    """Number of indices ``n`` whose partner ``n + M`` falls past the top."""

    @property
    def passed(self) -> bool:
        return self.lower_slack >= -SLACK and self.upper_slack >= -SLACK


def interlacing_check(domain, v, U, density: DensitySpec, xi) -> InterlacingReport:
    """Compare spectra with ``v(xi)`` clamped to the bottom and top of the support."""
    pert = perturbation_info(domain, xi)
    lo = eigenvalues(assemble(domain, clamp_site(v, xi, "min", density), U))
    hi = eigenvalues(assemble(domain, clamp_site(v, xi, "max", density), U))
    dim, M = len(lo), pert.M
    # E_{n+M} = +inf past the end of the spectrum
    shifted = np.r_[lo[M:], np.full(min(M, dim), np.inf)]
    upper = shifted - hi
    return InterlacingReport(
        site=pert.site,
        M=M,
        rank=pert.rank,
        lower_slack=float(np.min(hi - lo)),
        upper_slack=float(np.min(upper)),
        top_edge=int(np.sum(np.isinf(shifted))),
    )


@dataclass(frozen=True)
class Lemma32Result:
    total: float
    M: int

    @property
    def holds(self) -> bool:
        return self.total <= self.M + SLACK


def lemma32_oracle(a, b, M: int, phi: Callable) -> Lemma32Result:
    """Evaluate ``sum_n phi(b_n) - phi(a_n)`` after checking the sandwich precondition.

    Raises ``InapplicableCheck`` unless both sequences are nondecreasing and
    ``a_n <= b_n <= a_{n+M}`` (with ``a_{n+M} = +inf`` past the end).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InapplicableCheck("a and b must be 1-d sequences of equal length")
    if M < 0:
        raise InapplicableCheck("M must be non-negative")
    if np.any(np.diff(a) < 0) or np.any(np.diff(b) < 0):
        raise InapplicableCheck("sequences must be nondecreasing")
    upper = np.r_[a[M:], np.full(min(M, len(a)), np.inf)]
    if np.any(b < a) or np.any(b > upper):
        raise InapplicableCheck("a_n <= b_n <= a_{n+M} violated")
    total = float(np.sum(np.asarray(phi(b), dtype=float) - np.asarray(phi(a), dtype=float)))
    return Lemma32Result(total, int(M))


@dataclass(frozen=True)
class ChainResult:
    indicator: int
    count: int
    switch_trace: float
    integral: float

    @property
    def monotone(self) -> bool:
        return (self.indicator <= self.count
                and self.count <= self.switch_trace + SLACK)

    @property
    def quadrature_error(self) -> float:
        return abs(self.switch_trace - self.integral)

    @property
    def passed(self) -> bool:
        return self.monotone and self.quadrature_error <= QUAD_TOL

    def as_tuple(self) -> tuple:
        return (self.indicator, self.count, self.switch_trace, self.integral)


def chain_check(S, E: float, kappa: float, phi: SmoothSwitch | None = None) -> ChainResult:
    """Evaluate the four quantities bounding the near-``E`` event for one spectrum.

    indicator of ``dist(sigma, E) < kappa`` <= ``N(E+kappa) - N(E-kappa)``
    <= ``sum_n phi(E_n-E+2kappa) - phi(E_n-E-2kappa)``
    == ``int_{-2kappa}^{2kappa} sum_n phi'(E_n-E+t) dt``.
    """
    phi = phi if phi is not None else smooth_switch(kappa)
    if not math.isclose(phi.kappa, kappa):
        raise ValueError("switch half-width must equal kappa")
    w = S.eigenvalues if isinstance(S, Spectrum) else np.asarray(S, dtype=float)
    indicator = int(spectral_distance(w, E) < kappa)
    count = int(windowed_trace(w, E, kappa))
    near = w[np.abs(w - E) < 3 * kappa]
    switch_trace = float(np.sum(phi(near - E + 2 * kappa) - phi(near - E - 2 * kappa)))

    def integrand(t):
        return float(np.sum(phi.derivative(near - E + t)))

    # split at the edges of every bump so no support is skipped
    cuts = np.concatenate([[-2 * kappa, 2 * kappa], E - near - kappa, E - near + kappa])
    cuts = np.unique(np.clip(cuts, -2 * kappa, 2 * kappa))
    integral = sum(adaptive_simpson(integrand, lo, hi, tol=1e-8 / len(cuts))
                   for lo, hi in zip(cuts[:-1], cuts[1:]))
    return ChainResult(indicator, count, switch_trace, integral)


def chain_rule_check(domain, v, U, phi: SmoothSwitch, E: float, t: float,
                     h: float = 1e-4) -> np.ndarray:
    """Per eigenvalue, ``K phi'(E_n - E + t)`` minus the summed derivatives of
    ``phi(E_n - E + t)`` in ``v(xi)`` over the first factor (central differences).

    Both sides are equal whenever the lemma on derivative sums holds.
    """
    info = require_regular(domain)
    w = eigenvalues(assemble(domain, v, U))
    lhs = info.K * phi.derivative(w - E + t)
    rhs = np.zeros_like(w)
    for xi in rectangle_sites(domain.factors[0]):
        wp = eigenvalues(assemble(domain, v.shifted(xi, h), U))
        wm = eigenvalues(assemble(domain, v.shifted(xi, -h), U))
        rhs += (np.asarray(phi(wp - E + t)) - np.asarray(phi(wm - E + t))) / (2 * h)
    return lhs - rhs


# -- randomized suites --------------------------------------------------------

def random_lemma32_instance(rng: np.random.Generator):
    """Random ``(a, b, M, phi)`` satisfying the sandwich precondition."""
    L = int(rng.integers(1, 40))
    M = int(rng.integers(0, 6))
    a = np.sort(rng.normal(scale=3.0, size=L))
    if rng.random() < 0.3:
        a = np.round(a)  # ties
    b = np.empty(L)
    prev = -np.inf
    for n in range(L):
        top = a[n + M] if n + M < L else a[n] + rng.exponential(2.0)
        b[n] = max(prev, rng.uniform(a[n], top))
        prev = b[n]
    kind = rng.integers(4)
    if kind == 0:
        phi = smooth_switch(float(rng.uniform(0.05, 3.0)))
        shift = float(rng.normal())
        fn = lambda t, phi=phi, shift=shift: phi(np.asarray(t) - shift)
    elif kind == 1:
        lo_, width = float(rng.normal()), float(rng.uniform(0.1, 5.0))
        fn = lambda t: np.clip((np.asarray(t) - lo_) / width, 0.0, 1.0)
    elif kind == 2:
        theta = float(rng.normal())
        fn = lambda t: (np.asarray(t) >= theta).astype(float)
    else:
        knots = np.sort(rng.normal(scale=3.0, size=6))
        levels = np.sort(rng.uniform(size=6))
        fn = lambda t: np.interp(t, knots, levels)
    return a, b, M, fn


def tight_lemma32_instance(rng: np.random.Generator, smooth: bool = False):
    """Instance with ``b_n = a_{n+M}`` whose sum equals (or nearly equals) ``M``."""
    M = int(rng.integers(1, 6))
    L = M + int(rng.integers(2, 30))
    a = np.cumsum(rng.uniform(0.5, 1.5, size=L))
    b = np.r_[a[M:], a[-1] + np.arange(1, M + 1)]
    j = int(rng.integers(M, L))
    theta = 0.5 * (a[j - 1] + a[j])
    if smooth:
        phi = smooth_switch(1e-3)
        fn = lambda t: phi(np.asarray(t) - theta)
    else:
        fn = lambda t: (np.asarray(t) >= theta).astype(float)
    return a, b, M, fn


@dataclass
class SuiteTally:
    passed: int = 0
    failed: int = 0
    inapplicable: int = 0
    worst: float = 0.0
    details: list = field(default_factory=list)

    def record(self, ok: bool, value: float = 0.0, detail=None):
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            if detail is not None and len(self.details) < 10:
                self.details.append(detail)
        self.worst = max(self.worst, float(value))

    def as_dict(self) -> dict:
        return {"passed": self.passed, "failed": self.failed,
                "inapplicable": self.inapplicable, "worst": self.worst,
                "failures": self.details}


def _suite_lemma31(domain, density, U, seeds, tally):
    for s in seeds:
        rep = lemma31_check(domain, sample_potential(domain, density, s), U)
        tally.record(rep.passed, rep.max_deviation, {"seed": s})


def _suite_fh_fd(domain, density, U, seeds, tally, h=1e-4):
    sites = domain.particle_sites()
    for s in seeds:
        v = sample_potential(domain, density, s)
        fh = fh_derivatives(eigen_symmetric(assemble(domain, v, U)), domain, sites)
        for k, xi in enumerate(sites):
            fd, ok = fd_derivatives(domain, v, U, xi, h)
            err = np.abs(fd - fh[:, k])
            tally.inapplicable += int(np.sum(~ok))
            for n in np.flatnonzero(ok):
                tally.record(err[n] <= FD_TOL, err[n], {"seed": s, "site": xi, "n": int(n)})


def _suite_interlacing(domain, density, U, seeds, tally):
    for s in seeds:
        v = sample_potential(domain, density, s)
        for xi in rectangle_sites(domain.factors[0]):
            rep = interlacing_check(domain, v, U, density, xi)
            tally.record(rep.passed, max(0.0, -min(rep.lower_slack, rep.upper_slack)),
                         {"seed": s, "site": xi})


def _suite_lemma32(domain, density, U, seeds, tally):
    for s in seeds:
        rng = np.random.default_rng([s, 32])
        for make in (random_lemma32_instance, tight_lemma32_instance):
            a, b, M, phi = make(rng)
            res = lemma32_oracle(a, b, M, phi)
            tally.record(res.holds, max(0.0, res.total - M), {"seed": s})


def _suite_chain(domain, density, U, seeds, tally):
    for s in seeds:
        rng = np.random.default_rng([s, 310])
        w = eigenvalues(assemble(domain, sample_potential(domain, density, s), U))
        kappa = float(rng.choice([0.01, 0.05, 0.2]))
        for E in (float(rng.uniform(w[0] - 1, w[-1] + 1)), float(w[rng.integers(len(w))])):
            res = chain_check(w, E, kappa)
            tally.record(res.passed, res.quadrature_error, {"seed": s, "E": E, "kappa": kappa})


SUITES = {
    "lemma31": _suite_lemma31,
    "fh-fd": _suite_fh_fd,
    "interlacing": _suite_interlacing,
    "lemma32": _suite_lemma32,
    "chain": _suite_chain,
}


def _suite_chunk(name, domain, density, U, seeds) -> SuiteTally:
    tally = SuiteTally()
    SUITES[name](domain, density, U, list(seeds), tally)
    return tally


def run_suite(name: str, domain, density, U, seeds, workers: int = 1) -> dict:
    """Run one named suite over ``seeds`` and return its tally as a dict.

    With ``workers > 1`` the seeds are split into contiguous chunks evaluated
    in separate processes; tallies are merged in chunk order.
    """
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}")
    seeds = list(seeds)
    if workers <= 1 or len(seeds) < 2:
        return _suite_chunk(name, domain, density, U, seeds).as_dict()
    chunks = [c.tolist() for c in np.array_split(np.asarray(seeds), min(workers, len(seeds)))]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_suite_chunk, *zip(*[(name, domain, density, U, c) for c in chunks])))
    total = SuiteTally()
    for part in parts:
        total.passed += part.passed
        total.failed += part.failed
        total.inapplicable += part.inapplicable
        total.worst = max(total.worst, part.worst)
        total.details.extend(part.details[: 10 - len(total.details)])
    return total.as_dict()
