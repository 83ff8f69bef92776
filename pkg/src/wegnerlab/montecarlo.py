"""Seeded Monte Carlo estimates of near-E spectral events and window counts.

Sample ``k`` of a cell with seed ``s`` uses the potential drawn from
``(s, k, site)`` only, so splitting the sample range across workers and
summing integer tallies reproduces the single-worker result bit for bit.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .hamiltonian import Interaction, OperatorTemplate
from .lattice import RectangularDomain, require_regular
from .randomness import DensitySpec, sample_values

__all__ = [
    "WindowEstimate",
    "IDSEstimate",
    "SweepConfig",
    "ReportRow",
    "WegnerReport",
    "ScalingFit",
    "wilson_interval",
    "cell_seed",
    "window_tallies",
    "estimate_probability",
    "estimate_expected_count",
    "ids_density_estimate",
    "sweep",
    "scaling_fit",
    "wegner_bound",
    "spectrum_bounds",
]

Z95 = float(stats.norm.ppf(0.975))
CHUNK = 256
REPORT_COLUMNS = ("domain_id", "E", "kappa", "samples", "p_hat", "ci_low", "ci_high",
                  "bound", "count_mean", "pass")


def wilson_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    p = hits / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return max(0.0, min(p, center - half)), min(1.0, max(p, center + half))


def cell_seed(base: int, *coords: int) -> int:
    """Stable 64-bit seed for a grid cell, independent of iteration order."""
    payload = struct.pack(f"<{1 + len(coords)}Q", base & 0xFFFFFFFFFFFFFFFF,
                          *(c & 0xFFFFFFFFFFFFFFFF for c in coords))
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def wegner_bound(density: DensitySpec, domain: RectangularDomain, kappa: float) -> float:
    """``4 ||rho||_inf |Lambda| kappa``."""
    return 4.0 * density.sup_norm * domain.size * kappa


def spectrum_bounds(domain: RectangularDomain, density: DensitySpec, U: Interaction = None):
    """Interval containing every possible eigenvalue (Gershgorin with extreme potentials)."""
    tmpl = _template(domain, U)
    hop = 2 * domain.N * domain.d
    lo = domain.N * density.support_min + tmpl.interaction.min() - hop
    hi = domain.N * density.support_max + tmpl.interaction.max() + hop
    return float(lo), float(hi)


_TEMPLATES: dict = {}


def _freeze(U):
    if U is None:
        return None
    table = getattr(U, "u", None)
    if table is None:
        table = U.table
    return type(U).__name__, tuple(sorted(table.items()))


def _template(domain: RectangularDomain, U: Interaction) -> OperatorTemplate:
    key = (domain, _freeze(U))
    if key not in _TEMPLATES:
        if len(_TEMPLATES) > 32:
            _TEMPLATES.clear()
        _TEMPLATES[key] = OperatorTemplate(domain, U)
    return _TEMPLATES[key]


def window_tallies(domain, density, U, seed: int, start: int, stop: int,
                   energies, kappas) -> np.ndarray:
    """Integer tallies for samples ``start..stop-1`` and each ``(E, kappa)`` pair.

    Returns an int64 array of shape ``(len(energies), 3)`` holding the number
    of samples with ``dist(sigma, E) < kappa``, the sum of window counts and
    the sum of squared window counts.
    """
    tmpl = _template(domain, U)
    energies = np.asarray(energies, dtype=float)
    kappas = np.asarray(kappas, dtype=float)
    out = np.zeros((len(energies), 3), dtype=np.int64)
    for lo in range(start, stop, CHUNK):
        idx = np.arange(lo, min(lo + CHUNK, stop))
        values = sample_values(tmpl.sites, density, seed, idx)
        w = np.linalg.eigvalsh(tmpl.dense(values))
        for j, (E, kappa) in enumerate(zip(energies, kappas)):
            off = w - E
            dist = np.min(np.abs(off), axis=1)
            count = np.sum((off > -kappa) & (off <= kappa), axis=1).astype(np.int64)
            out[j, 0] += int(np.sum(dist < kappa))
            out[j, 1] += int(count.sum())
            out[j, 2] += int((count * count).sum())
    return out


def _ranges(samples: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, samples))
    edges = np.linspace(0, samples, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run(jobs: Sequence[tuple], workers: int) -> list[np.ndarray]:
    """Evaluate ``window_tallies`` for each job tuple, optionally in processes."""
    if workers <= 1 or len(jobs) == 1:
        return [window_tallies(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(window_tallies, *job) for job in jobs]
        return [f.result() for f in futures]


def _tally(domain, density, U, seed, samples, energies, kappas, workers) -> np.ndarray:
    jobs = [(domain, density, U, seed, a, b, energies, kappas)
            for a, b in _ranges(samples, workers)]
    return np.sum(_run(jobs, workers), axis=0)


@dataclass(frozen=True)
class WindowEstimate:
    """Tallies of one ``(E, kappa)`` cell."""

    E: float
    kappa: float
    samples: int
    hits: int
    count_sum: int
    count_sq_sum: int

    @property
    def p_hat(self) -> float:
        return self.hits / self.samples

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.hits, self.samples)

    @property
    def ci_low(self) -> float:
        return self.ci[0]

    @property
    def ci_high(self) -> float:
        return self.ci[1]

    @property
    def count_mean(self) -> float:
        return self.count_sum / self.samples

    @property
    def count_se(self) -> float:
        n = self.samples
        if n < 2:
            return float("nan")
        var = (self.count_sq_sum - self.count_sum ** 2 / n) / (n - 1)
        return math.sqrt(max(var, 0.0) / n)


def _window(domain, density, U, E, kappa, samples, seed, workers) -> WindowEstimate:
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    t = _tally(domain, density, U, seed, samples, [E], [kappa], workers)[0]
    return WindowEstimate(float(E), float(kappa), int(samples), int(t[0]), int(t[1]), int(t[2]))


def estimate_probability(domain, density, U, E: float, kappa: float, samples: int,
                         seed: int, workers: int = 1) -> WindowEstimate:
    """Fraction of samples with an eigenvalue strictly within ``kappa`` of ``E``.

    The returned estimate also carries the Wilson interval (``ci_low``,
    ``ci_high``) and the window-count tallies of the same samples.
    """
    return _window(domain, density, U, E, kappa, samples, seed, workers)


def estimate_expected_count(domain, density, U, E: float, kappa: float, samples: int,
                            seed: int, workers: int = 1) -> WindowEstimate:
    """Mean number of eigenvalues in ``(E - kappa, E + kappa]`` (``count_mean``, ``count_se``)."""
    return _window(domain, density, U, E, kappa, samples, seed, workers)


@dataclass(frozen=True)
class IDSEstimate:
    energies: np.ndarray
    kappa: float
    samples: int
    count_mean: np.ndarray
    count_se: np.ndarray
    density: np.ndarray
    density_se: np.ndarray
    bound: float
    """``2 ||rho||_inf``."""

    def rows(self):
        for k, E in enumerate(self.energies):
            yield {"E": float(E), "kappa": self.kappa, "samples": self.samples,
                   "count_mean": float(self.count_mean[k]), "count_se": float(self.count_se[k]),
                   "density": float(self.density[k]), "density_se": float(self.density_se[k]),
                   "bound": self.bound}


def ids_density_estimate(domain, density, U, energies, kappa: float, samples: int,
                         seed: int, workers: int = 1) -> IDSEstimate:
    """Finite-difference density of the integrated density of states.

    All energies share the same samples, so counts over adjacent windows
    telescope exactly.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    energies = np.asarray(energies, dtype=float)
    t = _tally(domain, density, U, seed, samples, energies, np.full(len(energies), kappa), workers)
    ests = [WindowEstimate(float(E), kappa, samples, *map(int, row)) for E, row in zip(energies, t)]
    mean = np.array([e.count_mean for e in ests])
    se = np.array([e.count_se for e in ests])
    scale = 2 * kappa * domain.size
    return IDSEstimate(energies, float(kappa), int(samples), mean, se, mean / scale, se / scale,
                       2.0 * density.sup_norm)


@dataclass(frozen=True)
class SweepConfig:
    domains: tuple[RectangularDomain, ...]
    density: DensitySpec
    interaction: Interaction
    energies: tuple[float, ...]
    kappas: tuple[float, ...]
    samples: int
    seed: int

    def __post_init__(self):
        if not self.domains or not self.energies or not self.kappas:
            raise ValueError("domain, energy and kappa grids must be nonempty")
        if self.samples < 100:
            raise ValueError("samples must be at least 100")
        if any(not k > 0 for k in self.kappas):
            raise ValueError("kappa values must be positive")


@dataclass(frozen=True)
class ReportRow:
    domain_id: int
    E: float
    kappa: float
    samples: int
    p_hat: float
    ci_low: float
    ci_high: float
    bound: float
    count_mean: float
    count_se: float
    hits: int

    @property
    def passed(self) -> bool:
        return self.ci_low <= self.bound


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.17g}"


@dataclass(frozen=True)
class WegnerReport:
    rows: tuple[ReportRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(r.domain_id), _fmt(r.E), _fmt(r.kappa), _fmt(r.samples),
                             _fmt(r.p_hat), _fmt(r.ci_low), _fmt(r.ci_high), _fmt(r.bound),
                             _fmt(r.count_mean), _fmt(r.passed)])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{**asdict(r), "pass": r.passed} for r in self.rows]
        return json.dumps({"rows": rows, "passed": self.passed}, indent=2)


def sweep(config: SweepConfig, workers: int = 1) -> WegnerReport:
    """Evaluate every ``(domain, E, kappa)`` cell with its own derived seed."""
    for dom in config.domains:
        require_regular(dom)
    cells, jobs = [], []
    for di, dom in enumerate(config.domains):
        for ei, E in enumerate(config.energies):
            for ki, kappa in enumerate(config.kappas):
                seed = cell_seed(config.seed, di, ei, ki)
                parts = _ranges(config.samples, workers)
                cells.append((di, dom, E, kappa, len(parts)))
                jobs += [(dom, config.density, config.interaction, seed, a, b, [E], [kappa])
                         for a, b in parts]
    results = iter(_run(jobs, workers))
    rows = []
    for di, dom, E, kappa, nparts in cells:
        t = np.sum([next(results)[0] for _ in range(nparts)], axis=0)
        est = WindowEstimate(float(E), float(kappa), config.samples, int(t[0]), int(t[1]), int(t[2]))
        lo, hi = est.ci
        rows.append(ReportRow(di, est.E, est.kappa, est.samples, est.p_hat, lo, hi,
                              wegner_bound(config.density, dom, kappa), est.count_mean,
                              est.count_se, est.hits))
    return WegnerReport(tuple(rows))


@dataclass(frozen=True)
class ScalingFit:
    domain_id: int
    E: float
    kappas: np.ndarray
    p_hat: np.ndarray
    slope: float
    slope_se: float
    residuals: np.ndarray
    bound_slope: float
    """``4 ||rho||_inf |Lambda|``, the slope of the bound."""


def scaling_fit(report: WegnerReport, max_kappa: float | None = None) -> list[ScalingFit]:
    """Least-squares slope through the origin of ``p_hat`` against ``kappa``.

    Groups rows by ``(domain_id, E)`` and keeps cells with ``kappa <= max_kappa``.
    """
    groups: dict[tuple, list[ReportRow]] = {}
    for r in report.rows:
        if max_kappa is None or r.kappa <= max_kappa:
            groups.setdefault((r.domain_id, r.E), []).append(r)
    fits = []
    for (di, E), rows in sorted(groups.items()):
        if len(rows) < 3:
            raise ValueError(f"domain {di}, E={E}: need at least 3 kappa points, got {len(rows)}")
        rows.sort(key=lambda r: r.kappa)
        k = np.array([r.kappa for r in rows])
        p = np.array([r.p_hat for r in rows])
        slope = float(k @ p / (k @ k))
        res = p - slope * k
        dof = len(k) - 1
        slope_se = float(math.sqrt((res @ res) / dof / (k @ k)))
        fits.append(ScalingFit(di, float(E), k, p, slope, slope_se, res, rows[0].bound / rows[0].kappa))
    return fits
