"""Command line entry point: ``wegnerlab {verify,wegner,ids,spectrum}``.

Exit codes: 0 success, 1 a check or bound failed, 2 bad configuration,
3 non-regular domain where a regular one is required.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .hamiltonian import Interaction, PotentialField, assemble, interaction_from_config
from .lattice import (
    DomainError,
    NonRegularDomainError,
    RectangularDomain,
    domain_from_config,
    domain_to_config,
)
from .montecarlo import SweepConfig, ids_density_estimate, spectrum_bounds, sweep
from .randomness import DensitySpec, density_from_config, sample_potential
from .spectral import eigenvalues
from .verify import SUITES, run_suite

THREADS_ENV = "WEGNERLAB_THREADS"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IRREGULAR = 0, 1, 2, 3

CONFIG_KEYS = {"domain", "domains", "density", "interaction", "energies", "kappas",
               "kappa", "grid_points", "samples", "seed"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    domains: list[RectangularDomain]
    density: DensitySpec | None
    interaction: Interaction
    energies: list[float] = field(default_factory=list)
    kappas: list[float] = field(default_factory=list)
    samples: int = 2000
    seed: int = 0
    output: str | None = None
    output_format: str = "csv"
    threads: int = 1
    raw: dict = field(default_factory=dict)

    def banner(self) -> str:
        shown = {
            "subcommand": self.subcommand,
            "domains": [domain_to_config(d) for d in self.domains],
            "density": self.density.to_config() if self.density else None,
            "interaction": self.raw.get("interaction"),
            "energies": self.energies,
            "kappas": self.kappas,
            "samples": self.samples,
            "seed": self.seed,
            "output": self.output,
            "format": self.output_format,
            "threads": self.threads,
        }
        return json.dumps(shown, sort_keys=True)


DEFAULT_VERIFY = {
    "domain": {"d": 1, "N": 2, "factors": [[[0], [5]], [[0], [5]]]},
    "density": {"family": "uniform", "a": 0.0, "b": 1.0},
    "interaction": {"type": "contact", "g": 1.0},
}


def load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'")
    return data


def _number_list(data, key) -> list[float]:
    val = data[key]
    if not isinstance(val, list) or not val:
        raise ConfigError(f"{key}: expected a nonempty list of numbers")
    try:
        return [float(x) for x in val]
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a nonempty list of numbers") from None


def _int(data, key, default) -> int:
    val = data.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{key}: expected an integer, got {val!r}")
    return val


def resolve(sub: str, data: dict, *, output=None, threads=None, require_density=True) -> RunConfig:
    """Validate a parsed config mapping into a ``RunConfig``."""
    try:
        if "domains" in data:
            if not isinstance(data["domains"], list) or not data["domains"]:
                raise ConfigError("domains: expected a nonempty list")
            domains = []
            for k, d in enumerate(data["domains"]):
                try:
                    domains.append(domain_from_config(d))
                except DomainError as exc:
                    raise ConfigError(f"domains[{k}]: {exc}") from None
        elif "domain" in data:
            domains = [domain_from_config(data["domain"])]
        else:
            raise ConfigError("domain: missing")
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    density = None
    if "density" in data:
        try:
            density = density_from_config(data["density"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    elif require_density:
        raise ConfigError("density: missing")
    try:
        U = interaction_from_config(data.get("interaction"), domains[0].d)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(sub, domains, density, U, raw=data)
    cfg.samples = _int(data, "samples", 2000)
    cfg.seed = _int(data, "seed", 0)
    if "energies" in data:
        cfg.energies = _number_list(data, "energies")
    if "kappas" in data:
        cfg.kappas = _number_list(data, "kappas")
    if "kappa" in data:
        try:
            cfg.kappas = [float(data["kappa"])]
        except (TypeError, ValueError):
            raise ConfigError("kappa: expected a number") from None
    if any(not k > 0 for k in cfg.kappas):
        raise ConfigError("kappas: values must be positive")
    if cfg.samples < 1:
        raise ConfigError("samples: must be positive")
    cfg.output = output
    if output is not None:
        cfg.output_format = "json" if str(output).endswith(".json") else "csv"
    cfg.threads = _threads(threads)
    return cfg


def _threads(flag) -> int:
    if flag is not None:
        n = flag
    else:
        env = os.environ.get(THREADS_ENV)
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}: expected an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("threads: must be at least 1")
    return n


def write_atomic(path: str | None, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename; ``None`` means stdout."""
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _banner(cfg: RunConfig, **extra) -> None:
    tail = "".join(f" {k}={v}" for k, v in extra.items())
    print(f"wegnerlab {cfg.subcommand}: seed={cfg.seed}{tail} config={cfg.banner()}", file=sys.stderr)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# -- subcommands --------------------------------------------------------------

def cmd_verify(args) -> int:
    data = load_config_file(args.domain) if args.domain else dict(DEFAULT_VERIFY)
    for key, val in DEFAULT_VERIFY.items():
        data.setdefault(key, val)
    cfg = resolve("verify", data, output=args.out, threads=args.threads)
    _banner(cfg, suite=args.suite, seeds=args.seeds)
    names = list(SUITES) if args.suite == "all" else [args.suite]
    domain = cfg.domains[0]
    seeds = range(cfg.seed, cfg.seed + args.seeds)
    report = {"domain": domain_to_config(domain), "seeds": args.seeds, "suites": {}}
    for name in names:
        report["suites"][name] = run_suite(name, domain, cfg.density, cfg.interaction,
                                           seeds, workers=cfg.threads)
    report["passed"] = all(r["failed"] == 0 for r in report["suites"].values())
    write_atomic(cfg.output, json.dumps(report, indent=2, default=_json_default) + "\n")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {obj!r}")


def cmd_wegner(args) -> int:
    cfg = resolve("wegner", load_config_file(args.config), output=args.out, threads=args.threads)
    if not cfg.energies or not cfg.kappas:
        raise ConfigError("energies/kappas: both grids are required for wegner")
    _banner(cfg)
    try:
        sc = SweepConfig(tuple(cfg.domains), cfg.density, cfg.interaction,
                         tuple(cfg.energies), tuple(cfg.kappas), cfg.samples, cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = sweep(sc, workers=cfg.threads)
    text = report.to_json() + "\n" if cfg.output_format == "json" else report.to_csv()
    write_atomic(cfg.output, text)
    return EXIT_OK if report.passed else EXIT_FAIL


IDS_COLUMNS = ("E", "kappa", "samples", "count_mean", "count_se", "density", "density_se", "bound")


def cmd_ids(args) -> int:
    cfg = resolve("ids", load_config_file(args.config), output=args.out, threads=args.threads)
    if len(cfg.kappas) != 1:
        raise ConfigError("kappa: ids needs exactly one window half-width")
    domain = cfg.domains[0]
    if not cfg.energies:
        lo, hi = spectrum_bounds(domain, cfg.density, cfg.interaction)
        n = _int(cfg.raw, "grid_points", 21)
        cfg.energies = np.linspace(lo, hi, n).tolist()
    _banner(cfg)
    est = ids_density_estimate(domain, cfg.density, cfg.interaction, cfg.energies,
                               cfg.kappas[0], cfg.samples, cfg.seed, workers=cfg.threads)
    rows = list(est.rows())
    ok = all(r["density"] <= r["bound"] + 3 * r["density_se"] for r in rows)
    if cfg.output_format == "json":
        text = json.dumps({"rows": rows, "passed": ok}, indent=2) + "\n"
    else:
        lines = [",".join(IDS_COLUMNS)]
        for r in rows:
            lines.append(",".join(str(r[c]) if c == "samples" else _fmt(r[c]) for c in IDS_COLUMNS))
        text = "\n".join(lines) + "\n"
    write_atomic(cfg.output, text)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_spectrum(args) -> int:
    if args.domain:
        data = load_config_file(args.domain)
    else:
        data = {"domain": {"d": 1, "N": 1, "factors": [[[0], [1]]]}}
    cfg = resolve("spectrum", data, output=args.out, require_density=False)
    domain = cfg.domains[0]
    _banner(cfg)
    if cfg.density is None:
        v = PotentialField.zeros(domain)
    else:
        v = sample_potential(domain, cfg.density, cfg.seed)
    w = eigenvalues(assemble(domain, v, cfg.interaction))
    write_atomic(cfg.output, "".join(_fmt(x) + "\n" for x in w))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wegnerlab",
        description="Exact diagonalization and Monte Carlo checks for multi-particle Anderson operators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the randomized proof-step checks")
    p.add_argument("--suite", choices=[*SUITES, "all"], default="all", help="which check suite")
    p.add_argument("--seeds", type=int, default=100, help="number of seeds (default 100)")
    p.add_argument("--domain", metavar="FILE", help="YAML/JSON with domain, density, interaction")
    p.add_argument("--out", metavar="FILE", help="JSON report path (default stdout)")
    p.add_argument("--threads", type=int, help=f"worker processes (env {THREADS_ENV})")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("wegner", help="Monte Carlo sweep against the Wegner bound")
    p.add_argument("--config", metavar="FILE", required=True, help="YAML/JSON sweep config")
    p.add_argument("--out", metavar="FILE", help="report.csv or report.json (default CSV on stdout)")
    p.add_argument("--threads", type=int, help=f"worker processes (env {THREADS_ENV})")
    p.set_defaults(func=cmd_wegner)

    p = sub.add_parser("ids", help="finite-difference density of states estimate")
    p.add_argument("--config", metavar="FILE", required=True, help="YAML/JSON config")
    p.add_argument("--out", metavar="FILE", help="CSV or JSON output (default CSV on stdout)")
    p.add_argument("--threads", type=int, help=f"worker processes (env {THREADS_ENV})")
    p.set_defaults(func=cmd_ids)

    p = sub.add_parser("spectrum", help="dump eigenvalues of one realization as CSV")
    p.add_argument("--domain", metavar="FILE",
                   help="YAML/JSON with domain and optional density/interaction/seed "
                        "(default: two-site single particle, zero potential)")
    p.add_argument("--out", metavar="FILE", help="output path (default stdout)")
    p.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"wegnerlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonRegularDomainError as exc:
        print(f"wegnerlab: {exc}", file=sys.stderr)
        return EXIT_IRREGULAR


if __name__ == "__main__":
    sys.exit(main())
