"""Command-line driver: runs experiments and writes CSV, a JSON manifest, a summary and a gnuplot stub.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure,
3 acceptance-suite failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import PROFILES, CRITERIA, exact_resonance_phase, run_criterion
from .arithmetic import continued_fraction
from .cache import ENV_VAR, EigenCache, cached_solve
from .cocycle import lyapunov_estimate
from .correlator import (DEFAULT_LADDER, STRATEGIES, CorrelatorBoundError, expectation_sweep, gamma_fit,
                         lower_bound_experiment)
from .localization import HypothesisError, classify_and_verify, palindrome_check, verify_corollary
from .operator import EigenSolverError, ModelParams, Window, window_for
from .resonance import measure_A, measure_B, measure_bound_A, set_A, set_B, theta_sets

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 1, 2, 3

log = logging.getLogger("amolab")

# fields that do not affect results and stay out of the config hash
_RUNTIME_FIELDS = ("workers", "out", "cache")


@dataclass
class RunConfig:
    lam: float = 3.0
    alpha: str = "golden"
    theta: float = 0.0
    n_phases: int = 20
    window: list | None = None
    window_factor: int = 4
    ell_min: int = 4
    ell_max: int = 24
    strategy: str = "stratified"
    ladder: list = field(default_factory=lambda: list(DEFAULT_LADDER))
    n_grid: int = 20_000
    n_bulk: int = 128
    n_shell: int = 128
    gamma_factor: float = 1.2
    eta_factor: float = 0.3
    eps_factor: float = 0.15
    delta0: float = 0.2
    n: int = 12
    c_win: float = 2.0
    n_samples: int = 50
    probe: int = 40
    min_scale: int = 15
    n_energies: int = 50
    n_steps: int = 100_000
    n_bins: int = 50
    profile: str = "full"
    seed: int = 0
    workers: int = 1
    out: str = "amolab-out"
    cache: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _RUNTIME_FIELDS}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def params(self) -> ModelParams:
        return ModelParams.make(self.lam, self.alpha, self.theta)

    def window_rule(self) -> Window:
        if self.window is not None:
            return Window(int(self.window[0]), int(self.window[1]))
        return window_for(self.ell_max, self.window_factor)


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


_SUPERCRITICAL = {"gamma", "correlator", "verify-localization", "resonance-sets", "theta-experiment", "palindrome"}


def validate(cfg: RunConfig, command: str) -> None:
    """Collect every field-level problem, then raise once."""
    bad = []

    def need(cond, name, msg):
        if not cond:
            bad.append(f"{name}: {msg}")

    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    for name, t in types.items():
        v = getattr(cfg, name)
        if t == "int" and (not isinstance(v, int) or isinstance(v, bool)):
            bad.append(f"{name}: expected an integer, got {v!r}")
        if t == "float" and (not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v)):
            bad.append(f"{name}: expected a finite number, got {v!r}")
    if bad:
        raise ConfigError(bad)
    need(cfg.lam > 0, "lam", "must be positive")
    if command in _SUPERCRITICAL:
        need(cfg.lam > 1, "lam", "must exceed 1 for this subcommand")
    try:
        continued_fraction(cfg.alpha if not isinstance(cfg.alpha, (int, float)) else float(cfg.alpha), 40)
    except (ValueError, TypeError) as exc:
        bad.append(f"alpha: {exc}")
    need(0 <= cfg.theta < 1, "theta", "must lie in [0, 1)")
    need(cfg.n_phases >= 1, "n_phases", "must be >= 1")
    if cfg.window is not None:
        ok = isinstance(cfg.window, (list, tuple)) and len(cfg.window) == 2 and all(
            isinstance(x, int) for x in cfg.window)
        need(ok, "window", "must be [lo, hi] with integers")
        if ok:
            need(cfg.window[0] <= 0 <= cfg.window[1], "window", "must contain site 0")
    need(cfg.window_factor >= 1, "window_factor", "must be >= 1")
    need(cfg.ell_min <= cfg.ell_max, "ell_min", f"empty l range [{cfg.ell_min}, {cfg.ell_max}]")
    need(cfg.ell_min >= 1, "ell_min", "must be >= 1")
    need(cfg.strategy in STRATEGIES, "strategy", f"must be one of {', '.join(STRATEGIES)}")
    lad = cfg.ladder
    need(isinstance(lad, list) and len(lad) > 0 and all(isinstance(x, (int, float)) and x > 0 for x in lad)
         and lad == sorted(lad), "ladder", "must be a nonempty increasing list of positive numbers")
    need(cfg.n_grid >= 2 and cfg.n_grid % 2 == 0, "n_grid", "must be even and >= 2")
    need(cfg.n_bulk >= 2 and cfg.n_bulk % 2 == 0, "n_bulk", "must be even and >= 2")
    need(cfg.n_shell >= 2 and cfg.n_shell % 2 == 0, "n_shell", "must be even and >= 2")
    need(1 < cfg.gamma_factor <= 2, "gamma_factor", "Gamma/L must lie in (1, 2]")
    need(0 < cfg.eps_factor < 1, "eps_factor", "eps/L must lie in (0, 1)")
    need(0 < cfg.eta_factor < 1 - cfg.eps_factor, "eta_factor", "eta/L must lie in (0, 1 - eps/L)")
    need(0 < cfg.delta0 < 0.5, "delta0", "must lie in (0, 1/2)")
    need(cfg.n != 0, "n", "must be nonzero")
    need(cfg.c_win > 0, "c_win", "must be positive")
    need(cfg.n_samples >= 1, "n_samples", "must be >= 1")
    need(cfg.probe >= 1, "probe", "must be >= 1")
    need(cfg.min_scale >= 1, "min_scale", "must be >= 1")
    need(cfg.n_energies >= 1, "n_energies", "must be >= 1")
    need(cfg.n_steps >= 1000, "n_steps", "must be >= 1000")
    need(cfg.n_bins >= 1, "n_bins", "must be >= 1")
    need(cfg.profile in PROFILES, "profile", f"must be one of {', '.join(PROFILES)}")
    need(cfg.workers >= 1, "workers", "must be >= 1")
    if bad:
        raise ConfigError(bad)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be a JSON object"])
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError([f"{k}: unknown field" for k in unknown])
    return RunConfig(**data)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


class Output:
    """Writes every artifact of one run under ``out/``, stamped with version and config hash."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.dir = Path(cfg.out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stamp = f"amolab {__version__} config {cfg.hash()}"
        self.files: list[str] = []
        self.summary_lines: list[str] = []

    def csv(self, name: str, header: list[str], rows) -> Path:
        buf = io.StringIO()
        buf.write(f"# {self.stamp}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])
        return self._write(name, buf.getvalue())

    def say(self, line: str) -> None:
        self.summary_lines.append(line)
        print(line)

    def plot(self, csv_name: str, x: int, ys: list[int], logscale: bool = False, title: str = "") -> None:
        cols = ", ".join(f"'{csv_name}' using {x}:{y} with linespoints title columnheader({y})" for y in ys)
        lines = [f"# {self.stamp}", "set datafile separator ','", "set datafile commentschars '#'",
                 "set key autotitle columnhead"]
        if title:
            lines.append(f"set title '{title}'")
        if logscale:
            lines.append("set logscale y")
        lines.append(f"plot {cols}")
        self._write("plot.gp", "\n".join(lines) + "\n")

    def _write(self, name: str, text: str) -> Path:
        p = self.dir / name
        tmp = p.with_suffix(p.suffix + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, p)
        if name not in self.files:
            self.files.append(name)
        return p

    def finish(self, extra: dict | None = None) -> None:
        self._write("summary.txt", f"# {self.stamp}\n" + "\n".join(self.summary_lines) + "\n")
        cfg = {k: v for k, v in self.cfg.to_dict().items() if k not in _RUNTIME_FIELDS}
        manifest = {"artifact": "amolab", "version": __version__, "command": self.command,
                    "config_hash": self.cfg.hash(), "config": cfg, "seed": self.cfg.seed,
                    "window_rule": f"[-{self.cfg.window_factor} l_max, {self.cfg.window_factor} l_max]"
                    if self.cfg.window is None else f"fixed {self.cfg.window}",
                    "files": sorted(self.files + ["manifest.json"])}
        if extra:
            manifest.update(extra)
        self._write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _cache(cfg: RunConfig) -> EigenCache | None:
    root = cfg.cache or os.environ.get(ENV_VAR)
    return EigenCache(root) if root else None


def _phases(cfg: RunConfig) -> np.ndarray:
    return np.random.default_rng([cfg.seed, 0x766C]).random(cfg.n_phases)


def cmd_spectrum(cfg: RunConfig, out: Output) -> int:
    params = cfg.params()
    window = cfg.window_rule()
    es = cached_solve(params, window, _cache(cfg))
    out.csv("spectrum.csv", ["s", "energy", "center", "sup_norm", "boundary_mass"],
            zip(range(es.size), es.energies, es.centers, es.sup_norm, es.boundary_mass))
    counts, edges = np.histogram(es.energies, bins=cfg.n_bins, range=(-2 * cfg.lam - 2, 2 * cfg.lam + 2))
    out.csv("dos.csv", ["bin_lo", "bin_hi", "density"],
            zip(edges[:-1], edges[1:], counts / (es.size * np.diff(edges))))
    out.plot("dos.csv", 1, [3], title="density of states")
    d1, d2 = es.orthonormality_defects()
    out.say(f"spectrum: {es.size} eigenvalues on [{window.lo}, {window.hi}] in "
            f"[{es.energies[0]:.6f}, {es.energies[-1]:.6f}]; orthonormality defect {max(d1, d2):.2e}")
    return EXIT_OK


def cmd_lyapunov(cfg: RunConfig, out: Output) -> int:
    params = cfg.params()
    energies = np.linspace(-2 * cfg.lam - 2, 2 * cfg.lam + 2, cfg.n_energies)
    rows = []
    for e in energies:
        est = lyapunov_estimate(float(e), params, cfg.n_steps)
        rows.append((e, est.value, est.tail, params.lyapunov))
    out.csv("lyapunov.csv", ["energy", "lyapunov", "tail_rate", "ln_lambda"], rows)
    out.plot("lyapunov.csv", 1, [2, 4], title="Lyapunov exponent")
    lo = min(r[1] for r in rows)
    out.say(f"lyapunov: min over grid {lo:.6f} vs ln(lambda) = {params.lyapunov:.6f}")
    return EXIT_OK


def _sweep(cfg: RunConfig):
    window = cfg.window_rule()
    return expectation_sweep(range(cfg.ell_min, cfg.ell_max + 1), cfg.params(), cfg.strategy, n_grid=cfg.n_grid,
                             n_bulk=cfg.n_bulk, n_shell=cfg.n_shell, seed=cfg.seed, ladder=cfg.ladder,
                             window=window, workers=cfg.workers)


def _write_estimates(out: Output, est, k: int) -> None:
    header = ["ell", "estimate", "error", "bulk"] + [f"shell_{j + 1}" for j in range(k)] + ["n_samples"]
    out.csv("correlator.csv", header,
            [(e.ell, e.estimate, e.error, e.bulk, *e.shells, e.n_samples) for e in est])


def cmd_correlator(cfg: RunConfig, out: Output) -> int:
    est = _sweep(cfg)
    _write_estimates(out, est, len(cfg.ladder))
    out.plot("correlator.csv", 1, [2], logscale=True, title="phase-averaged correlator")
    for e in est:
        out.say(f"l = {e.ell:3d}  E[S] = {e.estimate:.6e} +- {e.error:.2e}")
    return EXIT_OK


def cmd_gamma(cfg: RunConfig, out: Output) -> int:
    est = _sweep(cfg)
    _write_estimates(out, est, len(cfg.ladder))
    fit = gamma_fit(est)
    out.csv("gamma.csv", ["ell", "exponent", "in_tail"],
            [(int(l), x, bool(l >= fit.tail_start)) for l, x in zip(fit.ells, fit.exponents)])
    out.plot("gamma.csv", 1, [2], title="pointwise decay exponents")
    lyap = cfg.params().lyapunov
    out.say(f"gamma: slope {fit.slope:.6f} vs ln(lambda) = {lyap:.6f} (ratio {fit.slope / lyap:.4f}); "
            f"tail max {fit.gamma_plus:.6f}, tail min {fit.gamma_minus:.6f}")
    return EXIT_OK


def _verdict_rows(theta, verdicts):
    for v in verdicts:
        yield (theta, v.s, v.center, v.ell, v.case, v.x0, v.sine, v.eta, v.log_bound, v.log_ratio,
               v.applicable, v.passed, v.boundary_mass, v.reason)


def cmd_verify_localization(cfg: RunConfig, out: Output) -> int:
    base = cfg.params()
    lyap = base.lyapunov
    eps, eta = cfg.eps_factor * lyap, cfg.eta_factor * lyap
    window = cfg.window if cfg.window is not None else None
    window = Window(*window) if window else Window.centered(cfg.window_factor * (cfg.probe + cfg.min_scale))
    cache = _cache(cfg)
    rows, tally = [], {"thm": [0, 0], "cor": [0, 0]}
    for th in _phases(cfg):
        params = base.with_theta(float(th))
        es = cached_solve(params, window, cache)
        for sh in (cfg.probe, -cfg.probe):
            probes = es.centers + sh
            thm = classify_and_verify(es, params, probes, eps, cfg.min_scale)
            cor = verify_corollary(es, params, probes, eta, eps, cfg.min_scale)
            for key, vs in (("thm", thm), ("cor", cor)):
                for v in vs:
                    if v.applicable:
                        tally[key][0] += 1
                        tally[key][1] += v.passed
            rows += list(_verdict_rows(th, thm)) + list(_verdict_rows(th, cor))
    out.csv("verdicts.csv", ["theta", "s", "center", "ell", "case", "x0", "sine", "eta", "log_bound",
                             "log_ratio", "applicable", "passed", "boundary_mass", "reason"], rows)
    for key, label in (("thm", "decay verdicts"), ("cor", "uniform verdicts")):
        n, p = tally[key]
        out.say(f"{label}: {p}/{n} applicable pass ({p / n if n else float('nan'):.4f})")
    return EXIT_OK


def cmd_resonance_sets(cfg: RunConfig, out: Output) -> int:
    params = cfg.params()
    lyap = params.lyapunov
    eta = cfg.eta_factor * lyap
    n = cfg.n
    ell = cfg.ell_max
    a = set_A(eta, n, params)
    b = set_B(eta, n, ell, params) if ell != n else None
    ts = theta_sets(cfg.gamma_factor * lyap, n, params)
    sets = [("A", a), ("theta1", ts.theta1), ("theta2", ts.theta2), ("theta", ts.theta)]
    if b is not None:
        sets.insert(1, ("B", b))
    out.csv("arcs.csv", ["set", "start", "end"], [(name, s, e) for name, iv in sets for s, e in iv.arcs()])
    meas = [(name, iv.measure, len(iv)) for name, iv in sets]
    out.csv("measures.csv", ["set", "measure", "arcs"], meas)
    out.say(f"A: exact measure {measure_A(eta, n, params):.6e}, bound {measure_bound_A(eta, n):.6e}")
    if b is not None:
        out.say(f"B: exact measure {measure_B(eta, n, ell, params):.6e}, "
                f"bound {measure_bound_A(eta, abs(n - ell)):.6e}")
    out.say(f"Theta: measure {ts.theta.measure:.6e}, tail-corrected {ts.corrected_measure:.6e}, "
            f"target e^(-Gamma n)/100 = {math.exp(-cfg.gamma_factor * lyap * abs(n)) / 100:.6e}")
    return EXIT_OK


def cmd_theta_experiment(cfg: RunConfig, out: Output) -> int:
    params = cfg.params()
    gamma = cfg.gamma_factor * params.lyapunov
    r = lower_bound_experiment(params, cfg.n, gamma, n_samples=cfg.n_samples, seed=cfg.seed, c_win=cfg.c_win,
                               workers=cfg.workers)
    out.csv("theta_samples.csv", ["theta", "S_n", "local_mass"], zip(r.thetas, r.values, r.prop_large))
    if r.inconclusive:
        out.say(f"theta-experiment: Theta empty after truncation (tail bound {r.tail_bound:.3e}); inconclusive")
        return EXIT_OK
    out.say(f"theta-experiment: n = {r.n}, |Theta| = {r.corrected_measure:.6e} "
            f"(target/100 = {r.target / 100:.6e}); fraction S_n >= 1/4: {r.fraction_quarter:.3f}; "
            f"integral bound {r.integral_bound:.6e} vs e^(-Gamma n)/400 = {r.target / 400:.6e}")
    return EXIT_OK


def cmd_palindrome(cfg: RunConfig, out: Output) -> int:
    base = cfg.params()
    gamma = cfg.gamma_factor * base.lyapunov
    n = abs(cfg.n)
    window = cfg.window_rule() if cfg.window is not None else window_for(n, cfg.window_factor)
    cache = _cache(cfg)
    rows, entries = [], []
    for j in (0, 1):
        theta = exact_resonance_phase(base, n, j)
        params = base.with_theta(theta)
        es = cached_solve(params, window, cache)
        rep = palindrome_check(params, n, gamma, es)
        for e in rep.entries:
            rows.append((theta, e.s, e.center, e.sup_norm, e.diff_minus, e.diff_plus, e.iota, e.bound, e.passed,
                         e.wronskian_max, e.wronskian_bound, e.wronskian_passed, e.increment_constant))
        entries += rep.entries
    out.csv("palindrome.csv", ["theta", "s", "center", "sup_norm", "diff_minus", "diff_plus", "iota", "bound",
                               "passed", "wronskian_max", "wronskian_bound", "wronskian_passed",
                               "increment_constant"], rows)
    frac = np.mean([e.passed for e in entries]) if entries else float("nan")
    wfrac = np.mean([e.wronskian_passed for e in entries]) if entries else float("nan")
    out.say(f"palindrome: n = {n}, {len(entries)} interior eigenfunctions; sign bound holds for {frac:.4f}, "
            f"Wronskian bound for {wfrac:.4f}")
    return EXIT_OK


def cmd_check_all(cfg: RunConfig, out: Output) -> int:
    results = []
    for k in sorted(CRITERIA):
        r = run_criterion(k, cfg.profile, cfg.seed, cfg.workers)
        results.append(r)
        out.say(r.line())
    out.csv("criteria.csv", ["criterion", "metric", "value"],
            [(r.number, "passed", r.passed) for r in results]
            + [(r.number, k, v) for r in results for k, v in r.metrics.items()])
    failed = [r.number for r in results if not r.passed]
    out.say(f"check-all ({cfg.profile}): {len(results) - len(failed)}/{len(results)} criteria pass"
            + (f"; failing: {', '.join(map(str, failed))}" if failed else ""))
    return EXIT_ACCEPTANCE if failed else EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "lyapunov": cmd_lyapunov,
    "correlator": cmd_correlator,
    "gamma": cmd_gamma,
    "verify-localization": cmd_verify_localization,
    "resonance-sets": cmd_resonance_sets,
    "theta-experiment": cmd_theta_experiment,
    "palindrome": cmd_palindrome,
    "check-all": cmd_check_all,
}


def _parse_value(text: str, kind: str):
    if kind in ("int", "float"):
        return json.loads(text)
    if kind in ("list", "list | None"):
        return json.loads(text)
    return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amolab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"amolab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (fields of RunConfig)")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        common.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper(),
                            help=f"override {f.name} (JSON value for lists)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def configure(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    problems = []
    for f in dataclasses.fields(RunConfig):
        raw = getattr(args, f.name)
        if raw is None:
            continue
        try:
            setattr(cfg, f.name, _parse_value(raw, str(f.type)))
        except json.JSONDecodeError:
            problems.append(f"{f.name}: cannot parse {raw!r}")
    if problems:
        raise ConfigError(problems)
    if isinstance(cfg.alpha, (int, float)):
        cfg.alpha = repr(float(cfg.alpha))
    return cfg


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = configure(args)
        validate(cfg, args.command)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    out = Output(cfg, args.command)
    try:
        code = COMMANDS[args.command](cfg, out)
    except (EigenSolverError, CorrelatorBoundError, FloatingPointError, HypothesisError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out.finish({"exit_code": code})
    return code


if __name__ == "__main__":
    sys.exit(main())
