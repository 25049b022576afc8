"""Command-line surface, configuration grammar, and run-directory persistence.

Config files are INI-style ``[section]`` blocks of ``key = value`` lines:

    [grid]                      [sim]
    n = 1                       nu = 0.1          ; or nu_grid = 0.4,0.2,0.1
    N = 64                      dt = 0.01         ; optional, scheme default
    D = 32                      T_slow = 2.0      ; or T = <fast-time horizon>
                                record_every = 10
    [noise]                     scheme = strang   ; strang | em
    profile = band:1,1,1        nonlinear = true

    [ensemble]                  [experiment]
    M = 16                      kind = simulate   ; simulate|sweep|stationary|spectrum
    base_seed = 12345           observables = time_avg_sobolev:2,sup_inf
                                out = runs
                                window_t0_slow = 1.0

    [occupation]                ; only read by the occupation subcommand
    run = <existing run dir>    chi_fracs = 0.05,0.1,0.2
    tau0 = 0.0                  gamma_factor = 2.0
    tau = 1.0

Unknown sections or keys are errors, validation reports every violation at
once, and ``base_seed`` has no entropy default: every run is replayable from
its config alone.  Run directories are named by the config hash; all files
are written atomically (temp + rename), so an interrupted run never leaves a
partial manifest.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from . import __version__, schema
from .diagnostics import (
    NormRecorder,
    occupation_check,
    read_stream_csv,
    stream_csv_text,
)
from .experiments import (
    Observable,
    SweepPlan,
    ensemble_run,
    fit_exponent,
    nu_sweep,
    stationary_sweep,
)
from .forcing import NoiseSpec, ProfileError, bk_sum
from .integrators import SimParams, constrained_profile, default_dt
from .spectral import GridSpec


class ConfigError(ValueError):
    """All config violations, collected; not just the first one."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


KINDS = ("simulate", "sweep", "stationary", "spectrum")

_SCHEMA = {
    "grid": {"n", "N", "D"},
    "noise": {"profile"},
    "sim": {"nu", "nu_grid", "dt", "T", "T_slow", "record_every", "scheme", "nonlinear"},
    "ensemble": {"M", "base_seed"},
    "experiment": {"kind", "observables", "out", "window_t0_slow"},
    "occupation": {"run", "chi_fracs", "gamma_factor", "tau0", "tau"},
}


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved, validated run description; emit/parse round-trips to equality."""

    n: int
    N: int
    D: int
    profile: str
    nu: float | None
    nu_grid: tuple[float, ...] | None
    dt: float
    T_slow: float | None
    T: float | None
    record_every: int
    scheme: str
    nonlinear: bool
    M: int
    base_seed: int
    kind: str
    observables: tuple[str, ...]
    out: str
    window_t0_slow: float
    occupation_run: str | None = None
    occupation_chi_fracs: tuple[float, ...] = (0.05, 0.1, 0.2)
    occupation_gamma_factor: float = 2.0
    occupation_tau0: float = 0.0
    occupation_tau: float = 1.0

    def grid(self) -> GridSpec:
        return GridSpec(self.n, self.N, self.D)

    def noise(self) -> NoiseSpec:
        return NoiseSpec.from_profile(self.grid(), self.profile)

    def horizon_for(self, nu: float) -> float:
        return self.T if self.T is not None else self.T_slow / nu

    def params_for(self, nu: float) -> SimParams:
        return SimParams(
            nu=nu,
            dt=self.dt,
            T=self.horizon_for(nu),
            scheme=self.scheme,
            record_every=self.record_every,
            seed=self.base_seed,
            nonlinear=self.nonlinear,
        )


def _parse_sections(text: str, errors: list[str]) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (grid.n vs grid.N)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        errors.append(f"config syntax: {exc}")
        return {}
    raw: dict[str, dict[str, str]] = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        raw[section] = {}
        for key, value in cp.items(section):
            if key not in _SCHEMA[section]:
                errors.append(f"unknown key {key!r} in section [{section}]")
            else:
                raw[section][key] = value.strip()
    return raw


def _get(raw, section, key, default=None):
    return raw.get(section, {}).get(key, default)


def _typed(raw, section, key, cast, errors, default=None, required=False):
    val = _get(raw, section, key)
    if val is None:
        if required:
            errors.append(f"missing required key {key!r} in section [{section}]")
        return default
    try:
        return cast(val)
    except (ValueError, TypeError) as exc:
        errors.append(f"[{section}] {key} = {val!r}: {exc}")
        return default


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip() != "")


def parse_config(text: str, overrides: dict[str, str] | None = None) -> RunConfig:
    """Parse and validate; raises ConfigError carrying every violation found."""
    errors: list[str] = []
    raw = _parse_sections(text, errors)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            errors.append(f"unknown override target {dotted!r}")
        else:
            raw.setdefault(section, {})[key] = value

    n = _typed(raw, "grid", "n", int, errors, required=True)
    D = _typed(raw, "grid", "D", int, errors, required=True)
    N = _typed(raw, "grid", "N", int, errors, default=None)
    if N is None and D is not None:
        N = 2 * D  # documented default: anti-alias margin
    profile = _typed(raw, "noise", "profile", str, errors, required=True)

    nu = _typed(raw, "sim", "nu", float, errors)
    nu_grid = _typed(raw, "sim", "nu_grid", _float_list, errors)
    dt = _typed(raw, "sim", "dt", float, errors)
    T = _typed(raw, "sim", "T", float, errors)
    T_slow = _typed(raw, "sim", "T_slow", float, errors)
    record_every = _typed(raw, "sim", "record_every", int, errors, default=10)
    scheme = _typed(raw, "sim", "scheme", str, errors, default="strang")
    nonlinear = _typed(raw, "sim", "nonlinear", _bool, errors, default=True)
    M = _typed(raw, "ensemble", "M", int, errors, default=2)
    base_seed = _typed(raw, "ensemble", "base_seed", int, errors, required=True)
    kind = _typed(raw, "experiment", "kind", str, errors, default="simulate")
    observables = _typed(
        raw,
        "experiment",
        "observables",
        lambda s: tuple(v.strip() for v in s.split(",") if v.strip()),
        errors,
        default=("time_avg_sobolev:2", "sup_sobolev:2", "sup_cm:2", "sup_inf"),
    )
    out = _typed(raw, "experiment", "out", str, errors, default="runs")
    window_t0_slow = _typed(raw, "experiment", "window_t0_slow", float, errors, default=1.0)

    occupation_run = _typed(raw, "occupation", "run", str, errors)
    occ_chi = _typed(raw, "occupation", "chi_fracs", _float_list, errors, default=(0.05, 0.1, 0.2))
    occ_gamma = _typed(raw, "occupation", "gamma_factor", float, errors, default=2.0)
    occ_tau0 = _typed(raw, "occupation", "tau0", float, errors, default=0.0)
    occ_tau = _typed(raw, "occupation", "tau", float, errors, default=1.0)

    # range validation (collect everything before failing)
    if n is not None and n < 1:
        errors.append(f"grid.n must be >= 1, got {n}")
    if D is not None and D < 1:
        errors.append(f"grid.D must be >= 1, got {D}")
    if None not in (N, D) and D > N:
        errors.append(f"grid.D = {D} exceeds grid.N = {N} (need D <= N)")
    if N is not None and N < 4:
        errors.append(f"grid.N must be >= 4, got {N}")
    if nu is not None and not 0 < nu <= 1:
        errors.append(f"sim.nu must lie in (0, 1], got {nu}")
    if nu_grid is not None:
        if any(not 0 < v <= 1 for v in nu_grid):
            errors.append(f"sim.nu_grid entries must lie in (0, 1], got {nu_grid}")
        if any(a <= b for a, b in zip(nu_grid, nu_grid[1:])):
            errors.append("sim.nu_grid must be strictly decreasing")
    if nu is None and nu_grid is None:
        errors.append("one of sim.nu or sim.nu_grid is required")
    if nu is not None and nu_grid is not None:
        errors.append("sim.nu and sim.nu_grid are mutually exclusive")
    if T is None and T_slow is None:
        errors.append("one of sim.T or sim.T_slow is required")
    if T is not None and T_slow is not None:
        errors.append("sim.T and sim.T_slow are mutually exclusive")
    if T is not None and T <= 0:
        errors.append(f"sim.T must be positive, got {T}")
    if T_slow is not None and T_slow <= 0:
        errors.append(f"sim.T_slow must be positive, got {T_slow}")
    if dt is not None and dt <= 0:
        errors.append(f"sim.dt must be positive, got {dt}")
    if record_every is not None and record_every < 1:
        errors.append(f"sim.record_every must be >= 1, got {record_every}")
    if scheme not in ("strang", "em"):
        errors.append(f"sim.scheme must be strang or em, got {scheme!r}")
    if M is not None and M < 1:
        errors.append(f"ensemble.M must be >= 1, got {M}")
    if base_seed is not None and not 0 <= base_seed < 2**64:
        errors.append(f"ensemble.base_seed must be a uint64, got {base_seed}")
    if kind not in KINDS:
        errors.append(f"experiment.kind must be one of {KINDS}, got {kind!r}")
    if kind in ("sweep", "stationary"):
        if nu_grid is None and nu is not None:
            errors.append(f"experiment.kind = {kind} needs sim.nu_grid")
        if M is not None and M < 2:
            errors.append(f"experiment.kind = {kind} needs ensemble.M >= 2")
    if observables is not None:
        for obs in observables:
            try:
                Observable.parse(obs)
            except ValueError as exc:
                errors.append(f"experiment.observables entry {obs!r}: {exc}")
    if profile is not None and n is not None and D is not None and not errors:
        try:
            NoiseSpec.from_profile(GridSpec(n, N, D), profile)
        except (ProfileError, ValueError) as exc:
            errors.append(f"noise.profile {profile!r}: {exc}")
    if errors:
        raise ConfigError(errors)

    if dt is None:
        ref_nu = nu if nu is not None else min(nu_grid)
        dt = default_dt(scheme, ref_nu, GridSpec(n, N, D))
    return RunConfig(
        n=n,
        N=N,
        D=D,
        profile=profile,
        nu=nu,
        nu_grid=nu_grid,
        dt=dt,
        T_slow=T_slow,
        T=T,
        record_every=record_every,
        scheme=scheme,
        nonlinear=nonlinear,
        M=M,
        base_seed=base_seed,
        kind=kind,
        observables=tuple(observables),
        out=out,
        window_t0_slow=window_t0_slow,
        occupation_run=occupation_run,
        occupation_chi_fracs=occ_chi,
        occupation_gamma_factor=occ_gamma,
        occupation_tau0=occ_tau0,
        occupation_tau=occ_tau,
    )


def emit_config(cfg: RunConfig) -> str:
    """Canonical config text; parse(emit(cfg)) == cfg."""
    lines = ["[grid]", f"n = {cfg.n}", f"N = {cfg.N}", f"D = {cfg.D}", ""]
    lines += ["[noise]", f"profile = {cfg.profile}", ""]
    lines += ["[sim]"]
    if cfg.nu is not None:
        lines.append(f"nu = {cfg.nu!r}")
    if cfg.nu_grid is not None:
        lines.append("nu_grid = " + ",".join(repr(v) for v in cfg.nu_grid))
    lines.append(f"dt = {cfg.dt!r}")
    if cfg.T is not None:
        lines.append(f"T = {cfg.T!r}")
    if cfg.T_slow is not None:
        lines.append(f"T_slow = {cfg.T_slow!r}")
    lines += [
        f"record_every = {cfg.record_every}",
        f"scheme = {cfg.scheme}",
        f"nonlinear = {'true' if cfg.nonlinear else 'false'}",
        "",
        "[ensemble]",
        f"M = {cfg.M}",
        f"base_seed = {cfg.base_seed}",
        "",
        "[experiment]",
        f"kind = {cfg.kind}",
        "observables = " + ",".join(cfg.observables),
        f"out = {cfg.out}",
        f"window_t0_slow = {cfg.window_t0_slow!r}",
        "",
    ]
    occ = ["[occupation]"]
    if cfg.occupation_run is not None:
        occ.append(f"run = {cfg.occupation_run}")
    occ += [
        "chi_fracs = " + ",".join(repr(v) for v in cfg.occupation_chi_fracs),
        f"gamma_factor = {cfg.occupation_gamma_factor!r}",
        f"tau0 = {cfg.occupation_tau0!r}",
        f"tau = {cfg.occupation_tau!r}",
    ]
    return "\n".join(lines + occ) + "\n"


# --- atomic persistence ---------------------------------------------------------


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(emit_config(cfg).encode()).hexdigest()[:12]


def _json_line(d: dict) -> str:
    return json.dumps(d, separators=(", ", ": ")) + "\n"


def write_manifest(run_dir: Path, cfg: RunConfig) -> None:
    manifest = {
        "schema_version": schema.SCHEMA_VERSION,
        "code_version": __version__,
        "kind": cfg.kind,
        "config_hash": config_hash(cfg),
        "base_seed": cfg.base_seed,
        "noise_profile": cfg.profile,
        "config": emit_config(cfg),
    }
    atomic_write_text(run_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def prepare_run_dir(cfg: RunConfig, out_override: str | None = None) -> Path:
    out = Path(out_override or cfg.out)
    run_dir = out / f"{cfg.kind}-{config_hash(cfg)}"
    run_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(run_dir, cfg)
    atomic_write_text(run_dir / "config.ini", emit_config(cfg))
    return run_dir


def write_streams(run_dir: Path, streams, label: str = "") -> None:
    sub = run_dir / "streams" / label if label else run_dir / "streams"
    for i, records in enumerate(streams):
        atomic_write_text(sub / f"traj_{i:04d}.csv", stream_csv_text(records))


def read_run_streams(run_dir: Path, label: str = "") -> list:
    sub = Path(run_dir) / "streams" / label if label else Path(run_dir) / "streams"
    streams = []
    for path in sorted(sub.glob("traj_*.csv")):
        with open(path, newline="") as fh:
            streams.append(read_stream_csv(fh))
    if not streams:
        raise FileNotFoundError(f"no trajectory streams under {sub}")
    return streams


# --- subcommand implementations ----------------------------------------------------


def _load_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError(["--config PATH is required for this subcommand"])
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    overrides = {}
    for item in args.override or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError([f"override {item!r} is not of the form section.key=value"])
        overrides[key.strip()] = value.strip()
    return parse_config(text, overrides)


def _u0_factory(cfg: RunConfig, nu: float):
    u0 = constrained_profile(cfg.grid(), nu)
    return lambda stream_id: u0


def _cmd_simulate(cfg: RunConfig, out: str | None, threads: int) -> int:
    nu = cfg.nu if cfg.nu is not None else cfg.nu_grid[0]
    params = cfg.params_for(nu)
    observables = tuple(Observable.parse(o) for o in cfg.observables)
    summary, streams = ensemble_run(
        cfg.grid(),
        cfg.noise(),
        params,
        cfg.M,
        _u0_factory(cfg, nu),
        observables=observables,
        window_t0=max(0.0, params.T - 1.0 / nu),
        threads=threads,
    )
    run_dir = prepare_run_dir(cfg, out)
    write_streams(run_dir, streams)
    atomic_write_text(run_dir / "report.jsonl", _json_line(summary.to_json_dict()))
    print(f"simulate: {cfg.M} trajectories at nu={nu} -> {run_dir}")
    return 0


def _cmd_sweep(cfg: RunConfig, out: str | None, threads: int) -> int:
    plan = SweepPlan(
        grid=cfg.grid(),
        noise_profile=cfg.profile,
        nu_grid=cfg.nu_grid,
        M=cfg.M,
        base_seed=cfg.base_seed,
        dt=cfg.dt,
        t_slow_total=cfg.T_slow if cfg.T_slow is not None else cfg.T * min(cfg.nu_grid),
        window_t0_slow=cfg.window_t0_slow,
        record_every=cfg.record_every,
        scheme=cfg.scheme,
        nonlinear=cfg.nonlinear,
        observables=tuple(Observable.parse(o) for o in cfg.observables),
    )
    result = nu_sweep(plan, threads=threads)
    run_dir = prepare_run_dir(cfg, out)
    for nu, streams in zip(plan.nu_grid, result.streams):
        write_streams(run_dir, streams, label=f"nu_{nu:g}")
    lines = []
    for summary in result.summaries:
        lines.append(_json_line(summary.to_json_dict()))
    for name, fit in result.fits.items():
        if fit is not None:
            lines.append(_json_line(fit.to_json_dict(observable=name)))
    for name, verdicts in result.verdicts.items():
        lines.append(
            _json_line(
                {
                    "schema_version": schema.SCHEMA_VERSION,
                    "type": "sweep_verdict",
                    "observable": name,
                    "verdicts": {k: (bool(v) if isinstance(v, bool) else v) for k, v in verdicts.items()},
                }
            )
        )
    atomic_write_text(run_dir / "report.jsonl", "".join(lines))
    ok = result.all_verdicts_pass
    for name, verdicts in result.verdicts.items():
        print(f"sweep {name}: " + ", ".join(f"{k}={v}" for k, v in verdicts.items()))
    print(f"sweep report -> {run_dir}")
    return 0 if ok else 1


def _cmd_stationary(cfg: RunConfig, out: str | None, threads: int) -> int:
    plan = SweepPlan(
        grid=cfg.grid(),
        noise_profile=cfg.profile,
        nu_grid=cfg.nu_grid,
        M=cfg.M,
        base_seed=cfg.base_seed,
        dt=cfg.dt,
        t_slow_total=cfg.T_slow if cfg.T_slow is not None else cfg.T * min(cfg.nu_grid),
        window_t0_slow=cfg.window_t0_slow,
        record_every=cfg.record_every,
        scheme=cfg.scheme,
        nonlinear=cfg.nonlinear,
    )
    result = stationary_sweep(plan, threads=threads)
    run_dir = prepare_run_dir(cfg, out)
    for nu, streams in zip(plan.nu_grid, result.streams):
        write_streams(run_dir, streams, label=f"nu_{nu:g}")
    lines = [_json_line(rep.to_json_dict()) for rep in result.balance]
    for m, fit in result.moment_fits.items():
        if fit is not None:
            lines.append(_json_line(fit.to_json_dict(observable=f"stationary_sobolev_{m:g}")))
    atomic_write_text(run_dir / "report.jsonl", "".join(lines))
    ok = True
    for rep in result.balance:
        status = "degenerate" if rep.degenerate else f"residual={rep.relative_residual:.3g}"
        print(f"stationary nu={rep.nu}: avg ||u||_1^2 = {rep.avg_h1_sq:.4g} vs B0={rep.b0:.4g} ({status})")
    for m, good in result.exponent_consistent.items():
        lo, hi = result.exponent_window[m]
        fit = result.moment_fits[m]
        alpha = fit.alpha if fit else float("nan")
        print(f"stationary moment m={m:g}: alpha={alpha:.3g} window [{lo:.3g}, {hi:.3g}] consistent={good}")
        ok = ok and good
    print(f"stationary report -> {run_dir}")
    return 0 if ok else 1


def _cmd_occupation(cfg: RunConfig, out: str | None, threads: int) -> int:
    if not cfg.occupation_run:
        raise ConfigError(["occupation.run (an existing run directory) is required"])
    run_dir = Path(cfg.occupation_run)
    streams = read_run_streams(run_dir)
    import numpy as np

    n0 = np.array([r.norm(0.0) for s in streams for r in s])
    n2 = np.array([r.norm(2.0) for s in streams for r in s])
    gamma = cfg.occupation_gamma_factor * float(np.median(n2))
    b0 = bk_sum(cfg.noise(), 0.0)
    lines = []
    ok = True
    for frac in cfg.occupation_chi_fracs:
        chi = frac * float(np.median(n0))
        report = occupation_check(
            streams, chi, gamma, cfg.occupation_tau0, cfg.occupation_tau, b0
        )
        lines.append(_json_line(report.to_json_dict()))
        ok = ok and report.passed
        print(
            f"occupation chi={chi:.4g}: lhs = {report.lhs_mean:.4g} (se {report.lhs_se:.2g}) "
            f"<= bound {report.rhs_bound:.4g} -> {'pass' if report.passed else 'FAIL'}"
        )
    atomic_write_text(run_dir / "occupation_report.jsonl", "".join(lines))
    return 0 if ok else 1


def _cmd_spectrum(cfg: RunConfig, out: str | None, threads: int) -> int:
    import numpy as np

    nu = cfg.nu if cfg.nu is not None else cfg.nu_grid[0]
    params = cfg.params_for(nu)

    def recorder_factory(p):
        return NormRecorder(nu=p.nu, ms=(0.0, 1.0, 2.0), shells=True)

    _, streams = ensemble_run(
        cfg.grid(),
        cfg.noise(),
        params,
        cfg.M,
        _u0_factory(cfg, nu),
        observables=(),
        threads=threads,
        recorder_factory=recorder_factory,
    )
    burn = 0.2 * params.T
    shells = np.array(
        [r.shells for s in streams for r in s if r.t >= burn and r.shells is not None]
    )
    mean_shells = shells.mean(axis=0)
    run_dir = prepare_run_dir(cfg, out)
    report = {
        "schema_version": schema.SCHEMA_VERSION,
        "type": "spectrum",
        "nu": nu,
        "M": cfg.M,
        "shells": [[k + 1, float(e)] for k, e in enumerate(mean_shells)],
    }
    atomic_write_text(run_dir / "report.jsonl", _json_line(report))
    write_streams(run_dir, streams)
    head = ", ".join(f"E_{k + 1}={e:.4g}" for k, e in enumerate(mean_shells[:6]))
    print(f"spectrum nu={nu}: {head} ... -> {run_dir}")
    return 0


def _cmd_fit(args) -> int:
    path = Path(args.csv)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        return 2
    points = []
    for line in text.splitlines():
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 2:
            continue
        try:
            points.append((float(parts[0]), float(parts[1])))
        except ValueError:
            continue  # header or comment line
    try:
        fit = fit_exponent(points)
    except ValueError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return 2
    print(f"alpha = {fit.alpha:.6g}")
    print(f"intercept = {fit.intercept:.6g}")
    print(f"r2 = {fit.r2:.6g}")
    return 0


def _cmd_selftest(threads: int) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest() else 1


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("CASCADE_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"CASCADE_LAB_THREADS = {env!r} is not an integer"])
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascade-lab",
        description="Sine-spectral Monte Carlo lab for the damped/driven cubic Schrodinger equation",
    )
    sub = parser.add_subparsers(dest="command")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to an INI run config")
    common.add_argument("--out", help="output directory (overrides experiment.out)")
    common.add_argument(
        "--override",
        action="append",
        metavar="section.key=value",
        help="override a config entry (repeatable)",
    )
    common.add_argument("--threads", type=int, help="worker threads (env CASCADE_LAB_THREADS)")
    for name, doc in [
        ("simulate", "run a single ensemble"),
        ("sweep", "run the viscosity sweep with trend verdicts"),
        ("stationary", "long-run stationary averages per viscosity"),
        ("occupation", "occupation-time check over an existing run directory"),
        ("spectrum", "shell-energy report"),
    ]:
        sub.add_parser(name, parents=[common], help=doc)
    fit_p = sub.add_parser("fit", parents=[common], help="fit a power law to a (nu, q) CSV")
    fit_p.add_argument("csv", help="CSV with nu in column 1 and the observable in column 2")
    sub.add_parser("selftest", parents=[common], help="run the invariant self-test suite")
    return parser


def run_command(argv: list[str]) -> int:
    """Dispatch a CLI invocation; exit codes: 0 ok, 1 verdict failure, 2 usage/config error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    try:
        threads = _resolve_threads(args) if args.command != "fit" else 1
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "selftest":
            return _cmd_selftest(threads)
        cfg = _load_config(args)
        dispatch = {
            "simulate": _cmd_simulate,
            "sweep": _cmd_sweep,
            "stationary": _cmd_stationary,
            "occupation": _cmd_occupation,
            "spectrum": _cmd_spectrum,
        }
        return dispatch[args.command](cfg, args.out, threads)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
