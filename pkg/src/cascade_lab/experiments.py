"""Monte Carlo orchestration: ensembles, viscosity sweeps, and power-law fits.

A sweep runs an ensemble of M independent trajectories per viscosity value
(stream ids 0..M-1 under one base seed, so sweeps share their driving noise
across viscosities), evaluates windowed observables per trajectory, and fits
the scaling exponent alpha of log(observable) against log(1/nu).

Desk-scale honesty: the asymptotic statements behind these experiments hold
for nu below an unknown threshold, so sweep verdicts are reported as trends
(monotonicity plus an exponent window), never as confirmations of sharp
constants.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from math import sqrt

import numpy as np

from .diagnostics import (
    BalanceReport,
    DiagnosticsRecord,
    NormRecorder,
    balance_check,
    time_avg_sobolev,
)
from .forcing import NoiseSpec, bk_sum
from .integrators import (
    SimParams,
    TrajectoryAbortError,
    constrained_profile,
    run_trajectory,
)
from .spectral import GridSpec

QUANTILES = (5, 25, 50, 75, 95)

OBSERVABLE_KINDS = ("sup_sobolev", "time_avg_sobolev", "sup_cm", "sup_inf")


class EnsembleAbortError(RuntimeError):
    """More than the tolerated fraction of trajectories aborted."""


@dataclass(frozen=True)
class Observable:
    """A windowed scalar functional of one trajectory's diagnostics stream."""

    kind: str
    m: float | None = None

    def __post_init__(self):
        if self.kind not in OBSERVABLE_KINDS:
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.kind == "sup_inf":
            if self.m is not None:
                raise ValueError("sup_inf takes no order")
        elif self.m is None or self.m < 0:
            raise ValueError(f"observable {self.kind} needs an order m >= 0")
        if self.kind == "sup_cm" and self.m != int(self.m):
            raise ValueError("sup_cm needs an integer order")

    @classmethod
    def parse(cls, text: str) -> "Observable":
        kind, sep, arg = text.strip().partition(":")
        return cls(kind, float(arg)) if sep else cls(kind)

    @property
    def name(self) -> str:
        if self.m is None:
            return self.kind
        return f"{self.kind}_{self.m:g}"

    def evaluate(self, records: list[DiagnosticsRecord], t0: float, nu: float) -> float:
        if self.kind == "time_avg_sobolev":
            return time_avg_sobolev(records, self.m, t0, nu)
        t1 = t0 + 1.0 / nu
        window = [r for r in records if t0 - 1e-12 <= r.t <= t1 + 1e-12]
        if not window:
            raise ValueError(f"no samples in the window [{t0:.6g}, {t1:.6g}]")
        if self.kind == "sup_sobolev":
            return max(r.norm(self.m) for r in window)
        if self.kind == "sup_cm":
            return max(r.cm for r in window)
        return max(r.sup for r in window)


@dataclass(frozen=True)
class ObservableStats:
    mean: float
    variance: float
    se: float
    quantiles: dict[int, float]

    @property
    def median(self) -> float:
        return self.quantiles[50]


@dataclass(frozen=True)
class EnsembleSummary:
    """Per-observable statistics of one ensemble, plus abort bookkeeping."""

    nu: float
    M: int
    aborts: int
    observables: dict[str, ObservableStats]

    def to_json_dict(self) -> dict:
        from . import schema

        return {
            "schema_version": schema.SCHEMA_VERSION,
            "type": "ensemble_summary",
            "nu": self.nu,
            "M": self.M,
            "aborts": self.aborts,
            "observables": {
                name: {
                    "mean": st.mean,
                    "variance": st.variance,
                    "se": st.se,
                    "quantiles": {str(q): v for q, v in st.quantiles.items()},
                }
                for name, st in self.observables.items()
            },
        }


def _stats(values: np.ndarray) -> ObservableStats:
    var = float(values.var(ddof=1)) if values.size > 1 else 0.0
    return ObservableStats(
        mean=float(values.mean()),
        variance=var,
        se=sqrt(var / values.size) if values.size > 1 else 0.0,
        quantiles={q: float(np.percentile(values, q)) for q in QUANTILES},
    )


def _needed_recorder(observables: tuple[Observable, ...], nu: float) -> NormRecorder:
    ms = {0.0, 1.0, 2.0}
    cm_order = None
    for obs in observables:
        if obs.kind in ("sup_sobolev", "time_avg_sobolev"):
            ms.add(float(obs.m))
        elif obs.kind == "sup_cm":
            cm_order = max(cm_order or 0, int(obs.m))
    return NormRecorder(nu=nu, ms=tuple(sorted(ms)), cm_order=cm_order)


def ensemble_run(
    grid: GridSpec,
    spec: NoiseSpec,
    params: SimParams,
    M: int,
    u0_factory,
    observables: tuple[Observable, ...] = (),
    window_t0: float | None = None,
    threads: int = 1,
    max_abort_fraction: float = 0.01,
    recorder_factory=None,
) -> tuple[EnsembleSummary, list[list[DiagnosticsRecord]]]:
    """Run M independent trajectories (stream ids 0..M-1) and summarize observables.

    ``u0_factory(stream_id)`` supplies initial data; observables are evaluated
    on the window [window_t0, window_t0 + 1/nu] (default: the second half of a
    two-slow-unit run, i.e. t0 = T - 1/nu).  Aborted trajectories are
    excluded from statistics; more than ``max_abort_fraction`` aborts raises.
    Deterministic given the params seed, regardless of the thread count.
    """
    if M < 1:
        raise ValueError("ensemble size must be >= 1")
    if window_t0 is None:
        window_t0 = max(0.0, params.T - 1.0 / params.nu)

    def one(stream_id: int):
        p = replace(params, stream_id=stream_id)
        rec = (
            recorder_factory(p)
            if recorder_factory is not None
            else _needed_recorder(observables, p.nu)
        )
        try:
            run_trajectory(u0_factory(stream_id), spec, p, rec)
        except TrajectoryAbortError:
            return None
        return rec.records

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(M)))
    else:
        results = [one(i) for i in range(M)]

    streams = [r for r in results if r is not None]
    aborts = M - len(streams)
    if aborts > max_abort_fraction * M:
        raise EnsembleAbortError(
            f"{aborts}/{M} trajectories aborted (tolerated fraction {max_abort_fraction})"
        )
    per_obs: dict[str, ObservableStats] = {}
    for obs in observables:
        vals = np.array([obs.evaluate(records, window_t0, params.nu) for records in streams])
        per_obs[obs.name] = _stats(vals)
    summary = EnsembleSummary(nu=params.nu, M=M, aborts=aborts, observables=per_obs)
    return summary, streams


# --- power-law fits -----------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares slope of log q against log(1/nu); alpha > 0 means growth as nu -> 0."""

    points: tuple[tuple[float, float], ...]
    alpha: float
    intercept: float
    r2: float

    def to_json_dict(self, observable: str = "") -> dict:
        from . import schema

        return {
            "schema_version": schema.SCHEMA_VERSION,
            "type": "scaling_fit",
            "observable": observable,
            "alpha": self.alpha,
            "intercept": self.intercept,
            "r2": self.r2,
            "points": [[nu, q] for nu, q in self.points],
        }


def fit_exponent(points) -> ScalingFit:
    """Fit q ~ C * nu^(-alpha) over a (nu, q) table; needs >= 3 points with q > 0."""
    pts = tuple((float(nu), float(q)) for nu, q in points)
    if len(pts) < 3:
        raise ValueError(f"exponent fit needs at least 3 points, got {len(pts)}")
    for nu, q in pts:
        if nu <= 0:
            raise ValueError(f"viscosity must be positive, got {nu}")
        if q <= 0:
            raise ValueError(f"observable values must be positive for a log fit, got {q}")
    x = np.log([1.0 / nu for nu, _ in pts])
    y = np.log([q for _, q in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return ScalingFit(points=pts, alpha=float(slope), intercept=float(intercept), r2=r2)


# --- sweeps ----------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPlan:
    """A viscosity grid with per-entry ensemble settings and start-data policy.

    The fast-time horizon per entry is ``t_slow_total / nu`` and observables
    are evaluated on the unit slow-time window starting at
    ``window_t0_slow / nu``; initial data follow the constrained smooth
    profile (lattice sup <= init_sup, ||u||_m <= nu^(-init_kappa * m)).

    With ``dt_slow`` set, every entry steps at the same slow-time increment
    (fast dt = dt_slow / nu).  Draws are addressed by step index, so all
    entries then consume identical noise and their linear updates coincide
    exactly; the entries differ only through the phase-rotation strength
    1/nu.  That common-random-number coupling makes trend comparisons across
    the grid far less noisy than independent runs at a fixed fast dt.
    """

    grid: GridSpec
    noise_profile: str
    nu_grid: tuple[float, ...]
    M: int
    base_seed: int
    dt: float = 0.01
    dt_slow: float | None = None
    t_slow_total: float = 2.0
    window_t0_slow: float = 1.0
    record_every: int = 10
    scheme: str = "strang"
    nonlinear: bool = True
    observables: tuple[Observable, ...] = (
        Observable("time_avg_sobolev", 2.0),
        Observable("sup_sobolev", 2.0),
        Observable("sup_cm", 2.0),
        Observable("sup_inf"),
    )
    init_sup: float = 1.0
    init_kappa: float = 0.02
    init_m: float = 3.0

    def __post_init__(self):
        nus = self.nu_grid
        if len(nus) < 1 or any(not 0 < nu <= 1 for nu in nus):
            raise ValueError("nu_grid entries must lie in (0, 1]")
        if any(a <= b for a, b in zip(nus, nus[1:])):
            raise ValueError("nu_grid must be strictly decreasing")
        if self.M < 2:
            raise ValueError("sweeps need ensembles of M >= 2")
        if self.window_t0_slow + 1.0 > self.t_slow_total + 1e-12:
            raise ValueError(
                "observable window extends past the horizon: need window_t0_slow + 1 <= t_slow_total"
            )
        if self.dt_slow is not None and self.dt_slow <= 0:
            raise ValueError(f"dt_slow must be positive, got {self.dt_slow}")

    def spec(self) -> NoiseSpec:
        return NoiseSpec.from_profile(self.grid, self.noise_profile)

    def params_for(self, nu: float) -> SimParams:
        dt = self.dt if self.dt_slow is None else self.dt_slow / nu
        return SimParams(
            nu=nu,
            dt=dt,
            T=self.t_slow_total / nu,
            scheme=self.scheme,
            record_every=self.record_every,
            seed=self.base_seed,
            nonlinear=self.nonlinear,
        )

    def u0_factory(self, nu: float):
        u0 = constrained_profile(
            self.grid, nu, sup_bound=self.init_sup, kappa=self.init_kappa, m=self.init_m
        )
        return lambda stream_id: u0


@dataclass(frozen=True)
class SweepResult:
    plan: SweepPlan
    summaries: tuple[EnsembleSummary, ...]
    streams: tuple[list, ...]  # per nu entry: the raw per-trajectory record streams
    fits: dict[str, ScalingFit | None]
    verdicts: dict[str, dict[str, bool | float]]

    @property
    def all_verdicts_pass(self) -> bool:
        return all(
            bool(v) for per_obs in self.verdicts.values() for v in per_obs.values()
            if isinstance(v, (bool, np.bool_))
        )


def _strictly_increasing(values) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


def nu_sweep(
    plan: SweepPlan,
    threads: int = 1,
    upper_slack: float = 0.5,
    sup_inf_ratio_bound: float = 3.0,
) -> SweepResult:
    """Run the viscosity sweep and judge trend verdicts per observable.

    For Sobolev-type observables of order m the verdicts are: fitted alpha
    positive (energy moves to high modes as nu shrinks), alpha <= m + slack
    (the a-priori upper scaling), and ensemble means strictly increasing along
    the decreasing nu grid.  For C^m observables the median trend is judged;
    for the lattice sup the max/min median ratio across the grid is compared
    against ``sup_inf_ratio_bound`` (the sup-norm moments are nu-uniform).
    """
    spec = plan.spec()
    summaries = []
    streams_per_nu = []
    for nu in plan.nu_grid:
        params = plan.params_for(nu)
        summary, streams = ensemble_run(
            plan.grid,
            spec,
            params,
            plan.M,
            plan.u0_factory(nu),
            observables=plan.observables,
            window_t0=plan.window_t0_slow / nu,
            threads=threads,
        )
        summaries.append(summary)
        streams_per_nu.append(streams)

    fits: dict[str, ScalingFit | None] = {}
    verdicts: dict[str, dict] = {}
    for obs in plan.observables:
        name = obs.name
        means = [s.observables[name].mean for s in summaries]
        medians = [s.observables[name].median for s in summaries]
        fit = None
        if len(plan.nu_grid) >= 3 and all(v > 0 for v in means):
            fit = fit_exponent(list(zip(plan.nu_grid, means)))
        fits[name] = fit
        v: dict[str, bool | float] = {}
        if obs.kind in ("sup_sobolev", "time_avg_sobolev"):
            # a-priori envelope of E||u||_m^2 is nu^(-m); slack covers desk-scale noise
            upper = float(obs.m) + upper_slack
            v["means_strictly_increasing"] = _strictly_increasing(means)
            if fit is not None:
                v["alpha_positive"] = fit.alpha > 0
                v["alpha_below_upper"] = fit.alpha <= upper
                v["alpha"] = fit.alpha
        elif obs.kind == "sup_cm":
            v["medians_strictly_increasing"] = _strictly_increasing(medians)
            if fit is not None:
                v["alpha"] = fit.alpha
        elif obs.kind == "sup_inf":
            ratio = max(medians) / min(medians) if min(medians) > 0 else float("inf")
            v["median_ratio"] = ratio
            v["nu_uniform"] = ratio < sup_inf_ratio_bound
        verdicts[name] = v
    return SweepResult(
        plan=plan,
        summaries=tuple(summaries),
        streams=tuple(streams_per_nu),
        fits=fits,
        verdicts=verdicts,
    )


# --- stationary sweep ---------------------------------------------------------------


@dataclass(frozen=True)
class MomentRow:
    m: float
    mean_sq: float
    se: float


@dataclass(frozen=True)
class StationarySweepResult:
    plan: SweepPlan
    balance: tuple[BalanceReport, ...]
    streams: tuple[list, ...]
    moments: dict[float, tuple[MomentRow, ...]]  # m -> one row per nu
    exponent_window: dict[float, tuple[float, float]]
    moment_fits: dict[float, ScalingFit | None]
    exponent_consistent: dict[float, bool]


def stationary_sweep(
    plan: SweepPlan,
    ms: tuple[float, ...] = (1.0, 2.0, 3.0),
    threads: int = 1,
    burn_in_fraction: float = 0.2,
    kappa: float = 0.02,
    min_t_slow: float = 10.0,
) -> StationarySweepResult:
    """Long-run averages per nu as stationary-measure surrogates.

    Per viscosity: the balance report for E||u||_1^2 = B_0 and the moment
    table E||u||_m^2 with batch-means error bars.  Across the grid, the fitted
    exponent of each moment is compared against the window
    [2 m kappa - 1, m]; constants are free, only exponent consistency is
    judged.
    """
    post_burn = plan.t_slow_total * (1.0 - burn_in_fraction)
    if post_burn < min_t_slow:
        raise ValueError(
            f"insufficient run length: {post_burn:.3g} slow units after burn-in, need {min_t_slow}"
        )
    spec = plan.spec()
    b0 = bk_sum(spec, 0.0)
    balance_reports = []
    streams_per_nu = []
    rows: dict[float, list[MomentRow]] = {m: [] for m in ms}
    for nu in plan.nu_grid:
        params = plan.params_for(nu)
        rec_ms = tuple(sorted({0.0, 1.0, 2.0} | {float(m) for m in ms}))

        def recorder_factory(p, _ms=rec_ms):
            return NormRecorder(nu=p.nu, ms=_ms)

        _, streams = ensemble_run(
            plan.grid,
            spec,
            params,
            plan.M,
            plan.u0_factory(nu),
            observables=(),
            threads=threads,
            recorder_factory=recorder_factory,
        )
        balance_reports.append(
            balance_check(streams, b0, nu, burn_in_fraction=burn_in_fraction)
        )
        streams_per_nu.append(streams)
        t_end = streams[0][-1].t
        cut = burn_in_fraction * t_end
        kept = [i for i, r in enumerate(streams[0]) if r.t >= cut]
        for m in ms:
            series = np.array([[s[i].norm(m) ** 2 for i in kept] for s in streams])
            ens_mean = series.mean(axis=0)
            batches = np.array_split(ens_mean, 20)
            bm = np.array([b.mean() for b in batches])
            rows[m].append(
                MomentRow(m=m, mean_sq=float(ens_mean.mean()), se=float(bm.std(ddof=1) / sqrt(20)))
            )
    window = {m: (2.0 * m * kappa - 1.0, float(m)) for m in ms}
    fits: dict[float, ScalingFit | None] = {}
    consistent: dict[float, bool] = {}
    for m in ms:
        vals = [(nu, row.mean_sq) for nu, row in zip(plan.nu_grid, rows[m])]
        fit = None
        if len(vals) >= 3 and all(q > 0 for _, q in vals):
            fit = fit_exponent(vals)
        fits[m] = fit
        lo, hi = window[m]
        consistent[m] = fit is not None and lo <= fit.alpha <= hi
    return StationarySweepResult(
        plan=plan,
        balance=tuple(balance_reports),
        streams=tuple(streams_per_nu),
        moments={m: tuple(rows[m]) for m in ms},
        exponent_window=window,
        moment_fits=fits,
        exponent_consistent=consistent,
    )
