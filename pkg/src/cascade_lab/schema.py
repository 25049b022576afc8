"""Frozen output schema: CSV column orders and JSON report field orders.

Acceptance checks diff outputs byte-for-byte, so any change to a column
order, a field order, or a number format is a schema bump.  JSON lines and
manifests carry ``SCHEMA_VERSION`` inline; trajectory CSVs stay plain
RFC-4180 (header row only) and are versioned through the manifest of the run
directory that contains them.
"""

from __future__ import annotations

SCHEMA_VERSION = 1

# Per-trajectory time-series CSV: t, tau, one column per configured Sobolev
# order, then the lattice sup, then optional C^m and shell columns.
STREAM_FIXED_COLUMNS = ("t", "tau")


def norm_column(m: float) -> str:
    mf = float(m)
    return f"norm_{int(mf)}" if mf == int(mf) else f"norm_{mf:g}"


def stream_columns(
    ms: tuple[float, ...],
    with_sup: bool = True,
    cm_order: int | None = None,
    n_shells: int = 0,
) -> list[str]:
    cols = list(STREAM_FIXED_COLUMNS)
    cols += [norm_column(m) for m in ms]
    if with_sup:
        cols.append("sup")
    if cm_order is not None:
        cols.append("cm")
    cols += [f"shell_{k}" for k in range(1, n_shells + 1)]
    return cols


# JSON-lines report field orders (first two fields are always the same).
REPORT_COMMON = ("schema_version", "type")

OCCUPATION_FIELDS = REPORT_COMMON + (
    "chi",
    "gamma",
    "tau0",
    "tau",
    "n_traj",
    "lhs_mean",
    "lhs_se",
    "rhs_bound",
    "passed",
    "note",
)

STATIONARY_FIELDS = REPORT_COMMON + (
    "chi",
    "gamma",
    "n_samples",
    "frequency",
    "wilson_low",
    "wilson_high",
    "bound",
    "applicable",
    "passed",
)

BALANCE_FIELDS = REPORT_COMMON + (
    "nu",
    "window_start",
    "window_end",
    "avg_h1_sq",
    "b0",
    "relative_residual",
    "se",
    "n_batches",
    "degenerate",
)

FIT_FIELDS = REPORT_COMMON + ("observable", "alpha", "intercept", "r2", "points")

SUMMARY_FIELDS = REPORT_COMMON + ("nu", "M", "aborts", "observables")

SWEEP_VERDICT_FIELDS = REPORT_COMMON + ("observable", "verdicts")

MANIFEST_FIELDS = (
    "schema_version",
    "code_version",
    "kind",
    "config_hash",
    "base_seed",
    "noise_profile",
    "config",
)
