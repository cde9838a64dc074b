"""Dataset ingestion, run-configuration parsing, and report output.

The on-disk formats are deliberately plain: delimited text with a header row
for data, JSON for configs and structured reports, and a fixed-width text
table for the per-OCP summary. Floats serialize through ``repr`` (shortest
round-trip form), so identical runs produce byte-identical files; NaN never
appears in a report (absent numbers are ``null``).
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np

from .estimators import Dataset, EstimationConfig, ProxyEstimate
from .exceptions import (
    ConfigError,
    EmptyAfterFiltering,
    IoError,
    MissingColumn,
    ParseError,
)
from .simulation import MonteCarloReport, SimConfig

__all__ = [
    "SchemaMap",
    "LoadResult",
    "OcpRow",
    "RunReport",
    "load_csv",
    "parse_config",
    "config_to_dict",
    "estimate_to_dict",
    "monte_carlo_to_dict",
    "write_report",
    "read_report",
]

#: Cell contents treated as missing values (case-insensitive, whitespace
#: stripped). Rows with a missing value in any mapped column are dropped.
MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none"})


@dataclass(frozen=True)
class SchemaMap:
    """Column-role assignment for delimited files.

    Roles are never inferred from names: the assignment of outcome,
    treatment, TCPs, OCPs, and covariates is an analytical choice made by
    the caller. Names must be distinct across all roles.
    """

    outcome_column: str
    treatment_column: str
    tcp_columns: tuple[str, ...]
    ocp_columns: tuple[str, ...]
    covariate_columns: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tcp_columns", tuple(self.tcp_columns))
        object.__setattr__(self, "ocp_columns", tuple(self.ocp_columns))
        object.__setattr__(
            self, "covariate_columns", tuple(self.covariate_columns)
        )
        names = list(self.all_columns())
        for name in names:
            if not isinstance(name, str) or not name:
                raise ConfigError(f"column names must be non-empty strings, got {name!r}")
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(
                "column roles must be disjoint; duplicated names: "
                + ", ".join(dupes)
            )
        if not self.tcp_columns:
            raise ConfigError("schema needs at least one TCP column")
        if not self.ocp_columns:
            raise ConfigError("schema needs at least one OCP column")

    def all_columns(self) -> tuple[str, ...]:
        return (
            (self.outcome_column, self.treatment_column)
            + self.tcp_columns
            + self.ocp_columns
            + self.covariate_columns
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "outcome_column": self.outcome_column,
            "treatment_column": self.treatment_column,
            "tcp_columns": list(self.tcp_columns),
            "ocp_columns": list(self.ocp_columns),
            "covariate_columns": list(self.covariate_columns),
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "SchemaMap":
        if not isinstance(raw, dict):
            raise ConfigError(f"schema must be an object, got {type(raw).__name__}")
        known = {
            "outcome_column",
            "treatment_column",
            "tcp_columns",
            "ocp_columns",
            "covariate_columns",
        }
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown schema key(s): {', '.join(unknown)}")
        missing = sorted(
            k for k in ("outcome_column", "treatment_column", "tcp_columns", "ocp_columns")
            if k not in raw
        )
        if missing:
            raise ConfigError(f"schema is missing required key(s): {', '.join(missing)}")
        return cls(
            outcome_column=raw["outcome_column"],
            treatment_column=raw["treatment_column"],
            tcp_columns=tuple(raw["tcp_columns"]),
            ocp_columns=tuple(raw["ocp_columns"]),
            covariate_columns=tuple(raw.get("covariate_columns", ())),
        )


class LoadResult(NamedTuple):
    """A loaded :class:`~proxsel.estimators.Dataset` plus row accounting."""

    dataset: Dataset
    n_rows_read: int
    n_rows_dropped: int


def load_csv(
    path: str,
    schema: SchemaMap,
    *,
    delimiter: str = ",",
    strict: bool = True,
) -> LoadResult:
    """Read a delimited file with a header row into a Dataset.

    Complete-case analysis: rows with a missing value (see
    :data:`MISSING_TOKENS`) in any mapped column are dropped and counted.
    Unmapped columns are ignored entirely. In strict mode a non-missing cell
    that does not parse as a number raises :class:`ParseError` locating the
    row and column; in lenient mode (``strict=False``) such cells are treated
    as missing and the row is dropped. Short rows (fewer fields than the
    header) follow the same rule.
    """
    try:
        handle = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path!r}: {exc}") from exc
    with handle:
        reader = csv.reader(handle, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path!r} is empty (no header row)") from None
        header = [h.strip() for h in header]
        positions: dict[str, int] = {}
        missing_names = []
        for name in schema.all_columns():
            if name in positions:
                continue
            try:
                positions[name] = header.index(name)
            except ValueError:
                missing_names.append(name)
        if missing_names:
            raise MissingColumn(
                "column(s) not found in header: " + ", ".join(missing_names)
            )
        names = schema.all_columns()
        rows: list[list[float]] = []
        n_read = 0
        n_dropped = 0
        for row_index, raw_row in enumerate(reader, start=1):
            n_read += 1
            values: list[float] = []
            drop = False
            for name in names:
                pos = positions[name]
                cell = raw_row[pos].strip() if pos < len(raw_row) else ""
                if cell.lower() in MISSING_TOKENS:
                    drop = True
                    break
                try:
                    values.append(float(cell))
                except ValueError:
                    if strict:
                        raise ParseError(
                            f"row {row_index}, column {name!r}: "
                            f"cannot parse {cell!r} as a number"
                        ) from None
                    drop = True
                    break
            if drop:
                n_dropped += 1
            else:
                rows.append(values)
        if not rows:
            raise EmptyAfterFiltering(
                f"no complete rows remain after dropping {n_dropped} of {n_read}"
            )
    table = np.asarray(rows, dtype=float)
    cols = {name: table[:, i] for i, name in enumerate(names)}
    n_z = len(schema.tcp_columns)
    n_w = len(schema.ocp_columns)
    n_x = len(schema.covariate_columns)
    z = np.column_stack([cols[c] for c in schema.tcp_columns])
    w = np.column_stack([cols[c] for c in schema.ocp_columns])
    x = (
        np.column_stack([cols[c] for c in schema.covariate_columns])
        if n_x
        else None
    )
    dataset = Dataset(
        Y=cols[schema.outcome_column],
        D=cols[schema.treatment_column],
        Z=z,
        W=w,
        X=x,
    )
    return LoadResult(dataset=dataset, n_rows_read=n_read, n_rows_dropped=n_dropped)


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------

_CONFIG_KINDS = ("sim", "estimation")


def parse_config(path: str, kind: str = "sim") -> SimConfig | EstimationConfig:
    """Parse a JSON config file into a fully resolved config object.

    ``kind`` selects the target type (``"sim"`` or ``"estimation"``).
    An empty (or whitespace-only) file resolves to all defaults. Unknown
    keys are rejected; invariant violations surface as :class:`ConfigError`
    naming the offending key or constraint.
    """
    if kind not in _CONFIG_KINDS:
        raise ConfigError(
            f"kind must be one of {', '.join(_CONFIG_KINDS)}, got {kind!r}"
        )
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise IoError(f"cannot open {path!r}: {exc}") from exc
    return config_from_text(text, kind, source=path)


def config_from_text(
    text: str, kind: str = "sim", source: str = "<config>"
) -> SimConfig | EstimationConfig:
    """Parse config JSON from a string; see :func:`parse_config`."""
    stripped = text.strip()
    if not stripped:
        raw: dict[str, Any] = {}
    else:
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(
            f"{source}: config must be a JSON object, got {type(raw).__name__}"
        )
    cls = SimConfig if kind == "sim" else EstimationConfig
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(
            f"{source}: unknown key(s) for {kind} config: {', '.join(unknown)}"
        )
    coerced: dict[str, Any] = {}
    for key, value in raw.items():
        coerced[key] = _coerce_field(key, value, fields[key].type, source)
    try:
        return cls(**coerced)
    except Exception as exc:  # invariant violations from __post_init__
        raise ConfigError(f"{source}: {exc}") from None


def _coerce_field(key: str, value: Any, annotation: str, source: str) -> Any:
    """Check the JSON value loosely against the dataclass annotation."""
    ann = str(annotation)
    if isinstance(value, bool):
        raise ConfigError(f"{source}: key {key!r} must be a number or string")
    if value is None:
        if "None" in ann:
            return None
        raise ConfigError(f"{source}: key {key!r} must not be null")
    if ann.startswith("int"):
        if not isinstance(value, int):
            raise ConfigError(f"{source}: key {key!r} must be an integer")
        return value
    if ann.startswith("float"):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{source}: key {key!r} must be a number")
        return float(value)
    if ann.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{source}: key {key!r} must be a string")
        return value
    return value


def config_to_dict(config: SimConfig | EstimationConfig) -> dict[str, Any]:
    """Fully resolved, JSON-ready echo of a config object."""
    return dataclasses.asdict(config)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _float_or_none(value: Any) -> float | None:
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


def estimate_to_dict(
    estimate: ProxyEstimate, tcp_names: Sequence[str] | None = None
) -> dict[str, Any]:
    """JSON-ready view of an estimate; NaN becomes ``null``.

    ``tcp_names`` (when given) translates selected-TCP indices to column
    names alongside the raw indices.
    """
    selected = [int(j) for j in estimate.selected_invalid_tcps]
    out: dict[str, Any] = {
        "method": estimate.method,
        "beta_hat": _float_or_none(estimate.beta_hat),
        "gamma_hat": _float_or_none(estimate.gamma_hat),
        "alpha_hat": [float(a) for a in np.asarray(estimate.alpha_hat)],
        "selected_invalid_tcps": selected,
        "variance": _float_or_none(estimate.variance),
        "ci_lower": _float_or_none(estimate.ci_lower),
        "ci_upper": _float_or_none(estimate.ci_upper),
    }
    if tcp_names is not None:
        out["selected_invalid_tcp_names"] = [tcp_names[j] for j in selected]
    if estimate.per_ocp_estimates is not None:
        out["per_ocp_estimates"] = [
            _float_or_none(b) for b in np.asarray(estimate.per_ocp_estimates)
        ]
    return out


def monte_carlo_to_dict(report: MonteCarloReport) -> dict[str, Any]:
    """JSON-ready view of a Monte Carlo report (config echo included)."""
    return {
        "config": config_to_dict(report.config),
        "reps": report.reps,
        "n_failed": report.n_failed,
        "methods": {
            name: {
                "coverage": _float_or_none(m.coverage),
                "ci_length": _float_or_none(m.ci_length),
                "bias": _float_or_none(m.bias),
                "se": _float_or_none(m.se),
                "rmse": _float_or_none(m.rmse),
                "n_used": m.n_used,
                "n_failed": m.n_failed,
            }
            for name, m in report.methods.items()
        },
    }


@dataclass(frozen=True)
class OcpRow:
    """One line of the per-OCP summary table.

    A failed pipeline run carries its error message in ``error`` and ``None``
    numbers; the table renderer prints a failure marker for such rows.
    """

    label: str
    invalid_tcps: tuple[str, ...]
    valid_tcps: tuple[str, ...]
    beta_hat: float | None
    ci_lower: float | None
    ci_upper: float | None
    error: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "invalid_tcps", tuple(self.invalid_tcps))
        object.__setattr__(self, "valid_tcps", tuple(self.valid_tcps))

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "invalid_tcps": list(self.invalid_tcps),
            "valid_tcps": list(self.valid_tcps),
            "beta_hat": _float_or_none(self.beta_hat),
            "ci_lower": _float_or_none(self.ci_lower),
            "ci_upper": _float_or_none(self.ci_upper),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "OcpRow":
        return cls(
            label=raw["label"],
            invalid_tcps=tuple(raw["invalid_tcps"]),
            valid_tcps=tuple(raw["valid_tcps"]),
            beta_hat=raw["beta_hat"],
            ci_lower=raw["ci_lower"],
            ci_upper=raw["ci_upper"],
            error=raw.get("error"),
        )


@dataclass(frozen=True)
class RunReport:
    """Everything one command run produced, in serializable form.

    ``config`` echoes the fully resolved inputs (configs, schema, flags that
    affect results — never execution details like worker count). ``timing``
    is wall-clock seconds or ``None`` when timing capture is off, which keeps
    repeated runs byte-identical.
    """

    command: str
    config: dict[str, Any]
    estimate: dict[str, Any] | None = None
    per_ocp: tuple[OcpRow, ...] = ()
    diagnostics: dict[str, Any] = field(default_factory=dict)
    timing: float | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_ocp", tuple(self.per_ocp))

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "estimate": self.estimate,
            "per_ocp": [row.to_dict() for row in self.per_ocp],
            "diagnostics": self.diagnostics,
            "timing": self.timing,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunReport":
        return cls(
            command=raw["command"],
            config=raw["config"],
            estimate=raw.get("estimate"),
            per_ocp=tuple(OcpRow.from_dict(r) for r in raw.get("per_ocp", [])),
            diagnostics=raw.get("diagnostics", {}),
            timing=raw.get("timing"),
            seed=raw.get("seed"),
        )


_FORMATS = ("structured", "table")
_FAILURE_MARKER = "FAILED"


def write_report(report: RunReport, path: str, format: str = "structured") -> None:
    """Write a report as JSON (``structured``) or a text table (``table``).

    The structured document contains every field and round-trips through
    :func:`read_report`. The table format renders the per-OCP summary with
    columns ``OCP | Invalid TCPs | Valid TCPs | beta_hat | 95% CI`` plus a
    summary line for the aggregate estimate when one is present; it is a
    human-facing view, not meant to be re-read.
    """
    if format not in _FORMATS:
        raise IoError(f"format must be one of {', '.join(_FORMATS)}, got {format!r}")
    if format == "structured":
        payload = json.dumps(report.to_dict(), indent=2, allow_nan=False)
        text = payload + "\n"
    else:
        text = render_table(report)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path!r}: {exc}") from exc


def read_report(path: str) -> RunReport:
    """Read back a structured report written by :func:`write_report`."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise IoError(f"cannot open {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path!r}: invalid report JSON ({exc})") from None
    return RunReport.from_dict(raw)


def _format_ci(lo: float | None, hi: float | None) -> str:
    if lo is None or hi is None:
        return "--"
    return f"[{lo:.4f}, {hi:.4f}]"


def _format_beta(beta: float | None) -> str:
    return "--" if beta is None else f"{beta:.4f}"


def render_table(report: RunReport) -> str:
    """Fixed-width per-OCP summary; one row per OCP plus a summary row."""
    header = ["OCP", "Invalid TCPs", "Valid TCPs", "beta_hat", "95% CI"]
    rows: list[list[str]] = []
    for row in report.per_ocp:
        if row.error is not None:
            rows.append(
                [row.label, _FAILURE_MARKER, _FAILURE_MARKER, _FAILURE_MARKER,
                 row.error]
            )
        else:
            rows.append(
                [
                    row.label,
                    ", ".join(row.invalid_tcps) or "(none)",
                    ", ".join(row.valid_tcps) or "(none)",
                    _format_beta(row.beta_hat),
                    _format_ci(row.ci_lower, row.ci_upper),
                ]
            )
    if report.estimate is not None:
        est = report.estimate
        rows.append(
            [
                est.get("method", "summary"),
                "--",
                "--",
                _format_beta(est.get("beta_hat")),
                _format_ci(est.get("ci_lower"), est.get("ci_upper")),
            ]
        )
    widths = [
        max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
        for i in range(len(header))
    ]

    def line(parts: Sequence[str]) -> str:
        return " | ".join(p.ljust(widths[i]) for i, p in enumerate(parts)).rstrip()

    out = [line(header), "-+-".join("-" * w for w in widths)]
    out.extend(line(r) for r in rows)
    return "\n".join(out) + "\n"
