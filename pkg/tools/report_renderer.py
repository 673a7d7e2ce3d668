"""
Report rendering: fixed-width metric tables, error-reduction tables and the
CSV / JSON files written next to them.
"""

import json
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

import pandas as pd
from jinja2 import Environment, StrictUndefined

from tools.errors import DatasetError
from tools.evaluator import ErrorReductionReport, MetricReport, TABLE_COLUMNS

logger = logging.getLogger(__name__)

COLUMN_TITLES = {
    "abs_rel": "AbsRel",
    "sq_rel": "SqRel",
    "rmse": "RMSE",
    "rmse_log": "RMSElog",
    "delta1": "d<1.25",
    "delta2": "d<1.25^2",
    "delta3": "d<1.25^3",
}

_ENV = Environment(undefined=StrictUndefined, trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True)

METRIC_TABLE = _ENV.from_string(
    """\
{{ "%-*s"|format(name_width, "Predictor") }}  {{ "%-8s"|format("Split") }}
{%- for title in titles %}  {{ "%9s"|format(title) }}{% endfor %}

{{ rule }}
{% for row in rows %}
{{ "%-*s"|format(name_width, row.name) }}  {{ "%-8s"|format(row.split) }}
{%- for value in row["values"] %}  {{ "%9.4f"|format(value) }}{% endfor %}

{% endfor %}
"""
)

REDUCTION_TABLE = _ENV.from_string(
    """\
Error reduction of {{ report.final }} over {{ report.mono }} ({{ report.split }} split)
{{ "%-10s"|format("Metric") }}  {{ "%10s"|format("Mono. Err.") }}  {{ "%10s"|format("Final Err.") }}  {{ "%10s"|format("Err. Redu.") }}
{% for row in report.rows %}
{{ "%-10s"|format(titles[row.metric]) }}  {{ "%10.4f"|format(row.mono_err) }}  {{ "%10.4f"|format(row.final_err) }}  {{ "%10s"|format(row.formatted()) }}
{% endfor %}
"""
)


def render_metric_table(reports: Sequence[MetricReport]) -> str:
    """Overall / dynamic rows for each predictor, error metrics before accuracies."""
    rows = []
    for report in reports:
        for split in ("overall", "dynamic"):
            metrics = report.split(split)
            if metrics is None:
                continue
            values = metrics.values()
            rows.append({"name": report.name, "split": split, "values": [values[c] for c in TABLE_COLUMNS]})
    name_width = max([len("Predictor")] + [len(r["name"]) for r in rows])
    titles = [COLUMN_TITLES[c] for c in TABLE_COLUMNS]
    rule = "-" * (name_width + 10 + 11 * len(titles))
    return METRIC_TABLE.render(rows=rows, titles=titles, name_width=name_width, rule=rule)


def render_error_reduction(report: ErrorReductionReport) -> str:
    return REDUCTION_TABLE.render(report=report, titles=COLUMN_TITLES)


def metrics_frame(reports: Iterable[MetricReport]) -> pd.DataFrame:
    rows: List[dict] = []
    for report in reports:
        rows.extend(report.rows())
    return pd.DataFrame(rows, columns=["predictor", "split", *TABLE_COLUMNS, "n_valid"])


def write_json(path, payload) -> Path:
    """Deterministic JSON (sorted keys, fixed indent)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise DatasetError(f"cannot write {path}: {exc}") from exc
    return path


def write_frame(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.8g", lineterminator="\n")
    except OSError as exc:
        raise DatasetError(f"cannot write {path}: {exc}") from exc
    return path


def write_metric_files(reports: Sequence[MetricReport], out_dir, stem: str = "metrics") -> List[Path]:
    """``<stem>.json``, ``<stem>.csv`` and ``<stem>.txt`` for a set of reports."""
    out_dir = Path(out_dir)
    paths = [
        write_json(out_dir / f"{stem}.json", [r.model_dump(mode="json") for r in reports]),
        write_frame(metrics_frame(reports), out_dir / f"{stem}.csv"),
    ]
    table = out_dir / f"{stem}.txt"
    try:
        table.write_text(render_metric_table(reports))
    except OSError as exc:
        raise DatasetError(f"cannot write {table}: {exc}") from exc
    paths.append(table)
    logger.info("Wrote metric reports for %d predictors to %s", len(reports), out_dir)
    return paths


def write_loss_log(records: Sequence[dict], path) -> Path:
    """CSV loss log plus a JSON mirror next to it."""
    path = Path(path)
    frame = pd.DataFrame(list(records), columns=["step", "epoch", "total", "si", "vnl", "mono_diag", "lr"])
    write_frame(frame, path)
    write_json(path.with_suffix(".json"), list(records))
    return path
