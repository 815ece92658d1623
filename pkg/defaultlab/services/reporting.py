# defaultlab/services/reporting.py
"""
Запись отчёта о прогоне: json-lines (без потерь, читается обратно через
read_report), csv (по файлу на таблицу) и текст через шаблон jinja2.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Union

from jinja2 import Environment, PackageLoader, StrictUndefined

from defaultlab.errors import ContractViolation
from defaultlab.schemas.experiment import ReportFormat
from defaultlab.schemas.report import (
    CheckResult,
    LadderRung,
    McEstimate,
    PremiumRow,
    ProcessTable,
    RunReport,
)
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)

JSONL_NAME = "report.jsonl"
TEXT_NAME = "report.txt"
PREMIUM_COLUMNS = ("time_index", "total_premium", "idiosyncratic", "shock_id", "shock_premium")
TABLE_COLUMNS = ("time_index", "atom_id", "value")

_LIST_FIELDS = ("checks", "tables", "premium", "ladder", "monte_carlo")
_RECORDS = {
    "check": ("checks", CheckResult),
    "table": ("tables", ProcessTable),
    "premium": ("premium", PremiumRow),
    "rung": ("ladder", LadderRung),
    "mc": ("monte_carlo", McEstimate),
}


def _cell(value: Any) -> str:
    """Ячейка csv: числа с 17 значащими цифрами, None - пустая строка."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return num.fmt(value)
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


# ========== json-lines ==========

def to_json_lines(report: RunReport) -> List[str]:
    """Заголовок прогона, затем по строке на каждую запись с полем kind."""
    lines = [report.model_dump_json(exclude=set(_LIST_FIELDS))]
    for field in _LIST_FIELDS:
        lines.extend(item.model_dump_json() for item in getattr(report, field))
    return lines


def read_report(path: Union[str, Path]) -> RunReport:
    """
    Прочитать отчёт json-lines.

    Raises:
        ContractViolation: файл не начинается с заголовка прогона или содержит неизвестную запись.
    """
    path = Path(path)
    if path.is_dir():
        path = path / JSONL_NAME
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines:
        raise ContractViolation(f"Пустой отчёт: {path}")
    header = json.loads(lines[0])
    if header.get("kind") != "run":
        raise ContractViolation(f"Первая строка {path} - не заголовок прогона")
    collected = {field: [] for field in _LIST_FIELDS}
    for number, line in enumerate(lines[1:], start=2):
        record = json.loads(line)
        kind = record.get("kind")
        if kind not in _RECORDS:
            raise ContractViolation(f"{path}:{number}: неизвестная запись kind={kind!r}")
        field, schema = _RECORDS[kind]
        collected[field].append(schema.model_validate(record))
    return RunReport.model_validate({**header, **collected})


# ========== Текст ==========

def _environment() -> Environment:
    env = Environment(
        loader=PackageLoader("defaultlab", "templates"),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )
    env.filters["fmt"] = lambda v: "-" if v is None else num.fmt(v)
    return env


def render_text(report: RunReport) -> str:
    template = _environment().get_template("report.txt.j2")
    return template.render(report=report, failed=report.failed, skipped=report.skipped)


# ========== Запись ==========

def emit_report(report: RunReport, out_dir: Union[str, Path],
                fmt: Union[str, ReportFormat] = ReportFormat.json_lines) -> List[Path]:
    """
    Записать отчёт в out_dir в заданном формате.

    Returns:
        Список записанных файлов.

    Raises:
        OSError: каталог недоступен для записи.
    """
    fmt = ReportFormat(fmt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    if fmt == ReportFormat.json_lines:
        path = out / JSONL_NAME
        path.write_text("\n".join(to_json_lines(report)) + "\n", encoding="utf-8")
        written.append(path)
    elif fmt == ReportFormat.text:
        path = out / TEXT_NAME
        path.write_text(render_text(report), encoding="utf-8")
        written.append(path)
    else:
        written.append(_write_csv(
            out / "checks.csv",
            ("name", "status", "max_error", "tolerance", "node", "detail"),
            ((c.name, c.status.value, c.max_error, c.tolerance, c.node, c.detail) for c in report.checks),
        ))
        for table in report.tables:
            written.append(_write_csv(
                out / f"table_{table.name}.csv",
                TABLE_COLUMNS,
                ((r.time_index, r.atom_id, r.value) for r in table.rows),
            ))
        if report.premium:
            written.append(_write_csv(
                out / "premium.csv",
                PREMIUM_COLUMNS,
                ((getattr(r, c) for c in PREMIUM_COLUMNS) for r in report.premium),
            ))
        if report.ladder:
            written.append(_write_csv(
                out / "ladder.csv",
                ("horizon", "max_error", "ratio"),
                ((r.horizon, r.max_error, r.ratio) for r in report.ladder),
            ))
        if report.monte_carlo:
            written.append(_write_csv(
                out / "monte_carlo.csv",
                ("name", "value", "std_error", "half_width", "paths", "exact", "within_band"),
                ((e.name, e.value, e.std_error, e.half_width, e.paths, e.exact, e.within_band)
                 for e in report.monte_carlo),
            ))
    logger.info(f"Отчёт {report.name} ({fmt.value}) записан: {', '.join(p.name for p in written)}")
    return written
