"""Comparison tables and report files."""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from src.models import EvaluationReport, Metrics, RocPoint

COLUMNS = ("accuracy", "rmse", "precision", "recall", "f1", "auc")
LOWER_IS_BETTER = frozenset({"rmse"})


@dataclass
class ComparisonReport:
    """Named metric rows with the best value per column."""
    rows: list[tuple[str, Metrics]] = field(default_factory=list)

    def values(self, column: str) -> list[float]:
        return [float(getattr(m, column)) for _, m in self.rows]

    def best(self, column: str) -> set[str]:
        """Names of every row holding the best value of ``column``."""
        values = self.values(column)
        target = min(values) if column in LOWER_IS_BETTER else max(values)
        return {name for (name, _), v in zip(self.rows, values) if v == target}

    def best_in(self, name: str) -> list[str]:
        return [column for column in COLUMNS if name in self.best(column)]

    def to_text(self) -> str:
        """Aligned table; ``*`` marks the best value of each column."""
        name_width = max([len("model")] + [len(name) for name, _ in self.rows])
        header = "model".ljust(name_width) + "".join(f"{c:>11}" for c in COLUMNS)
        lines = [header, "-" * len(header)]
        best = {column: self.best(column) for column in COLUMNS}
        for name, metrics in self.rows:
            cells = []
            for column in COLUMNS:
                mark = "*" if name in best[column] else " "
                cells.append(f"{getattr(metrics, column):>10.4f}{mark}")
            lines.append(name.ljust(name_width) + "".join(cells))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        """CSV with full-precision values and a ``best_in`` column (``;``-separated)."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(("model",) + COLUMNS + ("best_in",))
        for name, metrics in self.rows:
            writer.writerow([name] + [repr(float(getattr(metrics, c))) for c in COLUMNS]
                            + [";".join(self.best_in(name))])
        return buffer.getvalue()

    @staticmethod
    def parse_csv(text: str) -> list[dict[str, object]]:
        """Rows of :meth:`to_csv` output with float values and ``best_in`` as a list."""
        rows = []
        for record in csv.DictReader(io.StringIO(text)):
            row: dict[str, object] = {"model": record["model"]}
            row.update({c: float(record[c]) for c in COLUMNS})
            row["best_in"] = [c for c in record["best_in"].split(";") if c]
            rows.append(row)
        return rows


def compare_models(results: Union[Mapping[str, Metrics], Sequence[tuple[str, Metrics]]]) -> ComparisonReport:
    """Build a comparison table from named metrics.

    Raises:
        ValueError: ``results`` is empty.
    """
    rows = list(results.items()) if isinstance(results, Mapping) else list(results)
    if not rows:
        raise ValueError("compare_models needs at least one result")
    return ComparisonReport(rows)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Rows rendered with :mod:`csv`; floats keep their shortest round-trip form."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def roc_to_csv(points: Sequence[RocPoint]) -> str:
    return csv_text(("fpr", "tpr", "threshold"), ((p.fpr, p.tpr, p.threshold) for p in points))


def combined_roc_csv(curves: Mapping[str, Sequence[RocPoint]]) -> str:
    """One CSV holding several ROC curves, keyed by a ``model`` column."""
    rows = ((name, p.fpr, p.tpr, p.threshold) for name, points in curves.items() for p in points)
    return csv_text(("model", "fpr", "tpr", "threshold"), rows)


def write_report(prefix: Union[str, Path], report: EvaluationReport) -> list[Path]:
    """Write ``<prefix>.txt``, ``.csv``, ``.json`` and ``_roc.csv``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    rows = [(report.model_kind, report.overall)]
    rows += [(f"{report.model_kind}/mission_{tag}", m) for tag, m in report.by_mission.items()]
    table = compare_models(rows)
    outputs = {
        prefix.with_name(prefix.name + ".txt"): table.to_text(),
        prefix.with_name(prefix.name + ".csv"): table.to_csv(),
        prefix.with_name(prefix.name + ".json"): report.model_dump_json(indent=2) + "\n",
        prefix.with_name(prefix.name + "_roc.csv"): roc_to_csv(report.overall.roc),
    }
    for path, text in outputs.items():
        path.write_text(text, encoding="utf-8")
    return list(outputs)
