"""
Markdown 报告

消融结果表、评估指标表与长度分析表，附 Mermaid 图表。
"""

from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

from .length_study import LengthStudy
from .mermaid import MermaidGenerator
from .metrics import MetricsReport


class FormatHelper:
    """Markdown 格式化工具"""

    def format_as_table(self, rows: Sequence[Tuple], headers: Sequence[str]) -> List[str]:
        """
        格式化为Markdown表格。

        参数:
            rows: 数据行列表，每行是一个元组
            headers: 表头列表

        返回:
            List[str]: 格式化后的行列表；没有数据时为空
        """
        if not rows or not headers:
            return []
        lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("------" for _ in headers) + "|"]
        for row in rows:
            lines.append("| " + " | ".join(str(cell) for cell in row) + " |")
        lines.append("")
        return lines

    def format_as_heading(self, content: str, level: int = 2) -> List[str]:
        if not content:
            return []
        level = max(1, min(6, level))
        return [f"{'#' * level} {content}", ""]

    def format_as_list(self, items: Sequence[str]) -> List[str]:
        if not items:
            return []
        return [f"- {item}" for item in items] + [""]


def percent(value: Any) -> str:
    return "-" if value is None else f"{100 * value:.2f}"


class ReportBuilder:
    """
    按段落拼接 Markdown 报告。

    用法:
        builder = ReportBuilder("消融实验")
        builder.add_ablation(rows)
        builder.write(path)
    """

    def __init__(self, title: str):
        self.fmt = FormatHelper()
        self.charts = MermaidGenerator()
        self.lines: List[str] = self.fmt.format_as_heading(title, level=1)

    def add_metrics(self, name: str, report: MetricsReport) -> "ReportBuilder":
        self.lines += self.fmt.format_as_heading(f"评估结果: {name}")
        self.lines += self.fmt.format_as_table(
            [(report.tp, report.fp, report.fn, report.tn,
              percent(report.precision), percent(report.recall), percent(report.f1), percent(report.accuracy))],
            ["TP", "FP", "FN", "TN", "Precision", "Recall", "F1", "Accuracy"],
        )
        return self

    def add_ablation(self, rows: Sequence[Dict[str, Any]]) -> "ReportBuilder":
        """
        rows: 每个变体一项，包含 variant / label / parameters 与（可选）各项指标
        """
        self.lines += self.fmt.format_as_heading("消融实验")
        table = [
            (row["label"], row["variant"], row["parameters"], percent(row.get("precision")),
             percent(row.get("recall")), percent(row.get("f1")), percent(row.get("accuracy")))
            for row in rows
        ]
        self.lines += self.fmt.format_as_table(
            table, ["Model", "变体", "参数量", "Precision", "Recall", "F1", "Accuracy"]
        )
        scored = [(row["variant"], 100 * row["f1"]) for row in rows if row.get("f1") is not None]
        chart = self.charts.generate_bar_chart(scored, title="F1 by variant")
        if chart:
            self.lines += [chart, ""]
        return self

    def add_length_study(self, study: LengthStudy) -> "ReportBuilder":
        for axis, title in (("comment", "按评论长度"), ("response", "按回复长度")):
            self.lines += self.fmt.format_as_heading(title)
            buckets = study.comment_buckets if axis == "comment" else study.response_buckets
            labels = [f"({lo},{hi}]" for lo, hi in buckets]
            table, series = [], {}
            for system in study.systems:
                rows = study.select(axis, system)
                series[system] = [r.accuracy for r in rows]
                table.append((system, *(f"{percent(r.accuracy)} ({r.count})" for r in rows)))
            self.lines += self.fmt.format_as_table(table, ["系统", *labels])
            chart = self.charts.generate_line_chart(labels, series, title=f"Accuracy by {axis} length")
            if chart:
                self.lines += [chart, ""]
        return self

    def add_notes(self, notes: Sequence[str]) -> "ReportBuilder":
        self.lines += self.fmt.format_as_list(notes)
        return self

    def render(self) -> str:
        return "\n".join(self.lines).rstrip() + "\n"

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render(), encoding="utf-8")
        return path
