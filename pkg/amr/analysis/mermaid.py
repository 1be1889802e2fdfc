"""
Mermaid 图表生成模块

生成 GitHub 兼容的 Mermaid xychart-beta 图表（纯文本，不渲染图片）。
"""

from typing import Dict, List, Optional, Sequence, Tuple


class MermaidGenerator:
    """
    Mermaid 图表生成器

    支持生成：
    - 柱状图（各消融变体的指标）
    - 折线图（各系统在长度桶上的准确率）
    """

    def generate_bar_chart(
        self,
        data: List[Tuple[str, float]],
        title: str = "Ablation",
        y_label: str = "F1 (%)",
    ) -> str:
        """
        生成柱状图

        Args:
            data: [(名称, 数值), ...]
            title: 图表标题
            y_label: Y轴标签

        Returns:
            Mermaid 代码块；没有数据时为空字符串
        """
        if not data:
            return ""

        labels = [self._truncate_label(name, 20) for name, _ in data]
        values = [value for _, value in data]
        y_max = self._round_up(max(values))

        x_axis = ", ".join(f'"{label}"' for label in labels)
        bar_data = ", ".join(self._format_value(v) for v in values)

        return f"""```mermaid
xychart-beta
    title "{title}"
    x-axis [{x_axis}]
    y-axis "{y_label}" 0 --> {y_max}
    bar [{bar_data}]
```"""

    def generate_line_chart(
        self,
        x_labels: Sequence[str],
        series: Dict[str, Sequence[Optional[float]]],
        title: str = "Accuracy by length",
        y_label: str = "Accuracy",
        y_max: float = 1.0,
    ) -> str:
        """
        生成折线图

        Args:
            x_labels: X轴标签（如长度桶 "(0,50]"）
            series: 系统名 -> 每个桶的数值；空桶为 None，画作 0
            title: 图表标题
            y_label: Y轴标签
            y_max: Y轴上限

        Returns:
            Mermaid 代码块
        """
        if not x_labels or not series:
            return ""

        lines = []
        for name, values in series.items():
            line_data = ", ".join(self._format_value(0.0 if v is None else v) for v in values)
            lines.append(f'    line "{self._truncate_label(name, 22)}" [{line_data}]')

        x_axis = ", ".join(f'"{label}"' for label in x_labels)
        return f"""```mermaid
xychart-beta
    title "{title}"
    x-axis [{x_axis}]
    y-axis "{y_label}" 0 --> {y_max}
{chr(10).join(lines)}
```"""

    def _truncate_label(self, label: str, max_len: int) -> str:
        if len(label) <= max_len:
            return label
        return label[:max_len - 2] + ".."

    def _format_value(self, value: float) -> str:
        return f"{value:.4f}".rstrip("0").rstrip(".") or "0"

    def _round_up(self, value: float) -> int:
        """向上取整到合适的刻度"""
        if value <= 1:
            return 1
        elif value <= 10:
            return 10
        elif value <= 50:
            return 50
        elif value <= 100:
            return 100
        else:
            return int((value // 50) + 1) * 50
