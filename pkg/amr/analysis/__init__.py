"""
分析模块：评估指标、注意力显著性、路径归因、长度分析与 Markdown 报告。
"""

from .metrics import MetricsReport, evaluate, metrics_from_predictions
from .saliency import SaliencyCheck, SaliencyMap, saliency, verify_saliency
from .attribution import AttributionRecord, AttributionResult, AttributionSummary, path_attribution
from .length_study import COMMENT_BUCKETS, RESPONSE_BUCKETS, LengthStudy, length_study
from .report import ReportBuilder
from .mermaid import MermaidGenerator

__all__ = [
    "MetricsReport",
    "evaluate",
    "metrics_from_predictions",
    "SaliencyCheck",
    "SaliencyMap",
    "saliency",
    "verify_saliency",
    "AttributionRecord",
    "AttributionResult",
    "AttributionSummary",
    "path_attribution",
    "COMMENT_BUCKETS",
    "RESPONSE_BUCKETS",
    "LengthStudy",
    "length_study",
    "ReportBuilder",
    "MermaidGenerator",
]
