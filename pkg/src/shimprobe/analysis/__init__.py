from .correlate import CallPair, Correlation, correlate
from .exposure import ExposureResult, classify_exposure
from .sanitize import SanitizationResult, classify_value_pairs, diff_parameters
from .returns import ReturnCheckResult, detect_return_checks
from .channel import ChannelEstimate, estimate_bandwidth, leaked_bits_per_call, measure_rates
from .report import Report, build_report, render_text
from .oracle import expected_exposure, expected_sanitization, expected_return_checks, oracle_mismatches

__all__ = [
    "CallPair",
    "Correlation",
    "correlate",
    "ExposureResult",
    "classify_exposure",
    "SanitizationResult",
    "classify_value_pairs",
    "diff_parameters",
    "ReturnCheckResult",
    "detect_return_checks",
    "ChannelEstimate",
    "estimate_bandwidth",
    "leaked_bits_per_call",
    "measure_rates",
    "Report",
    "build_report",
    "render_text",
    "expected_exposure",
    "expected_sanitization",
    "expected_return_checks",
    "oracle_mismatches",
]
