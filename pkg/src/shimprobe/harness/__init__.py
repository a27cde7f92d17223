from .records import CallRecord, LogReader, LogWriter, RetValue, mask_time
from .invoke import Harness, InvocationMethod, run_campaign

__all__ = [
    "CallRecord",
    "LogReader",
    "LogWriter",
    "RetValue",
    "mask_time",
    "Harness",
    "InvocationMethod",
    "run_campaign",
]
