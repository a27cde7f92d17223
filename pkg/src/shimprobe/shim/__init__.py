from .policy import (
    Disposition,
    DispositionKind,
    ParamRule,
    ReturnRule,
    RulePath,
    ShimPolicy,
    UNSUPPORTED_ERRNO,
    REJECTED_RETURN,
    load_policy,
    save_policy,
    random_policy,
)
from .engine import Shim, ShimResult
from .presets import PRESET_NAMES, load_preset, preset_path

__all__ = [
    "Disposition",
    "DispositionKind",
    "ParamRule",
    "ReturnRule",
    "RulePath",
    "ShimPolicy",
    "UNSUPPORTED_ERRNO",
    "REJECTED_RETURN",
    "load_policy",
    "save_policy",
    "random_policy",
    "Shim",
    "ShimResult",
    "PRESET_NAMES",
    "load_preset",
    "preset_path",
]
