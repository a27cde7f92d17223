"""Shipped policy presets.

* null      : forward everything, check nothing: the maximal-leak baseline.
* libc-like : a thin libc wrapper: every supported call forwarded verbatim,
              exposed count equals supported count.
* libos-like: a library-OS: a large internally-served set, positional-read
              distortion, some parameter sanitization, address checks on
              mapping returns; exposed is strictly below supported.
* hardened  : sanitize aggressively and fully validate every return.
"""

from pathlib import Path

from ..model.registry import SyscallRegistry
from .policy import ShimPolicy, load_policy

PRESET_NAMES = ("null", "libc-like", "libos-like", "hardened")
_DIR = Path(__file__).parent / "policies"


def preset_path(name: str) -> Path:
    if name not in PRESET_NAMES:
        raise KeyError(f"unknown preset {name!r}; have {PRESET_NAMES}")
    return _DIR / f"{name}.yaml"


def load_preset(name: str, registry: SyscallRegistry = None) -> ShimPolicy:
    return load_policy(preset_path(name), registry)
