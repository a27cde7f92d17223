from .mutation import MutationRule, load_mutation_rules, save_mutation_rules, default_stage3_rules
from .mock_backend import MockInterceptor
from .control import ControlHandshake

__all__ = [
    "MutationRule",
    "load_mutation_rules",
    "save_mutation_rules",
    "default_stage3_rules",
    "MockInterceptor",
    "ControlHandshake",
]
