from .types import (
    ArgDir,
    Bytes,
    Composite,
    FieldPath,
    NullPointer,
    Param,
    Scalar,
    SemanticType,
    StateDep,
    StructLayout,
    SyscallSpec,
    Truncated,
    ValueNode,
)
from .typeexpr import parse_type, format_type
from .registry import SyscallRegistry
from .memory import (
    VirtualAddressSpace,
    ProcessMemoryReader,
    LocalBufferMemory,
)
from .encode import encode_value_tree, realize_args, flatten, tree_to_json, tree_from_json

__all__ = [
    "ArgDir",
    "Bytes",
    "Composite",
    "FieldPath",
    "NullPointer",
    "Param",
    "Scalar",
    "SemanticType",
    "StateDep",
    "StructLayout",
    "SyscallSpec",
    "Truncated",
    "ValueNode",
    "parse_type",
    "format_type",
    "SyscallRegistry",
    "VirtualAddressSpace",
    "ProcessMemoryReader",
    "LocalBufferMemory",
    "encode_value_tree",
    "realize_args",
    "flatten",
    "tree_to_json",
    "tree_from_json",
]
