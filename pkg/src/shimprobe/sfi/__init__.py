from .isa import Addr, Bounds, Instr, SfiProgram, Verdict, Violation, format_program, parse_program
from .instrument import instrument
from .verify import verify
from .simulate import Trace, simulate
from .corpus import corpus_matrix, poc_corpus
from .randprog import random_program

__all__ = [
    "Addr",
    "Bounds",
    "Instr",
    "SfiProgram",
    "Verdict",
    "Violation",
    "format_program",
    "parse_program",
    "instrument",
    "verify",
    "simulate",
    "Trace",
    "corpus_matrix",
    "poc_corpus",
    "random_program",
]
