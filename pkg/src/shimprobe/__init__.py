"""shimprobe: a desk-scale syscall-interface analyzer for sandboxing middleware.

The toolkit has two halves:

* an interface fuzzer that drives generated syscalls through a reference
  middleware shim and observes what escapes to the (mock or real) kernel,
  plus a three-stage analysis pipeline that recovers the shim's exposure,
  parameter-sanitization, and return-checking policy and estimates covert
  channel bandwidth per syscall;
* a software fault isolation checker for a miniature instruction set:
  a reference instrumenter, a load-time verifier, an execution simulator
  used as an independent soundness oracle, and a proof-of-concept attack
  corpus.
"""

__version__ = "0.1.0"
