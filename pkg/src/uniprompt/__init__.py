"""Prompt learning against frozen encoders for universal multi-source
domain adaptation, with a negative-textual-semantics alignment loss,
an energy-based unknown-sample margin loss, a synthetic benchmark
generator, and the full evaluation protocol. Everything runs on a
small tape-based autodiff core; no deep-learning framework required.
"""

__version__ = "0.1.0"
