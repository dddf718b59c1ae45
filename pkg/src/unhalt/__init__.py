"""Non-termination prover for integer programs, based on program reversal.

The prover searches for a certificate that some initial configuration of a
nondeterministic integer program admits no terminating run: a backward
invariant of a reversed under-approximation of the program, together with a
reachable configuration outside it. See the README for the pipeline.
"""

__version__ = "0.1.0"
