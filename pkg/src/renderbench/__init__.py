"""renderbench: benchmarking toolkit for pipelined remote-rendering systems.

Tracks tagged inputs end to end through a client/proxy/app/GPU path, breaks
round-trip latency into pipeline stages, reproduces the biases of rival
measurement methodologies, and verifies every timing claim against a
deterministic discrete-event twin.
"""

__version__ = "0.1.0"
