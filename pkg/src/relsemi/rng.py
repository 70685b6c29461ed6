"""Counter-based random streams for reproducible, worker-independent Monte Carlo.

Every random draw in the engine comes from a Philox generator keyed by
(experiment seed, chunk index, stream role).  Philox is a counter-based
generator, so streams with distinct keys are independent and can be created
in any order by any worker: results depend only on the key, never on which
thread produced them.
"""

import numpy as np

# Stream roles.  Each kind of draw gets its own stream so that changing how
# many values one role consumes cannot shift the draws of another.
SUBORDINATOR = 1
BROWNIAN = 2
JUMP_COUNT = 3
JUMP_TIMES = 4
START_POINT = 5
START_SPIN = 6
SCRATCH = 7

_MASK64 = (1 << 64) - 1


def stream(seed, chunk, role):
    """Return a fresh ``numpy.random.Generator`` for (seed, chunk, role)."""
    if chunk < 0 or role < 0:
        raise ValueError("chunk and role must be nonnegative")
    key = np.array([seed & _MASK64, ((chunk & _MASK64) << 8 | role) & _MASK64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def scalar_stream(seed, index=0):
    """Convenience stream for single-shot sampling outside the chunked engine."""
    return stream(seed, index, SCRATCH)
