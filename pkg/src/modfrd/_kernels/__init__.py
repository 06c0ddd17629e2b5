"""Hot-loop kernels with an import-time compiled/pure-Python switch.

Set MODFRD_PURE_PYTHON=1 to force the pure implementation (used by the
parity tests and the benchmark).
"""

import os

if os.environ.get("MODFRD_PURE_PYTHON") == "1":
    from ._pure import COMPILED, moderation_pass, score_walk
else:
    try:
        from ._speed import COMPILED, moderation_pass, score_walk
    except ImportError:
        from ._pure import COMPILED, moderation_pass, score_walk

__all__ = ["COMPILED", "moderation_pass", "score_walk"]
