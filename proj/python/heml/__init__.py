"""Hard-distance Elastic metric learning: boundary search, momentum-dictionary
training, baseline tripletwise losses and retrieval evaluation."""

try:
    from ._heml import *  # noqa: F401,F403  (installed layout)
except ImportError:  # development layout: extension on sys.path from the build dir
    from _heml import *  # noqa: F401,F403

__version__ = "0.1.0"
