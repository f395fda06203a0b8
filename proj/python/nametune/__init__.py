"""Few-shot text-input tuning for frozen dual-encoder models."""

from ._nametune import *  # noqa: F401,F403
from ._nametune import __doc__  # noqa: F401

__version__ = "0.1.0"
