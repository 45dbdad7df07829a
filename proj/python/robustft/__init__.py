"""Robustness finetuning core (C++ extension)."""

from ._robustft import *  # noqa: F401,F403
from ._robustft import __doc__  # noqa: F401
