"""Differentiable particle filtering and gradient-based particle MCMC."""

from ._gradpf import *  # noqa: F401,F403
from ._gradpf import GradpfError, Model

__all__ = [name for name in dir() if not name.startswith("_")]
