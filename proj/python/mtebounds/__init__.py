"""Partial-identification bounds for marginal treatment effects under a
misclassified binary treatment."""

from _mtebounds import *  # noqa: F401,F403
from _mtebounds import __version__  # noqa: F401
