"""Numerical laboratory for the supercritical almost Mathieu operator."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("amolab")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
