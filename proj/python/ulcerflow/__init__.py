"""Python bindings for the ulcerflow wound segmentation pipeline."""

from ._ulcerflow import *  # noqa: F401,F403
from ._ulcerflow import __doc__  # noqa: F401

__version__ = "0.1.0"
