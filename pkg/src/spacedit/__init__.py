"""Learned editing-space toolkit for global color and tone photo edits."""

__version__ = "0.1.0"
