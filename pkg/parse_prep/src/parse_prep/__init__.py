"""Offline preprocessing: parse a raw corpus into the canonical pre-parsed files."""

__version__ = "0.1.0"
