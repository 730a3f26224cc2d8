"""Temporal infobox timelines -> normalized SQLite -> schema-guided SQL question answering."""

__version__ = "0.1.0"
