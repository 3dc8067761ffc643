"""Shared store for the one-line acceptance results printed at session end."""

LINES: list[str] = []
