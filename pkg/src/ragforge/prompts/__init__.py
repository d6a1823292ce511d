"""Versioned prompt text assets."""

from __future__ import annotations

from importlib import resources


def load_prompt(name: str) -> str:
    return (resources.files(__package__) / f"{name}.txt").read_text(encoding="utf-8")
