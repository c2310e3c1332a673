"""Aperiodic templates for the non-overlapping template matching test."""

from __future__ import annotations

from functools import lru_cache


def is_aperiodic(value: int, m: int) -> bool:
    """True if the m-bit word has no proper self-overlap (no border)."""
    bits = format(value, f"0{m}b")
    return all(bits[k:] != bits[: m - k] for k in range(1, m))


@lru_cache(maxsize=None)
def aperiodic_templates(m: int) -> tuple[int, ...]:
    """All aperiodic m-bit templates in increasing numeric order."""
    return tuple(v for v in range(1 << m) if is_aperiodic(v, m))


def template_string(value: int, m: int) -> str:
    return format(value, f"0{m}b")
