"""Deterministic scalar formatting for file artifacts.

``repr`` of a Python float is the shortest string that round-trips to the
same bits, which makes text artifacts both stable across runs and exact to
reload; numpy scalars are coerced first so their verbose reprs never leak
into files.
"""
from __future__ import annotations


def fmt_float(value) -> str:
    return repr(float(value))


def fmt_floats(values) -> list[str]:
    return [repr(float(v)) for v in values]
