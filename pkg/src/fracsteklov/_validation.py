"""Parameter checks shared by the estimator and the command line."""

from __future__ import annotations

import math
from numbers import Integral, Real


def check_real(name: str, value, lo=None, hi=None, lo_open=True, hi_open=True) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"{name} must be finite, got {value!r}")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ValueError(f"{name} must {'exceed' if lo_open else 'be at least'} {lo:g}, got {v:g}")
    if hi is not None and (v >= hi if hi_open else v > hi):
        raise ValueError(f"{name} must be {'below' if hi_open else 'at most'} {hi:g}, got {v:g}")
    return v


def check_int(name: str, value, lo=None) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ValueError(f"{name} must be at least {lo}, got {value}")
    return int(value)


def check_p(p) -> float:
    return check_real("p", p, lo=1.0)


def check_s(s, name: str = "s") -> float:
    return check_real(name, s, lo=0.0, hi=1.0)


def check_interval(a, b):
    a = check_real("a", a)
    b = check_real("b", b)
    if not a < b:
        raise ValueError(f"need a < b, got a={a:g}, b={b:g}")
    return a, b


def check_s_grid(grid, name: str = "s_grid") -> list:
    if not isinstance(grid, (list, tuple)) or not grid:
        raise ValueError(f"{name} must be a nonempty list")
    vals = [check_s(s, name) for s in grid]
    if any(t <= u for u, t in zip(vals, vals[1:])):
        raise ValueError(f"{name} must be strictly increasing")
    return vals
