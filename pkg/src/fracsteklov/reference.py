"""Classical Steklov eigenvalue of ``-Delta_p u + |u|^(p-2) u = 0`` on ``(0, L)``.

Three independent routes: the closed form for ``p = 2``, shooting on the
first integral of the ODE, and P1 minimisation of the local Rayleigh quotient.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solveh_banded

__all__ = [
    "SteklovRef",
    "ReferenceCache",
    "steklov_linear",
    "steklov_p_shooting",
    "shooting_trajectory",
    "steklov_p_fem",
    "steklov_reference",
]

_XI0 = 1e-4  # length of the series start-up step


@dataclass(frozen=True)
class SteklovRef:
    p: float
    L: float
    value: float
    method: str
    discrepancy: float = float("nan")

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("Steklov eigenvalue must be positive")


def steklov_linear(L: float = 1.0, k: int = 2) -> list:
    """Steklov eigenvalues for ``p = 2``: ``tanh(L/2)`` and ``coth(L/2)``.

    The boundary of an interval has two points, so there are only two.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    if not 1 <= k <= 2:
        raise ValueError("an interval has exactly two Steklov eigenvalues")
    return [math.tanh(L / 2), 1.0 / math.tanh(L / 2)][:k]


def _series(p: float, xi: float):
    m = p / (p - 1)
    c = (p - 1) / p
    u = 1.0 + c * xi**m + c / ((m + 1) * 2 * m) * xi ** (2 * m)
    w = xi + (p - 1) * c * xi ** (m + 1) / (m + 1)
    return u, w


def shooting_trajectory(p: float, L: float = 1.0, ode_tol: float = 1e-12, dense: bool = False):
    """Integrate the symmetric ground state on ``(L/2, L)``.

    Unknowns are ``u`` and the flux ``w = |u'|^(p-2) u'`` with ``u(L/2) = 1``,
    ``w(L/2) = 0``; the degenerate start is bridged by a two-term series.
    Returns the ``solve_ivp`` solution in the variable ``xi = x - L/2``.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if not L > 0:
        raise ValueError("L must be positive")
    q = 1.0 / (p - 1)
    xi0 = min(_XI0, L / 4)

    def rhs(_, y):
        u, w = y
        return [np.sign(w) * abs(w) ** q, np.sign(u) * abs(u) ** (p - 1)]

    sol = solve_ivp(
        rhs,
        (xi0, L / 2),
        list(_series(p, xi0)),
        method="DOP853",
        rtol=ode_tol,
        atol=ode_tol * 1e-3,
        dense_output=dense,
    )
    if not sol.success:
        raise RuntimeError(f"shooting integration failed: {sol.message}")
    return sol


def steklov_p_shooting(p: float, L: float = 1.0, ode_tol: float = 1e-12) -> float:
    """``lam = |u'|^(p-2) u' / u^(p-1)`` at ``x = L`` for the shooting solution."""
    sol = shooting_trajectory(p, L, ode_tol)
    u, w = sol.y[:, -1]
    return float(w / u ** (p - 1))


def _fem_parts(v, h, p, xg, wg):
    """Energy, gradient and tridiagonal Hessian of ``int |u'|^p + int |u|^p``."""
    d = np.diff(v) / h
    ad = np.abs(d)
    e = h * np.sum(ad**p)
    gd = p * np.sign(d) * ad ** (p - 1)
    grad = np.zeros_like(v)
    grad[:-1] -= gd
    grad[1:] += gd
    floor = 1e-8 * max(np.max(ad), np.max(np.abs(v)) / (h * v.size), 1e-300)
    hd = p * (p - 1) * np.maximum(ad, floor) ** (p - 2) / h

    vq = v[:-1, None] * (1 - xg) + v[1:, None] * xg
    aq = np.abs(vq)
    e += h * np.sum(wg * aq**p)
    gq = p * h * wg * np.sign(vq) * aq ** (p - 1)
    grad[:-1] += (gq * (1 - xg)).sum(1)
    grad[1:] += (gq * xg).sum(1)
    hq = p * (p - 1) * h * wg * np.maximum(aq, 1e-300) ** (p - 2)
    h00 = (hq * (1 - xg) ** 2).sum(1)
    h01 = (hq * xg * (1 - xg)).sum(1)
    h11 = (hq * xg**2).sum(1)

    diag = np.zeros_like(v)
    diag[:-1] += hd + h00
    diag[1:] += hd + h11
    off = -hd + h01
    return e, grad, diag, off


def steklov_p_fem(p: float, L: float = 1.0, h: float = 1e-3, tol: float = 1e-12, max_outer: int = 500) -> float:
    """Minimise ``(int |u'|^p + int |u|^p) / (|u(0)|^p + |u(L)|^p)`` over P1.

    Nonlinear inverse iteration from ``u = 1``; every outer step solves a
    convex problem by banded Newton with backtracking, then rescales to unit
    boundary mass. Stops when the quotient changes by less than ``tol``
    (relative).
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    if not 0 < h < L / 4:
        raise ValueError("need 0 < h < L/4")
    n = math.ceil(L / h - 1e-12)
    h = L / n
    xg, wg = np.polynomial.legendre.leggauss(8 if float(p).is_integer() else 16)
    xg, wg = 0.5 * (xg + 1), 0.5 * wg

    def quotient(v):
        return _fem_parts(v, h, p, xg, wg)[0] / (abs(v[0]) ** p + abs(v[-1]) ** p)

    u = np.ones(n + 1)
    u /= (2.0) ** (1 / p)
    q = quotient(u)
    for _ in range(max_outer):
        b = np.zeros_like(u)
        b[0] = np.sign(u[0]) * abs(u[0]) ** (p - 1)
        b[-1] = np.sign(u[-1]) * abs(u[-1]) ** (p - 1)
        v = u.copy()

        def obj(x):
            return _fem_parts(x, h, p, xg, wg)[0] / p - b @ x

        f = obj(v)
        for _inner in range(100):
            _, g, diag, off = _fem_parts(v, h, p, xg, wg)
            g = g / p - b
            ab = np.zeros((2, v.size))
            ab[0, 1:] = off / p
            ab[1] = diag / p
            step = -solveh_banded(ab, g)
            dec = -g @ step
            if dec <= 1e-24 * max(abs(f), 1.0):
                break
            t = 1.0
            while True:
                trial = v + t * step
                ft = obj(trial)
                if ft <= f + 1e-4 * t * (g @ step) or t < 1e-14:
                    break
                t *= 0.5
            if ft > f:
                break
            v, f = trial, ft
        v /= (abs(v[0]) ** p + abs(v[-1]) ** p) ** (1 / p)
        q_new = quotient(v)
        done = abs(q - q_new) < tol * q
        u, q = v, q_new
        if done:
            return float(q)
    raise RuntimeError("local inverse iteration did not converge")


def steklov_reference(p: float, L: float = 1.0, h: float = 1e-3, cross_check: bool = True) -> SteklovRef:
    """Reference ``lambda_1(p)``: closed form for ``p = 2``, P1 minimisation otherwise.

    With ``cross_check`` the shooting value is computed too and the
    discrepancy recorded.
    """
    if p == 2:
        value = steklov_linear(L, 1)[0]
        disc = abs(steklov_p_shooting(2.0, L) - value) if cross_check else float("nan")
        return SteklovRef(2.0, float(L), value, "closed-form", disc)
    value = steklov_p_fem(p, L, h)
    disc = abs(steklov_p_shooting(p, L) - value) if cross_check else float("nan")
    return SteklovRef(float(p), float(L), value, "local-fem", disc)


class ReferenceCache:
    """JSON-backed table of reference values keyed by ``(p, L)``."""

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._lock = threading.Lock()
        self._table = {}
        if path and os.path.exists(path):
            with open(path) as fh:
                self._table = json.load(fh)

    @staticmethod
    def key(p: float, L: float) -> str:
        return f"p={float(p)!r},L={float(L)!r}"

    def get(self, p: float, L: float = 1.0) -> SteklovRef:
        k = self.key(p, L)
        with self._lock:
            if k in self._table:
                return SteklovRef(**self._table[k])
        ref = steklov_reference(p, L)
        with self._lock:
            self._table[k] = asdict(ref)
            if self.path:
                with open(self.path, "w") as fh:
                    json.dump(self._table, fh, indent=1, sort_keys=True)
        return ref
