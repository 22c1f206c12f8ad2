"""Fractional kernel, BBM normalisation constant and singular cell-pair quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple, Union

import numpy as np
from scipy.special import gammaln, roots_jacobi, roots_legendre

__all__ = [
    "KernelSpec",
    "QuadratureControl",
    "QuadratureError",
    "bbm_constant",
    "gauss_legendre",
    "gauss_jacobi",
    "kernel_tail_mass",
    "singular_double_integral",
    "disjoint_order",
]

Interval = Tuple[float, float]
Integrand = Union[float, Callable[[np.ndarray, np.ndarray], np.ndarray]]


class QuadratureError(RuntimeError):
    """Raised when a quadrature does not reach its tolerance."""


@dataclass(frozen=True)
class KernelSpec:
    """Exponents of the kernel ``|x - y|^-(n + s p)``."""

    s: float
    p: float
    n: int = 1

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not 1.0 < self.p < math.inf:
            raise ValueError(f"p must exceed 1 and be finite, got {self.p}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")

    @property
    def exponent(self) -> float:
        """Power of ``|x - y|`` in the kernel (negative)."""
        return -(self.n + self.s * self.p)

    @property
    def sp(self) -> float:
        return self.s * self.p

    def __call__(self, x, y):
        return np.abs(np.asarray(x) - np.asarray(y)) ** self.exponent


@dataclass(frozen=True)
class QuadratureControl:
    """Knobs for the cell-pair quadratures.

    ``order`` is the base Gauss order per direction, ``levels`` the maximum
    number of geometric grading layers toward a diagonal or shared corner,
    ``rtol`` the relative tolerance.
    """

    order: int = 8
    levels: int = 30
    rtol: float = 1e-10

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("order must be at least 2")
        if not 0 <= self.levels <= 40:
            raise ValueError("levels must lie in [0, 40]")
        if not self.rtol > 0:
            raise ValueError("rtol must be positive")


def bbm_constant(n: int, p: float) -> float:
    """Normalisation constant ``K_{n,p}`` of the Bourgain-Brezis-Mironescu limit.

    Evaluated through log-Gamma so that large ``n`` or ``p`` do not overflow.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    log_k = (
        math.log(p)
        + gammaln((n + p) / 2.0)
        - math.log(2.0)
        - 0.5 * (n - 1) * math.log(math.pi)
        - gammaln((p + 1) / 2.0)
    )
    return float(math.exp(log_k))


def kernel_tail_mass(R: float, spec: KernelSpec) -> float:
    """Mass of the 1D kernel outside ``[-R, R]``: ``2 / (sp R^sp)``."""
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")
    if spec.n != 1:
        raise ValueError("tail mass is only available for n = 1")
    return 2.0 / (spec.sp * R**spec.sp)


@lru_cache(maxsize=256)
def _legendre(n: int):
    x, w = roots_legendre(n)
    return x, w


@lru_cache(maxsize=512)
def _jacobi(n: int, beta: float):
    x, w = roots_jacobi(n, 0.0, beta)
    return x, w


def gauss_legendre(n: int, lo: float = 0.0, hi: float = 1.0):
    """Gauss-Legendre nodes and weights on ``[lo, hi]``."""
    x, w = _legendre(int(n))
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def gauss_jacobi(n: int, beta: float, length: float = 1.0):
    """Nodes/weights for ``int_0^length r^beta f(r) dr`` (``beta > -1``)."""
    if not beta > -1:
        raise ValueError(f"Jacobi weight exponent must exceed -1, got {beta}")
    x, w = _jacobi(int(n), float(beta))
    half = 0.5 * length
    return half * (x + 1.0), w * half ** (beta + 1.0)


def disjoint_order(dist, length, rtol: float, floor: int = 2, cap: int = 64):
    """Gauss order for a cell of ``length`` whose integrand is analytic except
    at a point ``dist`` away from the cell.

    Uses the Bernstein-ellipse rate ``rho^(-2n)``.
    """
    dist = np.asarray(dist, dtype=float)
    length = np.asarray(length, dtype=float)
    delta = 2.0 * dist / length
    rho = 1.0 + delta + np.sqrt(delta * (delta + 2.0))
    n = np.ceil((math.log(10.0 / rtol)) / (2.0 * np.log(rho)))
    return np.clip(n, floor, cap).astype(int)


def _as_callable(g: Integrand) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if callable(g):
        return g
    c = float(g)
    return lambda x, y: np.full(np.broadcast(x, y).shape, c)


def _close(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= max(rtol * max(abs(a), abs(b)), 1e-300)


def _radial_rule(rmax: np.ndarray, beta: float, n: int, levels: int):
    """Nodes/weights for ``int_0^rmax r^beta f(r) dr`` with geometric grading.

    The innermost layer ``[0, rmax 2^-levels]`` uses Gauss-Jacobi, outer layers
    use Gauss-Legendre with the weight applied explicitly. ``rmax`` may be an
    array; the result has shape ``rmax.shape + (m,)``.
    """
    rmax = np.asarray(rmax, dtype=float)[..., None]
    cut = 2.0**-levels
    xj, wj = gauss_jacobi(n, beta, 1.0)
    nodes = [cut * xj]
    weights = [cut ** (beta + 1.0) * wj]
    xl, wl = gauss_legendre(n)
    for k in range(levels):
        lo, hi = 2.0 ** -(k + 1), 2.0**-k
        r = lo + (hi - lo) * xl
        nodes.append(r)
        weights.append((hi - lo) * wl * r**beta)
    t = np.concatenate(nodes)
    w = np.concatenate(weights)
    return rmax * t, w * rmax ** (beta + 1.0)


def _diagonal_estimate(g, lo, h, alpha, nu, n, levels):
    # int_0^h r^alpha [ int_lo^{lo+h-r} g(x, x+r) + g(x+r, x) dx ] dr
    r, wr = _radial_rule(np.array(h), alpha + nu, n, levels)
    xi, wx = gauss_legendre(n)
    span = h - r  # inner interval length per radial node
    x = lo + span[:, None] * xi[None, :]
    rr = r[:, None]
    vals = g(x, x + rr) + g(x + rr, x)
    if nu:
        vals = vals / rr**nu
    inner = (vals * wx[None, :]).sum(axis=1) * span
    return float((inner * wr).sum())


def _corner_estimate(g, z, h1, h2, alpha, nu, n, levels):
    # x = z - rho t in (z - h1, z), y = z + rho (1 - t) in (z, z + h2)
    tstar = h1 / (h1 + h2)
    total = 0.0
    for t_lo, t_hi in ((0.0, tstar), (tstar, 1.0)):
        t, wt = gauss_legendre(n, t_lo, t_hi)
        with np.errstate(divide="ignore"):
            rmax = np.minimum(h1 / t, h2 / (1.0 - t))
        rho, wr = _radial_rule(rmax, alpha + 1.0 + nu, n, levels)
        x = z - rho * t[:, None]
        y = z + rho * (1.0 - t[:, None])
        vals = g(x, y)
        if nu:
            vals = vals / rho**nu
        total += float(((vals * wr).sum(axis=1) * wt).sum())
    return total


def _tensor_estimate(g, a, b, alpha, na, nb):
    x, wx = gauss_legendre(na, *a)
    y, wy = gauss_legendre(nb, *b)
    X, Y = x[:, None], y[None, :]
    vals = g(X, Y) * np.abs(X - Y) ** alpha
    return float((vals * wx[:, None] * wy[None, :]).sum())


def _converge(estimate, ctrl: QuadratureControl, what: str) -> float:
    # grading levels resolve the singular set, order doubling the smooth part
    n = ctrl.order
    prev = estimate(0, n)
    for level in range(1, ctrl.levels + 1):
        cur = estimate(level, n)
        while _close(cur, prev, ctrl.rtol) and n <= 128:
            check = estimate(level, 2 * n)
            if _close(check, cur, ctrl.rtol):
                return check
            n *= 2
            prev, cur = cur, check
        prev = cur
    raise QuadratureError(
        f"{what}: tolerance {ctrl.rtol:g} not met after {ctrl.levels} grading levels"
    )


def _split(cell: Interval, cuts) -> list:
    lo, hi = cell
    pts = sorted({lo, hi, *(c for c in cuts if lo < c < hi)})
    return list(zip(pts[:-1], pts[1:]))


def singular_double_integral(
    cell_a: Interval,
    cell_b: Interval,
    weight_exponent: float,
    g: Integrand,
    ctrl: QuadratureControl = QuadratureControl(),
    diag_order: float = 0.0,
) -> float:
    """Integrate ``g(x, y) |x - y|^weight_exponent`` over ``cell_a x cell_b``.

    Overlapping parts are integrated in difference coordinates and touching
    parts in corner-polar coordinates, both with geometric grading toward the
    singular set and a Gauss-Jacobi innermost layer. ``diag_order`` is the
    order with which ``g`` vanishes on the diagonal; it is folded into the
    Jacobi weight so that e.g. ``g = |u(x) - u(y)|^p`` with
    ``diag_order = p`` stays well resolved. Disjoint parts use tensor
    Gauss-Legendre with order doubling.

    Raises
    ------
    QuadratureError
        If refinement is exhausted before ``ctrl.rtol`` is met.
    ValueError
        If a cell is degenerate or the singularity is not integrable.
    """
    a = (float(cell_a[0]), float(cell_a[1]))
    b = (float(cell_b[0]), float(cell_b[1]))
    if not (a[1] > a[0] and b[1] > b[0]):
        raise ValueError("cells must be nondegenerate intervals")
    gf = _as_callable(g)
    alpha = float(weight_exponent)
    nu = float(diag_order)

    total = 0.0
    for pa in _split(a, b):
        for pb in _split(b, a):
            total += _piece(pa, pb, alpha, gf, ctrl, nu)
    return total


def _piece(a, b, alpha, g, ctrl, nu):
    if a == b:
        if not alpha + nu > -1:
            raise ValueError(
                "diagonal singularity not integrable: need weight_exponent + diag_order > -1"
            )
        return _converge(
            lambda lev, n: _diagonal_estimate(g, a[0], a[1] - a[0], alpha, nu, n, lev),
            ctrl,
            f"diagonal cell {a}",
        )
    if a[1] == b[0] or b[1] == a[0]:
        if not alpha + nu > -2:
            raise ValueError(
                "corner singularity not integrable: need weight_exponent + diag_order > -2"
            )
        if a[1] == b[0]:
            z, h1, h2, gg = a[1], a[1] - a[0], b[1] - b[0], g
        else:
            z, h1, h2 = b[1], b[1] - b[0], a[1] - a[0]
            gg = lambda x, y: g(y, x)  # noqa: E731
        return _converge(
            lambda lev, n: _corner_estimate(gg, z, h1, h2, alpha, nu, n, lev),
            ctrl,
            f"touching cells {a}, {b}",
        )
    # disjoint: order doubling
    dist = max(b[0] - a[1], a[0] - b[1])
    na = int(disjoint_order(dist, a[1] - a[0], ctrl.rtol, floor=ctrl.order))
    nb = int(disjoint_order(dist, b[1] - b[0], ctrl.rtol, floor=ctrl.order))
    prev = _tensor_estimate(g, a, b, alpha, na, nb)
    for _ in range(ctrl.levels):
        na, nb = 2 * na, 2 * nb
        cur = _tensor_estimate(g, a, b, alpha, na, nb)
        if _close(cur, prev, ctrl.rtol):
            return cur
        prev = cur
        if na > 4096:
            break
    raise QuadratureError(f"disjoint cells {a}, {b}: order doubling did not converge")
