"""Limit experiments: BBM and strip tables, the eps = 1 - s sweep, the
zero-infimum demonstration, the trace constant, and CSV/SVG reports."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .eigen import (
    convex_step,
    diagnostics,
    generalized_eigs,
    solve_first_p,
    solve_linear,
)
from .forms import assemble, energy, lp_mass_parts, mass_matrix
from .kernel import (
    KernelSpec,
    QuadratureControl,
    bbm_constant,
    gauss_legendre,
    kernel_tail_mass,
    singular_double_integral,
)
from .mesh import DofFunction, build_collar_mesh, strip_cells
from .reference import ReferenceCache

__all__ = [
    "DEFAULT_S_GRID",
    "SweepRecord",
    "CheckRow",
    "CheckTable",
    "MeshPolicy",
    "bbm_limit_table",
    "extension_bbm_check",
    "strip_limit_table",
    "convergence_sweep",
    "zero_infimum_demo",
    "trace_constant",
    "emit_report",
]

logger = logging.getLogger(__name__)

DEFAULT_S_GRID = (0.6, 0.7, 0.8, 0.9, 0.95)
SWEEP_FIELDS = ("s", "eps", "p", "lam", "reference", "abs_err", "rel_err", "dofs", "strip_cells", "tail_mass")
SWEEP_HEADER = ("s", "eps", "p", "lambda", "reference", "abs_err", "rel_err", "dofs", "strip_cells", "tail_mass")


@dataclass
class SweepRecord:
    s: float
    eps: float
    p: float
    lam: float
    reference: float
    abs_err: float
    rel_err: float
    dofs: int
    strip_cells: int
    tail_mass: float
    upper_bound: float = 0.5
    sign_constant: Optional[bool] = None
    normalized: Optional[bool] = None
    gap: Optional[float] = None
    monotone: Optional[bool] = None
    converged: bool = True
    residual: float = float("nan")
    error: Optional[str] = None


@dataclass(frozen=True)
class CheckRow:
    param: float
    value: float
    target: float
    deviation: float


@dataclass
class CheckTable:
    """Rows of ``(param, value, target, deviation)``; ``extra`` holds side columns."""

    name: str
    rows: List[CheckRow] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add(self, param, value, target, **extra):
        dev = abs(value - target)
        if not math.isfinite(dev):
            raise ValueError(f"{self.name}: non-finite deviation at {param}")
        self.rows.append(CheckRow(float(param), float(value), float(target), float(dev)))
        for k, v in extra.items():
            self.extra.setdefault(k, []).append(v)

    @property
    def params(self) -> np.ndarray:
        return np.array([r.param for r in self.rows])

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])

    @property
    def deviations(self) -> np.ndarray:
        return np.array([r.deviation for r in self.rows])

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class MeshPolicy:
    """Resolution rule tying the mesh to the strip width.

    Each half of the domain gets ``N`` power-law graded cells with ``N`` the
    smallest count (starting from ``strip_ratio * sqrt(2 L / eps)``) for
    which every strip cell is at most ``eps / strip_ratio`` long and each
    strip holds at least ``min_strip_cells`` cells. ``refine`` multiplies
    ``N`` afterwards (``refine=2`` halves ``h``). ``h`` is used when there is
    no strip (``eps >= L/2`` or the trace problem).
    """

    gamma: float = 2.0
    R: float = 2.0
    strip_ratio: float = 8.0
    min_strip_cells: int = 8
    refine: int = 1
    h: float = 1.0 / 64
    max_interior_dofs: int = 2000

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.min_strip_cells < 1 or self.strip_ratio <= 0 or self.refine < 1:
            raise ValueError("strip resolution settings must be positive")
        if not 0 < self.h <= 0.5:
            raise ValueError("h must lie in (0, 1/2]")

    def build(self, eps: Optional[float] = None, a: float = 0.0, b: float = 1.0):
        L = b - a
        if eps is None or eps >= L / 2:
            N = math.ceil(L / (2 * self.h) - 1e-12) * self.refine
            mesh = build_collar_mesh(a, b, self.R, L / (2 * N), self.gamma)
        else:
            N = math.ceil(self.strip_ratio * math.sqrt(2 * L / eps))
            while True:
                mesh = build_collar_mesh(a, b, self.R, L / (2 * N), self.gamma, strip_eps=eps)
                strip = strip_cells(mesh, eps)
                longest = mesh.cell_lengths[strip.cells].max()
                if longest <= eps / self.strip_ratio * (1 + 1e-9) and strip.cells.size >= 2 * self.min_strip_cells:
                    break
                N += 1
            if self.refine > 1:
                N *= self.refine
                mesh = build_collar_mesh(a, b, self.R, L / (2 * N), self.gamma, strip_eps=eps)
        if mesh.n_interior > self.max_interior_dofs:
            raise ValueError(
                f"mesh needs {mesh.n_interior} interior DOFs, above the cap {self.max_interior_dofs}"
            )
        return mesh


# ---------------------------------------------------------------------------
# limit tables


def _derivative(u: Callable, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    # five-point stencil, exact for quartics
    return (u(x - 2 * h) - 8 * u(x - h) + 8 * u(x + h) - u(x + 2 * h)) / (12 * h)


def _vec(u: Callable) -> Callable:
    def f(x):
        x = np.asarray(x, dtype=float)
        out = u(x)
        out = np.asarray(out, dtype=float)
        return np.broadcast_to(out, x.shape) if out.shape != x.shape else out

    return f


def _gradient_norm(u, du, p, a, b):
    du = _vec(du) if du is not None else (lambda x: _derivative(_vec(u), np.asarray(x, dtype=float)))
    return quad(lambda x: abs(float(du(np.array(x)))) ** p, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def bbm_limit_table(
    u: Callable,
    p: float,
    s_grid: Sequence[float],
    a: float = 0.0,
    b: float = 1.0,
    du: Optional[Callable] = None,
    ctrl: QuadratureControl = QuadratureControl(),
) -> CheckTable:
    """``K (1-s) |u|^p_{W^{s,p}(Omega)}`` against ``int |u'|^p`` over ``s_grid``.

    Only ``Omega x Omega`` enters. ``du`` defaults to a finite-difference
    derivative of ``u``.
    """
    uf = _vec(u)
    target = _gradient_norm(u, du, p, a, b)
    K = bbm_constant(1, p)
    table = CheckTable("bbm_limit")
    g = lambda x, y: np.abs(uf(x) - uf(y)) ** p  # noqa: E731
    for s in s_grid:
        spec = KernelSpec(s, p)
        val = singular_double_integral((a, b), (a, b), spec.exponent, g, ctrl, diag_order=p)
        table.add(s, K * (1 - s) * val, target)
    return table


def extension_bbm_check(
    u: Callable,
    s_grid: Sequence[float],
    R: float = 2.0,
    p: float = 2.0,
    a: float = 0.0,
    b: float = 1.0,
    du: Optional[Callable] = None,
    ctrl: QuadratureControl = QuadratureControl(),
) -> CheckTable:
    """``K (1-s) [Eu]^p`` over ``R^2 minus (Omega^c)^2`` for a linear-decay extension.

    ``Eu`` falls linearly from the boundary values to zero at ``a - R`` and
    ``b + R``. Side columns: ``inner`` (the ``Omega x Omega`` part),
    ``collar`` (``Omega`` against the collar) and ``far`` (``Omega`` against
    the zero region beyond, evaluated in closed form in ``y``), all scaled by
    ``K (1 - s)``.
    """
    uf = _vec(u)
    ua, ub = float(uf(np.array(a))), float(uf(np.array(b)))
    target = _gradient_norm(u, du, p, a, b)
    K = bbm_constant(1, p)
    table = CheckTable("extension_bbm")

    def ext_left(y):
        return ua * (y - (a - R)) / R

    def ext_right(y):
        return ub * ((b + R) - y) / R

    g_in = lambda x, y: np.abs(uf(x) - uf(y)) ** p  # noqa: E731
    g_l = lambda x, y: np.abs(uf(x) - ext_left(y)) ** p  # noqa: E731
    g_r = lambda x, y: np.abs(uf(x) - ext_right(y)) ** p  # noqa: E731
    for s in s_grid:
        spec = KernelSpec(s, p)
        c = K * (1 - s)
        inner = singular_double_integral((a, b), (a, b), spec.exponent, g_in, ctrl, diag_order=p)
        collar = 2.0 * (
            singular_double_integral((a, b), (a - R, a), spec.exponent, g_l, ctrl, diag_order=p)
            + singular_double_integral((a, b), (b, b + R), spec.exponent, g_r, ctrl, diag_order=p)
        )
        sp = spec.sp
        far = 2.0 * quad(
            lambda x: abs(float(uf(np.array(x)))) ** p
            * ((x - a + R) ** -sp + (b + R - x) ** -sp)
            / sp,
            a,
            b,
            epsabs=1e-14,
            epsrel=1e-12,
        )[0]
        total = c * (inner + collar + far)
        table.add(s, total, target, inner=c * inner, collar=c * collar, far=c * far)
    return table


def strip_limit_table(
    u: Callable,
    p: float,
    eps_grid: Sequence[float],
    a: float = 0.0,
    b: float = 1.0,
) -> CheckTable:
    """``(1/eps) int_{Omega_eps} |u|^p`` against ``|u(a)|^p + |u(b)|^p``.

    The strip integrals are evaluated directly on ``(a, a+eps)`` and
    ``(b-eps, b)`` with Gauss-Legendre rules (64 points, cross-checked
    against 32).
    """
    uf = _vec(u)
    L = b - a
    target = abs(float(uf(np.array(a)))) ** p + abs(float(uf(np.array(b)))) ** p
    table = CheckTable("strip_limit")
    for eps in eps_grid:
        if not eps > 0:
            raise ValueError("eps must be positive")
        pieces = [(a, b)] if eps >= L / 2 else [(a, a + eps), (b - eps, b)]
        vals = []
        for n in (32, 64):
            tot = 0.0
            for lo, hi in pieces:
                x, w = gauss_legendre(n, lo, hi)
                tot += float(np.dot(w, np.abs(uf(x)) ** p))
            vals.append(tot / eps)
        if abs(vals[1] - vals[0]) > 1e-10 * max(abs(vals[1]), 1.0):
            logger.warning("strip integral at eps=%g not settled: %g vs %g", eps, *vals)
        table.add(eps, vals[1], target)
    return table


# ---------------------------------------------------------------------------
# sweep


def _sweep_row(s, p, policy, a, b, ctrl, ref_value):
    eps = 1.0 - s
    spec = KernelSpec(s, p)
    row = SweepRecord(
        s=float(s),
        eps=float(eps),
        p=float(p),
        lam=float("nan"),
        reference=float(ref_value),
        abs_err=float("nan"),
        rel_err=float("nan"),
        dofs=0,
        strip_cells=0,
        tail_mass=kernel_tail_mass(policy.R, spec),
    )
    try:
        mesh = policy.build(eps, a, b)
        strip = strip_cells(mesh, eps)
        row.dofs = mesh.n_interior
        row.strip_cells = int(strip.cells.size)
        form = assemble(mesh, spec, ctrl)
        if p == 2:
            pair = solve_linear(form, eps, k=2)
            res = pair[0]
            diag = diagnostics(res, mesh, pair[1].eigenvalue)
            row.gap = diag.gap_to_next
        else:
            res = solve_first_p(form, eps)
            diag = diagnostics(res, mesh)
            row.monotone = res.monotone
        smass = lp_mass_parts(mesh, res.u.full(), strip.cells, p)[0] / eps
        row.lam = res.eigenvalue
        row.abs_err = abs(res.eigenvalue - ref_value)
        row.rel_err = row.abs_err / ref_value
        row.sign_constant = diag.sign_constant
        row.normalized = bool(abs(smass - 1.0) < 1e-10)
        row.converged = res.converged
        row.residual = res.residual
    except Exception as exc:  # a failing row must not stop the sweep
        logger.error("sweep row s=%g failed: %s", s, exc)
        row.error = f"{type(exc).__name__}: {exc}"
        row.converged = False
    return row


def convergence_sweep(
    p: float,
    s_grid: Sequence[float] = DEFAULT_S_GRID,
    mesh_policy: MeshPolicy = MeshPolicy(),
    a: float = 0.0,
    b: float = 1.0,
    ctrl: QuadratureControl = QuadratureControl(),
    threads: int = 1,
    reference: Optional[float] = None,
    cache: Optional[ReferenceCache] = None,
) -> List[SweepRecord]:
    """First eigenvalue with ``eps = 1 - s`` for each ``s``, against ``lambda_1(p)``.

    Rows come back ordered by ``s`` whatever ``threads`` is.
    """
    s_grid = [float(s) for s in s_grid]
    if not s_grid:
        raise ValueError("s_grid is empty")
    if any(not 0 < s < 1 for s in s_grid) or any(t <= u for u, t in zip(s_grid, s_grid[1:])):
        raise ValueError("s_grid must be strictly increasing inside (0, 1)")
    if mesh_policy.gamma < 2:
        raise ValueError("the sweep needs grading gamma >= 2")
    if reference is None:
        reference = (cache or ReferenceCache()).get(p, b - a).value
    work = lambda s: _sweep_row(s, p, mesh_policy, a, b, ctrl, reference)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, s_grid))
    else:
        rows = [work(s) for s in s_grid]
    return sorted(rows, key=lambda r: r.s)


# ---------------------------------------------------------------------------
# zero infimum and trace constant


def _tent(x):
    return np.maximum(0.0, 1.0 - np.abs(x))


def zero_infimum_demo(
    k_grid: Sequence[int],
    s: float,
    p: float,
    a: float = 0.0,
    b: float = 1.0,
    ctrl: QuadratureControl = QuadratureControl(),
) -> CheckTable:
    """Quotient ``(K(1-s)[u_k]^p + ||u_k||^p_Omega) / ||u_k||^p_{Omega^c}`` for translated tents.

    ``u_k(x) = phi(x - b - k - 1)`` with ``phi`` the unit tent, so the bump
    sits at distance ``k`` from ``Omega``. Since ``u_k`` vanishes on
    ``Omega``, only ``Omega x supp(u_k)`` (twice) enters the energy. The
    target column is 0, the infimum.
    """
    ks = [int(k) for k in k_grid]
    if not ks or any(k < 1 for k in ks) or any(t <= u for u, t in zip(ks, ks[1:])):
        raise ValueError("k_grid must be increasing positive integers")
    spec = KernelSpec(s, p)
    K = bbm_constant(1, p)
    denom = 2.0 / (p + 1.0)
    table = CheckTable("zero_infimum")
    for k in ks:
        c = b + k + 1.0
        g = lambda x, y: _tent(y - c) ** p  # noqa: E731
        energy_k = 2.0 * sum(
            singular_double_integral((a, b), cell, spec.exponent, g, ctrl)
            for cell in ((c - 1.0, c), (c, c + 1.0))
        )
        table.add(k, K * (1 - s) * energy_k / denom, 0.0, denominator=denom)
    return table


def trace_constant(
    s: float,
    p: float,
    mesh_policy: MeshPolicy = MeshPolicy(),
    a: float = 0.0,
    b: float = 1.0,
    ctrl: QuadratureControl = QuadratureControl(),
    tol: float = 1e-10,
    max_outer: int = 200,
) -> float:
    """Best fractional trace constant ``Lambda_1(s, p)`` on ``(a, b)``.

    Minimises ``(K(1-s)[u]^p_{Omega x Omega} + ||u||_p^p) / (|u(a)|^p + |u(b)|^p)``
    over P1 functions on the interior mesh. Requires ``sp > 1``.
    """
    spec = KernelSpec(s, p)
    if not spec.sp > 1:
        raise ValueError(f"trace constant needs s p > 1, got s p = {spec.sp:g}")
    mesh = mesh_policy.build(None, a, b)
    form = assemble(mesh, spec, ctrl, interaction="inner")
    I = mesh.interior_index
    ends = np.array([I[0], I[-1]])
    c = bbm_constant(1, p) * (1 - s)
    cells = np.flatnonzero(mesh.interior_cell)
    if p == 2:
        A = c * form.stiffness_inner[np.ix_(I, I)] + mass_matrix(mesh, cells)[np.ix_(I, I)]
        B = np.zeros_like(A)
        B[0, 0] = B[-1, -1] = 1.0
        lam, _ = generalized_eigs(A, B, 1)
        return float(lam[0])

    def bmass(v):
        return float(np.sum(np.abs(v[ends]) ** p))

    def quotient(v):
        return (c * energy(form, v) + lp_mass_parts(mesh, v, cells, p)[0]) / bmass(v)

    u = DofFunction.constant(mesh, 1.0).full()
    u[mesh.exterior_index] = 0.0
    u /= bmass(u) ** (1 / p)
    q = quotient(u)
    for _ in range(max_outer):
        rhs = np.zeros_like(u)
        rhs[ends] = np.sign(u[ends]) * np.abs(u[ends]) ** (p - 1)
        v = convex_step(form, u, rhs, I)
        v /= bmass(v) ** (1 / p)
        q_new = quotient(v)
        u, done, q = v, abs(q - q_new) < tol * q, q_new
        if done:
            return float(q)
    raise RuntimeError("trace inverse iteration did not converge")


# ---------------------------------------------------------------------------
# reports


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return "%.17g" % float(x)


def _table(records):
    if isinstance(records, CheckTable):
        header = ("param", "value", "target", "deviation")
        rows = [[r.param, r.value, r.target, r.deviation] for r in records.rows]
        series = {records.name: ([r.param for r in records.rows], [r.deviation for r in records.rows])}
        return header, rows, series, "param", "deviation"
    records = list(records)
    if records and isinstance(records[0], SweepRecord):
        rows = [[getattr(r, f) for f in SWEEP_FIELDS] for r in records]
        by_p = {}
        for r in records:
            by_p.setdefault(r.p, ([], []))
            by_p[r.p][0].append(r.s)
            by_p[r.p][1].append(r.rel_err)
        series = {f"p={_fmt(k)}": v for k, v in sorted(by_p.items())}
        return SWEEP_HEADER, rows, series, "s", "relative error"
    raise ValueError("records must be a nonempty list of SweepRecord or a CheckTable")


def _svg(series: dict, xlabel: str, ylabel: str, title: str) -> str:
    W, H = 800, 600
    left, right, top, bottom = 90, 40, 50, 70
    xs = [x for xv, _ in series.values() for x in xv]
    ys = [y for _, yv in series.values() for y in yv if y is not None and math.isfinite(y) and y > 0]
    floor = 1e-17
    xmin, xmax = min(xs), max(xs)
    if xmax == xmin:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    lo = math.floor(math.log10(min(ys))) if ys else -1
    hi = math.ceil(math.log10(max(ys))) if ys else 0
    lo = max(lo, int(math.log10(floor)))
    if hi <= lo:
        hi = lo + 1

    def px(x):
        return left + (x - xmin) / (xmax - xmin) * (W - left - right)

    def py(y):
        ly = math.log10(max(y, 10.0**lo))
        return H - bottom - (ly - lo) / (hi - lo) * (H - top - bottom)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n')
    out.write(f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>\n')
    out.write(f'<text x="{W / 2:.1f}" y="30" text-anchor="middle" font-size="18">{title}</text>\n')
    x0, y0, x1, y1 = left, H - bottom, W - right, top
    out.write(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>\n')
    out.write(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>\n')
    for i in range(6):
        xv = xmin + (xmax - xmin) * i / 5
        out.write(f'<line x1="{px(xv):.2f}" y1="{y0}" x2="{px(xv):.2f}" y2="{y0 + 6}" stroke="black"/>\n')
        out.write(f'<text x="{px(xv):.2f}" y="{y0 + 22}" text-anchor="middle" font-size="12">{xv:.4g}</text>\n')
    for e in range(lo, hi + 1):
        yy = py(10.0**e)
        out.write(f'<line x1="{x0 - 6}" y1="{yy:.2f}" x2="{x0}" y2="{yy:.2f}" stroke="black"/>\n')
        out.write(f'<text x="{x0 - 10}" y="{yy + 4:.2f}" text-anchor="end" font-size="12">1e{e}</text>\n')
    out.write(f'<text x="{(x0 + x1) / 2:.1f}" y="{H - 20}" text-anchor="middle" font-size="14">{xlabel}</text>\n')
    out.write(
        f'<text x="20" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 20 {(y0 + y1) / 2:.1f})">{ylabel} (log scale)</text>\n'
    )
    for i, (name, (xv, yv)) in enumerate(series.items()):
        color = colors[i % len(colors)]
        pts = [
            f"{px(x):.2f},{py(y):.2f}"
            for x, y in zip(xv, yv)
            if y is not None and math.isfinite(y)
        ]
        out.write(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(pts)}"/>\n')
        out.write(f'<text x="{x1 - 10}" y="{top + 20 + 18 * i}" text-anchor="end" font-size="12" fill="{color}">{name}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()


def emit_report(records, path: str, title: Optional[str] = None) -> List[str]:
    """Write ``<path>.csv`` and ``<path>.svg``; returns both paths.

    The CSV carries a header and 17 significant digits; the SVG plots the
    error column on a log scale. Output is byte-identical for equal input.
    """
    if records is None or (not isinstance(records, CheckTable) and len(list(records)) == 0) or (
        isinstance(records, CheckTable) and len(records) == 0
    ):
        raise ValueError("emit_report needs at least one record")
    header, rows, series, xlabel, ylabel = _table(records)
    stem = path[:-4] if path.endswith(".csv") else path
    directory = os.path.dirname(stem)
    if directory:
        os.makedirs(directory, exist_ok=True)
    csv_path, svg_path = stem + ".csv", stem + ".svg"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    with open(svg_path, "w") as fh:
        fh.write(_svg(series, xlabel, ylabel, title or os.path.basename(stem)))
    return [csv_path, svg_path]
