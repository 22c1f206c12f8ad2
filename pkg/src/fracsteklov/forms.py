"""Assembly and evaluation of the nonlocal energy over ``R^2 minus (Omega^c)^2``.

The discrete energy of a continuous piecewise-linear function ``u`` is a sum
over quadrature entries ``q``::

    H(u, u) = sum_q  w_q |d_q . u|^p

where ``d_q`` is a difference stencil over at most four DOFs. Three kinds of
cell pairs produce entries:

* identical interior cells, integrated in closed form (``u(x) - u(y)`` is
  the slope times ``x - y``);
* cells sharing a node, integrated exactly in the radial variable of
  corner-polar coordinates, leaving a smooth 1D integral over the angle;
* disjoint cells, tensor Gauss-Legendre with orders chosen from the
  separation.

Pairs of two exterior cells never produce entries.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kernel import (
    KernelSpec,
    QuadratureControl,
    disjoint_order,
    gauss_legendre,
    kernel_tail_mass,
)
from .mesh import CollarMesh1D, DofFunction, Strip, strip_cells

__all__ = [
    "GagliardoForm",
    "IdentityReport",
    "NeumannError",
    "assemble",
    "energy",
    "pairing",
    "operator_action",
    "energy_gradient",
    "energy_hessian",
    "lp_mass",
    "lp_mass_parts",
    "neumann_extend",
    "neumann_value_at",
    "solve_neumann_scalar",
    "identity_check",
    "picone_defect",
    "export_blocks",
]

logger = logging.getLogger(__name__)

_CHUNK = 2_000_000  # quadrature entries per block


class NeumannError(RuntimeError):
    """Exterior extension did not converge."""


@dataclass(eq=False)
class GagliardoForm:
    """Assembled nonlocal energy on a collar mesh.

    For ``p == 2`` the dense matrices ``stiffness`` (full interaction) and
    ``stiffness_inner`` (Omega x Omega only) are stored, with
    ``H(u, v) = u @ stiffness @ v``. For other ``p`` the quadrature entries
    are cached. ``interaction`` is ``"full"`` or ``"inner"``.
    """

    mesh: CollarMesh1D
    spec: KernelSpec
    ctrl: QuadratureControl
    interaction: str
    tail_mass: float
    idx: Optional[np.ndarray] = None
    coef: Optional[np.ndarray] = None
    weight: Optional[np.ndarray] = None
    inner: Optional[np.ndarray] = None
    stiffness: Optional[np.ndarray] = None
    stiffness_inner: Optional[np.ndarray] = None
    n_entries: int = 0

    @property
    def p(self) -> float:
        return self.spec.p

    @property
    def n(self) -> int:
        return self.mesh.n_nodes

    @property
    def is_linear(self) -> bool:
        return self.stiffness is not None


@dataclass(frozen=True)
class IdentityReport:
    divergence_residual: float
    parts_residual: float
    scale: float
    divergence_scale: float


# ---------------------------------------------------------------------------
# quadrature entries


def _same_cell_entries(mesh, spec, cells):
    h = mesh.cell_lengths[cells]
    p, s = spec.p, spec.s
    beta = p * (1 - s) + 1
    w = 2.0 * h**beta / (p * (1 - s) * beta)
    idx = np.column_stack([cells, cells + 1, cells, cells])
    coef = np.column_stack([-1.0 / h, 1.0 / h, np.zeros_like(h), np.zeros_like(h)])
    return idx, coef, w


def _touching_entries(mesh, spec, ctrl, left):
    # pairs (c, c + 1) sharing node z = c + 1
    p, s = spec.p, spec.s
    beta = p * (1 - s) + 1
    hl = mesh.cell_lengths[left]
    hr = mesh.cell_lengths[left + 1]
    tstar = hl / (hl + hr)
    floor = ctrl.order if p == 2 else 2 * ctrl.order
    idx_out, coef_out, w_out = [], [], []
    for piece in (0, 1):
        if piece == 0:
            lo, hi = np.zeros_like(tstar), tstar
            n = disjoint_order(1 - tstar, tstar, ctrl.rtol, floor=floor)
        else:
            lo, hi = tstar, np.ones_like(tstar)
            n = disjoint_order(tstar, 1 - tstar, ctrl.rtol, floor=floor)
        for order in np.unique(n):
            sel = np.flatnonzero(n == order)
            xi, wx = gauss_legendre(int(order))
            t = lo[sel, None] + (hi - lo)[sel, None] * xi[None, :]
            wt = (hi - lo)[sel, None] * wx[None, :]
            h1, h2 = hl[sel, None], hr[sel, None]
            rmax = h2 / (1 - t) if piece == 0 else h1 / t
            w = 2.0 * wt * rmax**beta / beta
            z = (left[sel] + 1)[:, None] * np.ones_like(t, dtype=int)
            idx = np.stack([z - 1, z, z + 1, z], axis=-1)
            coef = np.stack([-t / h1, t / h1 - (1 - t) / h2, (1 - t) / h2, 0 * t], axis=-1)
            idx_out.append(idx.reshape(-1, 4))
            coef_out.append(coef.reshape(-1, 4))
            w_out.append(w.ravel())
    return np.concatenate(idx_out), np.concatenate(coef_out), np.concatenate(w_out)


def _disjoint_entries(mesh, spec, ctrl, ci, cj):
    """Yield entry blocks for disjoint cell pairs ``ci[k] < cj[k]``."""
    nodes = mesh.nodes
    h = mesh.cell_lengths
    dist = nodes[cj] - nodes[ci + 1]
    floor = 2 if spec.p == 2 else 4
    ni = disjoint_order(dist, h[ci], ctrl.rtol, floor=floor)
    nj = disjoint_order(dist, h[cj], ctrl.rtol, floor=floor)
    key = ni * 1000 + nj
    alpha = spec.exponent
    for k in np.unique(key):
        a, b = divmod(int(k), 1000)
        sel = np.flatnonzero(key == k)
        xi, wx = gauss_legendre(a)
        yj, wy = gauss_legendre(b)
        per = max(1, _CHUNK // (a * b))
        for start in range(0, sel.size, per):
            s_ = sel[start : start + per]
            I, J = ci[s_], cj[s_]
            X = nodes[I][:, None, None] + h[I][:, None, None] * xi[None, :, None]
            Y = nodes[J][:, None, None] + h[J][:, None, None] * yj[None, None, :]
            w = (
                2.0
                * (h[I] * h[J])[:, None, None]
                * wx[None, :, None]
                * wy[None, None, :]
                * (Y - X) ** alpha
            )
            shape = w.shape
            one = np.ones(shape)
            Xi = np.broadcast_to(xi[None, :, None], shape)
            Yj = np.broadcast_to(yj[None, None, :], shape)
            idx = np.stack(
                [
                    np.broadcast_to(I[:, None, None], shape),
                    np.broadcast_to(I[:, None, None] + 1, shape),
                    np.broadcast_to(J[:, None, None], shape),
                    np.broadcast_to(J[:, None, None] + 1, shape),
                ],
                axis=-1,
            )
            coef = np.stack([one - Xi, Xi, Yj - one, -Yj], axis=-1)
            yield idx.reshape(-1, 4), coef.reshape(-1, 4), w.ravel()


def _entry_blocks(mesh: CollarMesh1D, spec: KernelSpec, ctrl: QuadratureControl, interaction: str):
    """Yield ``(idx, coef, weight, inner)`` blocks covering every admissible cell pair."""
    inside = mesh.interior_cell
    nc = inside.size
    keep = inside if interaction == "inner" else None

    cells = np.flatnonzero(inside)
    idx, coef, w = _same_cell_entries(mesh, spec, cells)
    yield idx, coef, w, np.ones(w.size, bool)

    left = np.arange(nc - 1)
    both = inside[left] & inside[left + 1]
    ok = both if keep is not None else (inside[left] | inside[left + 1])
    left = left[ok]
    if left.size:
        idx, coef, w = _touching_entries(mesh, spec, ctrl, left)
        z = idx[:, 1] - 1
        yield idx, coef, w, inside[z] & inside[z + 1]

    ci, cj = np.triu_indices(nc, k=2)
    both = inside[ci] & inside[cj]
    ok = both if keep is not None else (inside[ci] | inside[cj])
    ci, cj = ci[ok], cj[ok]
    for idx, coef, w in _disjoint_entries(mesh, spec, ctrl, ci, cj):
        c0, c1 = idx[:, 0], idx[:, 2]
        yield idx, coef, w, inside[c0] & inside[c1]


def _accumulate_matrix(n, idx, coef, w, out):
    flat = out.reshape(-1)
    for k in range(4):
        for m in range(4):
            flat += np.bincount(idx[:, k] * n + idx[:, m], weights=w * coef[:, k] * coef[:, m], minlength=n * n)
    return out


def assemble(
    mesh: CollarMesh1D,
    spec: KernelSpec,
    ctrl: QuadratureControl = QuadratureControl(),
    interaction: str = "full",
    keep_entries: Optional[bool] = None,
) -> GagliardoForm:
    """Assemble ``H_{s,p}`` on ``mesh``.

    ``interaction="inner"`` restricts the energy to ``Omega x Omega``.
    Quadrature entries are kept for ``p != 2`` (or when ``keep_entries``).
    """
    if spec.n != 1:
        raise ValueError("only one-dimensional kernels can be assembled")
    if interaction not in ("full", "inner"):
        raise ValueError(f"unknown interaction {interaction!r}")
    linear = spec.p == 2
    if keep_entries is None:
        keep_entries = not linear
    n = mesh.n_nodes
    S = np.zeros((n, n)) if linear else None
    S_in = np.zeros((n, n)) if linear else None
    parts = []
    count = 0
    for idx, coef, w, inner in _entry_blocks(mesh, spec, ctrl, interaction):
        count += w.size
        if linear:
            _accumulate_matrix(n, idx, coef, w, S)
            _accumulate_matrix(n, idx[inner], coef[inner], w[inner], S_in)
        if keep_entries:
            parts.append((idx.astype(np.int32), coef, w, inner))
    form = GagliardoForm(
        mesh=mesh,
        spec=spec,
        ctrl=ctrl,
        interaction=interaction,
        tail_mass=kernel_tail_mass(mesh.R, spec),
        n_entries=count,
    )
    if linear:
        form.stiffness = 0.5 * (S + S.T)
        form.stiffness_inner = 0.5 * (S_in + S_in.T)
    if keep_entries:
        form.idx = np.concatenate([q[0] for q in parts])
        form.coef = np.concatenate([q[1] for q in parts])
        form.weight = np.concatenate([q[2] for q in parts])
        form.inner = np.concatenate([q[3] for q in parts])
    logger.debug("assembled %d quadrature entries on %d nodes", count, n)
    return form


# ---------------------------------------------------------------------------
# evaluation


def _full(form: GagliardoForm, u) -> np.ndarray:
    if isinstance(u, DofFunction):
        if u.mesh is not form.mesh and u.mesh.n_nodes != form.n:
            raise ValueError("DofFunction lives on a different mesh")
        return u.full()
    u = np.asarray(u, dtype=float)
    if u.shape != (form.n,):
        raise ValueError(f"expected {form.n} coefficients, got shape {u.shape}")
    return u


def _entries(form, part):
    if form.idx is None:
        raise ValueError("form was assembled without quadrature entries")
    if part == "inner":
        m = form.inner
        return form.idx[m], form.coef[m], form.weight[m]
    return form.idx, form.coef, form.weight


def _signed_power(x, q):
    return np.sign(x) * np.abs(x) ** q


def _diff(idx, coef, u):
    return (coef * u[idx]).sum(axis=1)


def energy(form: GagliardoForm, u, part: str = "full") -> float:
    """``H(u, u)``; ``part="inner"`` keeps only ``Omega x Omega``."""
    u = _full(form, u)
    if form.is_linear:
        S = form.stiffness_inner if part == "inner" else form.stiffness
        return float(max(u @ S @ u, 0.0))
    idx, coef, w = _entries(form, part)
    return float(np.dot(w, np.abs(_diff(idx, coef, u)) ** form.p))


def pairing(form: GagliardoForm, u, v, part: str = "full") -> float:
    """``H(u, v) = sum |du|^(p-2) du dv K``, linear in ``v``."""
    u, v = _full(form, u), _full(form, v)
    if form.is_linear:
        S = form.stiffness_inner if part == "inner" else form.stiffness
        return float(u @ S @ v)
    idx, coef, w = _entries(form, part)
    du = _diff(idx, coef, u)
    dv = _diff(idx, coef, v)
    return float(np.dot(w * _signed_power(du, form.p - 1), dv))


def operator_action(form: GagliardoForm, u, part: str = "full") -> np.ndarray:
    """Vector ``g_i = H(u, phi_i)`` over all nodal basis functions."""
    u = _full(form, u)
    if form.is_linear:
        S = form.stiffness_inner if part == "inner" else form.stiffness
        return S @ u
    idx, coef, w = _entries(form, part)
    r = w * _signed_power(_diff(idx, coef, u), form.p - 1)
    out = np.zeros(form.n)
    for k in range(4):
        out += np.bincount(idx[:, k], weights=r * coef[:, k], minlength=form.n)
    return out


def energy_gradient(form: GagliardoForm, u, part: str = "full") -> np.ndarray:
    """Gradient of ``H(u, u)`` with respect to the nodal values."""
    return form.p * operator_action(form, u, part)


def energy_hessian(form: GagliardoForm, u, part: str = "full", floor: float = 0.0) -> np.ndarray:
    """Dense Hessian of ``H(u, u)``.

    ``floor`` bounds ``|du|`` from below inside ``|du|^(p-2)``, which keeps
    the matrix usable as a Newton preconditioner where differences vanish.
    """
    p = form.p
    if form.is_linear:
        S = form.stiffness_inner if part == "inner" else form.stiffness
        return 2.0 * S
    u = _full(form, u)
    idx, coef, w = _entries(form, part)
    du = np.abs(_diff(idx, coef, u))
    if floor > 0:
        du = np.maximum(du, floor)
    with np.errstate(divide="ignore"):
        hq = p * (p - 1) * w * du ** (p - 2)
    hq[~np.isfinite(hq)] = 0.0
    H = _accumulate_matrix(form.n, idx, coef, hq, np.zeros((form.n, form.n)))
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# L^p masses


def _gauss_points_for(p: float) -> int:
    if float(p).is_integer():
        return int(p) // 2 + 2
    return 16


def _region_cells(mesh: CollarMesh1D, region) -> np.ndarray:
    if isinstance(region, str):
        if region != "interior":
            raise ValueError(f"unknown region {region!r}")
        return np.flatnonzero(mesh.interior_cell)
    if isinstance(region, Strip):
        return region.cells
    return strip_cells(mesh, float(region)).cells


def lp_mass_parts(mesh: CollarMesh1D, u_full: np.ndarray, cells: np.ndarray, p: float, hessian: bool = False, floor: float = 0.0):
    """``int |u|^p`` over ``cells`` with gradient (and optionally Hessian).

    Each cell is split at a sign change of ``u`` so that ``|u|^p`` is a
    polynomial on every piece for integer ``p``; the Gauss rule is then
    exact.
    """
    n_pts = _gauss_points_for(p)
    xi, wx = gauss_legendre(n_pts)
    h = mesh.cell_lengths[cells]
    v0, v1 = u_full[cells], u_full[cells + 1]
    change = v0 * v1 < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        tr = np.where(change, v0 / (v0 - v1), 1.0)
    t = np.concatenate([tr[:, None] * xi[None, :], tr[:, None] + (1 - tr)[:, None] * xi[None, :]], axis=1)
    wt = np.concatenate([tr[:, None] * wx[None, :], (1 - tr)[:, None] * wx[None, :]], axis=1) * h[:, None]
    v = v0[:, None] * (1 - t) + v1[:, None] * t
    av = np.abs(v)
    value = float((wt * av**p).sum())
    g = p * wt * av ** (p - 1) * np.sign(v)
    n = mesh.n_nodes
    grad = np.bincount(cells, (g * (1 - t)).sum(1), minlength=n) + np.bincount(cells + 1, (g * t).sum(1), minlength=n)
    if not hessian:
        return value, grad
    if floor > 0:
        av = np.maximum(av, floor)
    with np.errstate(divide="ignore"):
        hw = p * (p - 1) * wt * av ** (p - 2)
    hw[~np.isfinite(hw)] = 0.0
    d00 = (hw * (1 - t) ** 2).sum(1)
    d01 = (hw * t * (1 - t)).sum(1)
    d11 = (hw * t**2).sum(1)
    H = np.zeros((n, n))
    np.add.at(H, (cells, cells), d00)
    np.add.at(H, (cells + 1, cells + 1), d11)
    np.add.at(H, (cells, cells + 1), d01)
    np.add.at(H, (cells + 1, cells), d01)
    return value, grad, H


def lp_mass(u: DofFunction, region: Union[str, float, Strip] = "interior", p: float = 2.0) -> float:
    """``int |u|^p`` over the interior (``"interior"``) or a boundary strip.

    ``region`` may be a :class:`Strip` or a strip width; the strip must be
    node-aligned.
    """
    cells = _region_cells(u.mesh, region)
    return lp_mass_parts(u.mesh, u.full(), cells, p)[0]


def mass_matrix(mesh: CollarMesh1D, cells: np.ndarray) -> np.ndarray:
    """P1 mass matrix restricted to ``cells`` (full node indexing)."""
    n = mesh.n_nodes
    h = mesh.cell_lengths[cells]
    M = np.zeros((n, n))
    np.add.at(M, (cells, cells), h / 3)
    np.add.at(M, (cells + 1, cells + 1), h / 3)
    np.add.at(M, (cells, cells + 1), h / 6)
    np.add.at(M, (cells + 1, cells), h / 6)
    return M


# ---------------------------------------------------------------------------
# nonlocal Neumann extension


def solve_neumann_scalar(values, weights, p: float, tol: float = 1e-12, maxiter: int = 200) -> float:
    """Root of ``sum_k w_k |v - u_k|^(p-2) (v - u_k) = 0``.

    The left side is strictly increasing in ``v``; safeguarded Newton inside
    the bracket ``[min u, max u]``.
    """
    u = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be nonnegative with positive total")
    lo, hi = float(u.min()), float(u.max())
    if hi - lo <= tol * max(1.0, abs(hi)):
        return 0.5 * (lo + hi)

    def F(v):
        d = v - u
        return float(np.dot(w, np.abs(d) ** (p - 1) * np.sign(d)))

    def dF(v):
        d = np.abs(v - u)
        with np.errstate(divide="ignore"):
            t = (p - 1) * d ** (p - 2)
        t[~np.isfinite(t)] = 0.0
        return float(np.dot(w, t))

    v = float(np.dot(w, u) / w.sum())
    scale = hi - lo
    for _ in range(maxiter):
        f = F(v)
        if f > 0:
            hi = v
        else:
            lo = v
        if hi - lo <= tol * scale:
            return 0.5 * (lo + hi)
        d = dF(v)
        step = v - f / d if d > 0 else None
        if step is None or not lo < step < hi:
            step = 0.5 * (lo + hi)
        if abs(step - v) <= tol * scale:
            return step
        v = step
    raise NeumannError("scalar Neumann equation did not converge")


def neumann_value_at(x: float, u: DofFunction, spec: KernelSpec, rtol: float = 1e-12) -> float:
    """Value ``v`` at the exterior point ``x`` with ``N_{s,p} u(x) = 0``.

    Only the interior part of ``u`` enters. The kernel is integrated with
    separation-adapted Gauss rules on the interior cells.
    """
    mesh = u.mesh
    if mesh.a <= x <= mesh.b:
        raise ValueError("x must lie outside [a, b]")
    cells = np.flatnonzero(mesh.interior_cell)
    lo = mesh.nodes[cells]
    h = mesh.cell_lengths[cells]
    dist = np.maximum(lo - x, x - (lo + h))
    orders = disjoint_order(dist, h, rtol, floor=4)
    uf = u.full()
    vals, wts = [], []
    for order in np.unique(orders):
        sel = orders == order
        xi, wx = gauss_legendre(int(order))
        y = lo[sel, None] + h[sel, None] * xi[None, :]
        vals.append(np.interp(y, mesh.nodes, uf).ravel())
        wts.append((h[sel, None] * wx[None, :] * np.abs(x - y) ** spec.exponent).ravel())
    return solve_neumann_scalar(np.concatenate(vals), np.concatenate(wts), spec.p)


def neumann_extend(form: GagliardoForm, u_interior, tol: float = 1e-12, maxiter: int = 100) -> np.ndarray:
    """Exterior coefficients minimising ``H`` for fixed interior values.

    This is the discrete form of ``N_{s,p} u = 0`` on the collar. For
    ``p = 2`` it is one linear solve; otherwise damped Newton on the strictly
    convex exterior energy.
    """
    mesh = form.mesh
    ui = np.asarray(u_interior, dtype=float)
    if ui.shape != (mesh.n_interior,) or not np.all(np.isfinite(ui)):
        raise ValueError("interior coefficients must be finite with one per interior node")
    if form.interaction != "full":
        raise ValueError("Neumann extension needs the full interaction form")
    I, E = mesh.interior_index, mesh.exterior_index
    if form.is_linear:
        S = form.stiffness
        return -cho_solve(cho_factor(S[np.ix_(E, E)]), S[np.ix_(E, I)] @ ui)

    if np.ptp(ui) == 0.0:
        return np.full(E.size, ui[0])
    u = np.zeros(mesh.n_nodes)
    u[I] = ui
    # start from the p = 2 style average: nearest boundary value
    u[E] = np.where(mesh.nodes[E] < mesh.a, ui[0], ui[-1])
    p = form.p
    spread = max(np.ptp(ui), 1e-300)
    e0 = energy(form, u)
    for it in range(maxiter):
        g = energy_gradient(form, u)[E]
        gnorm = np.max(np.abs(g))
        if gnorm == 0.0:
            return u[E]
        H = energy_hessian(form, u, floor=1e-8 * spread)[np.ix_(E, E)]
        H[np.diag_indices_from(H)] += 1e-14 * np.max(np.abs(np.diag(H)))
        step = -cho_solve(cho_factor(H), g)
        t = 1.0
        while True:
            trial = u.copy()
            trial[E] += t * step
            e1 = energy(form, trial)
            if e1 <= e0 + 1e-4 * t * np.dot(g, step) or t < 1e-12:
                break
            t *= 0.5
        u, de = trial, e0 - e1
        e0 = e1
        if np.max(np.abs(t * step)) <= tol * spread or (de <= 1e-15 * abs(e0) and gnorm <= 1e-10 * e0):
            return u[E]
    raise NeumannError(f"exterior Newton iteration did not converge in {maxiter} steps")


# ---------------------------------------------------------------------------
# identities and Picone


def identity_check(form: GagliardoForm, u, v) -> IdentityReport:
    """Residuals of the discrete divergence theorem and integration by parts.

    The operator action ``g_i = H(u, phi_i)`` is split into its interior
    rows (the fractional p-Laplacian tested against interior basis
    functions) and exterior rows (the nonlocal normal derivative). The
    divergence residual is ``|sum_interior g + sum_exterior g|``; the parts
    residual compares ``H(u, v)`` evaluated directly with the split sums.
    """
    mesh = form.mesh
    uf, vf = _full(form, u), _full(form, v)
    g = operator_action(form, uf)
    I, E = mesh.interior_index, mesh.exterior_index
    div_in, div_ex = g[I].sum(), g[E].sum()
    h_uv = pairing(form, uf, vf)
    parts_in, parts_ex = np.dot(g[I], vf[I]), np.dot(g[E], vf[E])
    div_scale = float(np.abs(g).sum())
    scale = float(max(np.abs(g * vf).sum(), abs(h_uv), 1e-300))
    return IdentityReport(
        divergence_residual=float(abs(div_in + div_ex)),
        parts_residual=float(abs(h_uv - parts_in - parts_ex)),
        scale=scale,
        divergence_scale=max(div_scale, 1e-300),
    )


def picone_defect(u, v, p: float):
    """Picone integrand ``L(u, v)(x, y)`` for pairs of point values.

    ``u`` and ``v`` are ``(value at x, value at y)`` pairs (scalars or
    arrays) with ``u >= 0`` and ``v > 0``.
    """
    ux, uy = (np.asarray(t, dtype=float) for t in u)
    vx, vy = (np.asarray(t, dtype=float) for t in v)
    if np.any(vx <= 0) or np.any(vy <= 0):
        raise ValueError("v must be strictly positive")
    if np.any(ux < 0) or np.any(uy < 0):
        raise ValueError("u must be nonnegative")
    dv = vx - vy
    out = np.abs(ux - uy) ** p - _signed_power(dv, p - 1) * (ux**p / vx ** (p - 1) - uy**p / vy ** (p - 1))
    return out if out.ndim else float(out)


def export_blocks(form: GagliardoForm, directory, eps: Optional[float] = None) -> list:
    """Write the ``p = 2`` blocks as dense text matrices (17 significant digits).

    Files: ``stiffness_ii``, ``stiffness_ie``, ``stiffness_ee``, ``mass_ii``
    and, with ``eps``, ``strip_mass_ii``.
    """
    if not form.is_linear:
        raise ValueError("matrix export is only available for p = 2")
    mesh = form.mesh
    I, E = mesh.interior_index, mesh.exterior_index
    S = form.stiffness
    blocks = {
        "stiffness_ii": S[np.ix_(I, I)],
        "stiffness_ie": S[np.ix_(I, E)],
        "stiffness_ee": S[np.ix_(E, E)],
        "mass_ii": mass_matrix(mesh, np.flatnonzero(mesh.interior_cell))[np.ix_(I, I)],
    }
    if eps is not None:
        blocks["strip_mass_ii"] = mass_matrix(mesh, strip_cells(mesh, eps).cells)[np.ix_(I, I)]
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, block in blocks.items():
        path = os.path.join(directory, f"{name}.txt")
        with open(path, "w") as fh:
            for row in block:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
        paths.append(path)
    return paths
