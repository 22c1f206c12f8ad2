"""First eigenpairs of the discrete nonlocal problem with a strip-weighted right side.

The weak form reads, for every test function ``phi``::

    K (1 - s) H(u, phi) + int_Omega |u|^(p-2) u phi = (lam / eps) int_{Omega_eps} |u|^(p-2) u phi

with ``K = bbm_constant(1, p)``. For ``p = 2`` this is a symmetric pencil; for
other ``p`` the first eigenpair comes from nonlinear inverse iteration.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, eigh, solve_triangular

from .forms import (
    GagliardoForm,
    energy,
    energy_gradient,
    energy_hessian,
    lp_mass_parts,
    mass_matrix,
    operator_action,
)
from .kernel import bbm_constant
from .mesh import CollarMesh1D, DofFunction, strip_cells

__all__ = [
    "DegenerateQuotientError",
    "EigenResult",
    "EigenDiagnostics",
    "rayleigh_quotient",
    "solve_linear",
    "solve_first_p",
    "diagnostics",
    "eigen_residual",
    "generalized_eigs",
    "convex_step",
]

logger = logging.getLogger(__name__)


class DegenerateQuotientError(ValueError):
    """The strip mass in the denominator vanishes."""


@dataclass
class EigenResult:
    """One discrete eigenpair.

    ``u`` holds interior and exterior coefficients; it is scaled so that
    ``(1/eps) int_{Omega_eps} |u|^p = 1``.
    """

    eigenvalue: float
    u: DofFunction
    eps: float
    p: float
    s: float
    residual: float = float("nan")
    iterations: int = 0
    normalized: bool = True
    converged: bool = True
    history: List[float] = field(default_factory=list)
    monotone: bool = True

    def to_dict(self) -> dict:
        return {
            "eigenvalue": self.eigenvalue,
            "s": self.s,
            "p": self.p,
            "eps": self.eps,
            "residual": self.residual,
            "iterations": self.iterations,
            "normalized": self.normalized,
            "converged": self.converged,
            "monotone": self.monotone,
            "history": list(self.history),
            "interior": self.u.interior.tolist(),
            "exterior": self.u.exterior.tolist(),
            "nodes": self.u.mesh.nodes.tolist(),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class EigenDiagnostics:
    sign_constant: bool
    nodal_measures: tuple
    sup_norm: float
    gap_to_next: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _scale(form: GagliardoForm) -> float:
    return bbm_constant(1, form.p) * (1.0 - form.spec.s)


def _interior_cells(mesh: CollarMesh1D) -> np.ndarray:
    return np.flatnonzero(mesh.interior_cell)


def _parts(form, uf, eps):
    mesh = form.mesh
    p = form.p
    strip = strip_cells(mesh, eps)
    seminorm = energy(form, uf)
    mass = lp_mass_parts(mesh, uf, _interior_cells(mesh), p)[0]
    smass = lp_mass_parts(mesh, uf, strip.cells, p)[0] / eps
    return seminorm, mass, smass


def rayleigh_quotient(form: GagliardoForm, u, eps: float) -> float:
    """``(K (1-s) H(u,u) + ||u||_p^p) / ((1/eps) ||u||_{p, Omega_eps}^p)``."""
    uf = u.full() if isinstance(u, DofFunction) else np.asarray(u, dtype=float)
    seminorm, mass, smass = _parts(form, uf, eps)
    if not smass >= 1e-300:
        raise DegenerateQuotientError("strip mass of u vanishes")
    return (_scale(form) * seminorm + mass) / smass


def _fix_sign(v: np.ndarray, interior: np.ndarray) -> np.ndarray:
    mean = interior.mean()
    if mean < 0 or (mean == 0 and interior[np.flatnonzero(interior)[:1]].sum() < 0):
        return -v
    return v


def generalized_eigs(A: np.ndarray, B: np.ndarray, k: int, rank_tol: float = 1e-12):
    """``k`` smallest finite eigenpairs of ``A x = lam B x`` (A SPD, B PSD).

    Cholesky congruence ``A = L L^T`` turns the pencil into the symmetric
    matrix ``C = L^-1 B L^-T``; finite eigenvalues are ``1/mu`` for the
    nonzero ``mu`` of ``C``. Returns eigenvalues ascending and ``B``-orthonormal
    vectors as columns.
    """
    try:
        L = cholesky(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("reduced form is not positive definite") from exc
    Y = solve_triangular(L, B, lower=True)
    C = solve_triangular(L, Y.T, lower=True)
    C = 0.5 * (C + C.T)
    mu, W = eigh(C)
    order = np.argsort(mu)[::-1]
    mu, W = mu[order], W[:, order]
    rank = int(np.sum(mu > rank_tol * max(mu[0], 1e-300)))
    if k > rank:
        raise ValueError(f"only {rank} finite eigenvalues exist, requested {k}")
    mu, W = mu[:k], W[:, :k]
    X = solve_triangular(L.T, W, lower=False) / np.sqrt(mu)
    return 1.0 / mu, X


def _linear_pencil(form: GagliardoForm, eps: float):
    mesh = form.mesh
    I, E = mesh.interior_index, mesh.exterior_index
    S = form.stiffness
    if form.interaction == "full" and E.size:
        See = cho_factor(S[np.ix_(E, E)])
        ext_map = -cho_solve(See, S[np.ix_(E, I)])
        S_red = S[np.ix_(I, I)] + S[np.ix_(I, E)] @ ext_map
    else:
        ext_map = np.zeros((E.size, I.size))
        S_red = S[np.ix_(I, I)]
    M = mass_matrix(mesh, _interior_cells(mesh))[np.ix_(I, I)]
    Ms = mass_matrix(mesh, strip_cells(mesh, eps).cells)[np.ix_(I, I)] / eps
    A = _scale(form) * 0.5 * (S_red + S_red.T) + M
    return A, Ms, ext_map


def solve_linear(form: GagliardoForm, eps: float, k: int = 1) -> List[EigenResult]:
    """The ``k`` smallest eigenpairs for ``p = 2`` via the dense pencil."""
    if form.p != 2:
        raise ValueError("solve_linear requires p = 2")
    if k < 1:
        raise ValueError("k must be at least 1")
    mesh = form.mesh
    A, B, ext_map = _linear_pencil(form, eps)
    lam, X = generalized_eigs(A, B, k)
    out = []
    for j in range(k):
        ui = X[:, j]
        ui = _fix_sign(ui, ui)
        u = DofFunction(mesh, ui, ext_map @ ui)
        res = EigenResult(float(lam[j]), u, float(eps), 2.0, form.spec.s)
        res.residual = eigen_residual(form, res)
        out.append(res)
    return out


# ---------------------------------------------------------------------------
# general p


def _newton_inner(form, v, b, free, tol, maxiter, floor_rel=1e-8):
    """Minimise ``(1/p) (K(1-s) H(v) + ||v||_p^p) - <b, v>`` over ``v[free]``."""
    mesh = form.mesh
    p = form.p
    c = _scale(form)
    cells = _interior_cells(mesh)

    def objective(x):
        return (c * energy(form, x) + lp_mass_parts(mesh, x, cells, p)[0]) / p - b @ x

    f = objective(v)
    for it in range(1, maxiter + 1):
        floor = floor_rel * max(np.max(np.abs(v)), 1e-300)
        _, gm, Hm = lp_mass_parts(mesh, v, cells, p, hessian=True, floor=floor)
        g = (c * energy_gradient(form, v) + gm) / p - b
        H = (c * energy_hessian(form, v, floor=floor) + Hm) / p
        gF = g[free]
        HF = H[np.ix_(free, free)]
        HF[np.diag_indices_from(HF)] += 1e-14 * np.max(np.diag(HF))
        step = -cho_solve(cho_factor(HF), gF)
        decrement = -gF @ step
        if decrement <= tol * max(abs(f), 1e-300):
            # inside the quadratic region: one last full step polishes the
            # solution below what the objective can resolve
            v = v.copy()
            v[free] += step
            return v, it
        t = 1.0
        for _ in range(60):
            trial = v.copy()
            trial[free] += t * step
            ft = objective(trial)
            if ft <= f + 1e-4 * t * (gF @ step):
                break
            t *= 0.5
        if ft > f:
            return v, it
        v, f = trial, ft
    logger.debug("inner Newton stopped after %d steps", maxiter)
    return v, maxiter


def convex_step(form: GagliardoForm, u, b, free=None, tol: float = 1e-12, maxiter: int = 50) -> np.ndarray:
    """Minimiser of ``(1/p) (K(1-s) H(v) + ||v||_p^p) - <b, v>`` over ``v[free]``.

    Newton starts from the best multiple of ``u``; entries outside ``free``
    keep their values from ``u``.
    """
    mesh = form.mesh
    p = form.p
    u = np.asarray(u, dtype=float)
    if free is None:
        free = np.arange(mesh.n_nodes)
    nv = _scale(form) * energy(form, u) + lp_mass_parts(mesh, u, _interior_cells(mesh), p)[0]
    bu = b @ u
    v = u * (bu / nv) ** (1.0 / (p - 1)) if bu > 0 and nv > 0 else u.copy()
    return _newton_inner(form, v, b, free, tol, maxiter)[0]


def solve_first_p(
    form: GagliardoForm,
    eps: float,
    init: Optional[DofFunction] = None,
    tol: float = 1e-10,
    max_outer: int = 200,
    inner_tol: float = 1e-12,
    inner_maxiter: int = 50,
    vec_tol: float = 1e-9,
) -> EigenResult:
    """First eigenpair by nonlinear inverse iteration.

    Each outer step solves ``A_p(v) = (1/eps) |u_k|^(p-2) u_k 1_{Omega_eps}``
    as a strictly convex minimisation (damped Newton with Armijo backtracking),
    then rescales ``v`` to unit strip mass. The Rayleigh quotient is
    nonincreasing along the iterates; ``history`` records it. Iteration
    stops once the quotient changes by less than ``tol`` (relative) and the
    iterate by less than ``vec_tol`` (relative sup norm), or once the
    quotient has stayed within ``tol`` for five consecutive steps.
    """
    mesh = form.mesh
    p = form.p
    if form.idx is None and not form.is_linear:
        raise ValueError("form was assembled without quadrature entries")
    strip = strip_cells(mesh, eps)
    if init is None:
        init = DofFunction.constant(mesh, 1.0)
    u = init.full().copy()
    free = mesh.interior_index if form.interaction == "inner" else np.arange(mesh.n_nodes)
    if form.interaction == "inner":
        u[mesh.exterior_index] = 0.0

    def normalize(x):
        sm = lp_mass_parts(mesh, x, strip.cells, p)[0] / eps
        if not sm >= 1e-300:
            raise DegenerateQuotientError("strip mass of the iterate vanishes")
        return x / sm ** (1.0 / p)

    u = normalize(u)
    q = rayleigh_quotient(form, u, eps)
    history = [q]
    monotone = True
    converged = False
    stable = it = 0
    for it in range(1, max_outer + 1):
        b = lp_mass_parts(mesh, u, strip.cells, p)[1] / (p * eps)
        v = normalize(convex_step(form, u, b, free, inner_tol, inner_maxiter))
        q_new = rayleigh_quotient(form, v, eps)
        if q_new > q * (1 + 1e-12):
            monotone = False
            logger.warning("quotient increased at outer step %d: %.17g -> %.17g", it, q, q_new)
        history.append(q_new)
        change = np.max(np.abs(v - u)) / np.max(np.abs(v))
        u = v
        stable = stable + 1 if abs(q - q_new) < tol * q else 0
        # a flat quotient over several steps also counts: for p < 2 the
        # floored Hessian limits how far the iterate itself settles
        done = stable > 0 and (change < vec_tol or stable >= 5)
        q = q_new
        if done:
            converged = True
            break
    ui = u[mesh.interior_index]
    u = _fix_sign(u, ui)
    res = EigenResult(
        eigenvalue=float(q),
        u=DofFunction.from_full(mesh, u),
        eps=float(eps),
        p=float(p),
        s=form.spec.s,
        iterations=it,
        converged=converged,
        history=history,
        monotone=monotone,
    )
    res.residual = eigen_residual(form, res)
    if not converged:
        logger.warning("inverse iteration hit max_outer=%d", max_outer)
    return res


# ---------------------------------------------------------------------------
# diagnostics


def eigen_residual(form: GagliardoForm, result: EigenResult) -> float:
    """Relative weak-form residual over interior basis functions.

    ``max_i |K(1-s) H(u, phi_i) + m(u, phi_i) - lam s(u, phi_i)| / scale`` where
    ``scale`` is the largest magnitude among the three terms.
    """
    mesh = form.mesh
    p = form.p
    uf = result.u.full()
    I = mesh.interior_index
    a = _scale(form) * operator_action(form, uf)[I]
    m = lp_mass_parts(mesh, uf, _interior_cells(mesh), p)[1][I] / p
    st = lp_mass_parts(mesh, uf, strip_cells(mesh, result.eps).cells, p)[1][I] / (p * result.eps)
    r = a + m - result.eigenvalue * st
    scale = max(np.max(np.abs(a)), np.max(np.abs(m)), result.eigenvalue * np.max(np.abs(st)), 1e-300)
    return float(np.max(np.abs(r)) / scale)


def _nodal_measures(x: np.ndarray, u: np.ndarray):
    pos = neg = 0.0
    for x0, x1, u0, u1 in zip(x[:-1], x[1:], u[:-1], u[1:]):
        h = x1 - x0
        if u0 >= 0 and u1 >= 0:
            pos += h if (u0 > 0 or u1 > 0) else 0.0
        elif u0 <= 0 and u1 <= 0:
            neg += h
        else:
            t = u0 / (u0 - u1)
            a, b = t * h, (1 - t) * h
            if u0 > 0:
                pos, neg = pos + a, neg + b
            else:
                pos, neg = pos + b, neg + a
    return pos, neg


def diagnostics(result: EigenResult, mesh: Optional[CollarMesh1D] = None, next_eigenvalue: Optional[float] = None) -> EigenDiagnostics:
    """Sign, nodal measures, sup norm and spectral gap of an eigenpair."""
    mesh = mesh or result.u.mesh
    ui = result.u.interior
    ui = ui if ui.mean() >= 0 else -ui
    scale = max(np.max(np.abs(ui)), 1e-300)
    sign_constant = bool(ui.min() >= -1e-10 * scale)
    gap = None if next_eigenvalue is None else float(next_eigenvalue - result.eigenvalue)
    return EigenDiagnostics(
        sign_constant=sign_constant,
        nodal_measures=_nodal_measures(mesh.interior_nodes, ui),
        sup_norm=float(np.max(np.abs(result.u.full()))),
        gap_to_next=gap,
    )
