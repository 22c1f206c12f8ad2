"""scikit-learn style wrapper around the eigen solvers."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_int, check_interval, check_p, check_real, check_s
from .eigen import diagnostics, solve_first_p, solve_linear
from .forms import assemble
from .harness import MeshPolicy
from .kernel import KernelSpec, QuadratureControl


class FractionalSteklovEigen(BaseEstimator):
    """First eigenpair of the strip-weighted nonlocal problem on ``(a, b)``.

    ``fit`` takes no data: it builds the mesh, assembles the form and solves.
    ``predict`` evaluates the fitted eigenfunction at points (exterior
    points use the Neumann-extended collar values, zero beyond the collar).

    Parameters
    ----------
    s, p : kernel order and integrability exponent.
    eps : strip width; ``None`` means ``1 - s``.
    """

    def __init__(
        self,
        s: float = 0.9,
        p: float = 2.0,
        eps: Optional[float] = None,
        a: float = 0.0,
        b: float = 1.0,
        R: float = 2.0,
        gamma: float = 2.0,
        refine: int = 1,
        rtol: float = 1e-10,
        tol: float = 1e-10,
        max_outer: int = 200,
    ):
        self.s = s
        self.p = p
        self.eps = eps
        self.a = a
        self.b = b
        self.R = R
        self.gamma = gamma
        self.refine = refine
        self.rtol = rtol
        self.tol = tol
        self.max_outer = max_outer

    def fit(self, X=None, y=None):
        s = check_s(self.s)
        p = check_p(self.p)
        a, b = check_interval(self.a, self.b)
        eps = 1.0 - s if self.eps is None else check_real("eps", self.eps, lo=0.0)
        policy = MeshPolicy(
            gamma=check_real("gamma", self.gamma, lo=1.0, lo_open=False),
            R=check_real("R", self.R, lo=0.0),
            refine=check_int("refine", self.refine, lo=1),
        )
        self.mesh_ = policy.build(eps, a, b)
        form = assemble(self.mesh_, KernelSpec(s, p), QuadratureControl(rtol=self.rtol))
        if p == 2:
            pair = solve_linear(form, eps, k=2)
            self.result_ = pair[0]
            self.diagnostics_ = diagnostics(pair[0], self.mesh_, pair[1].eigenvalue)
        else:
            self.result_ = solve_first_p(form, eps, tol=self.tol, max_outer=self.max_outer)
            self.diagnostics_ = diagnostics(self.result_, self.mesh_)
        self.eigenvalue_ = self.result_.eigenvalue
        self.eps_ = eps
        self.coef_ = self.result_.u.full()
        return self

    def predict(self, X):
        if not hasattr(self, "result_"):
            raise NotFittedError("call fit before predict")
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValueError("X must have a single column")
            X = X[:, 0]
        return self.result_.u(X)
