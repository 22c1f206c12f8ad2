"""Acceptance criteria 1-13, each at its stated tolerance and runtime budget.

Every test records one ``[PASS]`` or ``[FAIL]`` line; the lines are printed
directly and again in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from fracsteklov.cli import main
from fracsteklov.forms import assemble, energy, identity_check, picone_defect
from fracsteklov.harness import (
    DEFAULT_S_GRID,
    MeshPolicy,
    bbm_limit_table,
    convergence_sweep,
    strip_limit_table,
    trace_constant,
    zero_infimum_demo,
)
from fracsteklov.kernel import KernelSpec, bbm_constant
from fracsteklov.mesh import build_collar_mesh, interpolate
from fracsteklov.reference import steklov_linear, steklov_p_fem, steklov_p_shooting

TANH_HALF = math.tanh(0.5)


def report(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


@pytest.fixture(scope="module")
def sweep_p2():
    with Clock() as c:
        rows = convergence_sweep(2.0, DEFAULT_S_GRID, MeshPolicy())
    with Clock() as c2:
        fine = convergence_sweep(2.0, DEFAULT_S_GRID[-2:], MeshPolicy(refine=2))
    return rows, fine, c.elapsed + c2.elapsed


@pytest.fixture(scope="module")
def sweep_p3():
    with Clock() as c:
        rows = convergence_sweep(3.0, DEFAULT_S_GRID, MeshPolicy())
    return rows, c.elapsed


def test_criterion_01_constant():
    k12, k22 = bbm_constant(1, 2), bbm_constant(2, 2)
    times = []
    for _ in range(20):
        t0 = time.perf_counter()
        bbm_constant(1, 2)
        times.append(time.perf_counter() - t0)
    ok = abs(k12 - 1) <= 1e-14 and abs(k22 - 2 / math.pi) <= 1e-12 and min(times) < 1e-3
    report(1, ok, f"K(1,2)-1={k12 - 1:.1e}, K(2,2)-2/pi={k22 - 2 / math.pi:.1e}, {min(times) * 1e6:.0f} us")


def test_criterion_02_quadrature_oracle():
    with Clock() as c:
        errs = []
        for s in (0.3, 0.5, 0.7, 0.9):
            mesh = build_collar_mesh(0, 1, 1, 1 / 8, gamma=2)
            val = energy(assemble(mesh, KernelSpec(s, 2.0)), interpolate(mesh, lambda x: x), "inner")
            exact = 2 / ((2 - 2 * s) * (3 - 2 * s))
            errs.append(abs(val - exact) / exact)
    ok = max(errs) <= 1e-6 and c.elapsed < 5
    report(2, ok, f"max rel err {max(errs):.1e}, {c.elapsed:.2f} s")


def test_criterion_03_bbm_limit():
    grid = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]
    with Clock() as c:
        t = bbm_limit_table(lambda x: x, 2.0, grid, du=lambda x: np.ones_like(x))
    err = max(abs(v - 1 / (3 - 2 * s)) for s, v in zip(grid, t.values))
    dev = t.deviations
    ok = err <= 1e-6 and bool(np.all(np.diff(dev) < 0)) and bool(np.all(t.values < 1)) and c.elapsed < 10
    report(3, ok, f"max err {err:.1e}, deviation at 0.99 {dev[-1]:.4f}, {c.elapsed:.2f} s")


def test_criterion_04_strip_limit():
    eps_grid = [0.2, 0.1, 0.01]
    with Clock() as c:
        t = strip_limit_table(lambda x: x, 2.0, eps_grid)
    err = max(abs(v - (1 - e + 2 * e * e / 3)) for e, v in zip(eps_grid, t.values))
    ok = err <= 1e-10 and c.elapsed < 1
    report(4, ok, f"max err {err:.1e}, {c.elapsed:.3f} s")


def test_criterion_05_identities():
    mesh = build_collar_mesh(0, 1, 1, 1 / 8, gamma=2)
    worst = {}
    with Clock() as c:
        for p, tol in ((2.0, 1e-12), (3.0, 1e-8)):
            form = assemble(mesh, KernelSpec(0.5, p))
            rng = np.random.default_rng(42)
            w = 0.0
            for _ in range(10):
                u, v = rng.standard_normal((2, mesh.n_nodes))
                rep = identity_check(form, u, v)
                w = max(w, rep.divergence_residual / rep.divergence_scale, rep.parts_residual / rep.scale)
            worst[p] = (w, tol)
    ok = all(w < tol for w, tol in worst.values()) and c.elapsed < 30
    report(5, ok, f"p=2 {worst[2.0][0]:.1e}, p=3 {worst[3.0][0]:.1e}, {c.elapsed:.2f} s")


def test_criterion_06_picone():
    rng = np.random.default_rng(42)
    worst, prop = 0.0, 0.0
    with Clock() as c:
        for p in (1.5, 2.0, 3.0):
            ux, uy, vx, vy = rng.uniform(0.01, 10.0, size=(4, 1000))
            d = picone_defect((ux, uy), (vx, vy), p)
            scale = np.abs(ux - uy) ** p + np.abs(vx - vy) ** (p - 1) * (ux**p / vx ** (p - 1) + uy**p / vy ** (p - 1))
            worst = min(worst, float(np.min(d / scale)))
            k = rng.uniform(0.1, 5.0, size=1000)
            dk = picone_defect((k * vx, k * vy), (vx, vy), p)
            prop = max(prop, float(np.max(np.abs(dk) / (np.abs(k * (vx - vy)) ** p + 1))))
    ok = worst >= -1e-14 and prop <= 1e-12 and c.elapsed < 1
    report(6, ok, f"min scaled defect {worst:.1e}, proportional max {prop:.1e}, {c.elapsed:.3f} s")


def test_criterion_07_steklov_references():
    with Clock() as c:
        lin = steklov_linear(1.0, 1)[0]
        fem2 = steklov_p_fem(2.0, h=1e-3)
        shoot3, fem3 = steklov_p_shooting(3.0), steklov_p_fem(3.0, h=1e-3)
    ok = (
        abs(lin - TANH_HALF) <= 1e-12
        and abs(fem2 - lin) <= 1e-5
        and abs(shoot3 - fem3) <= 1e-4
        and c.elapsed < 60
    )
    report(7, ok, f"fem(2) err {abs(fem2 - lin):.1e}, p=3 shoot-fem {abs(shoot3 - fem3):.1e}, {c.elapsed:.2f} s")


def test_criterion_08_p2_sweep(sweep_p2):
    rows, fine, elapsed = sweep_p2
    errs = [r.rel_err for r in rows]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    refined = fine[-1].rel_err < rows[-1].rel_err
    dofs = max(r.dofs for r in rows + fine)
    ok = decreasing and errs[-1] < 0.10 and refined and dofs <= 2000 and elapsed < 600
    report(
        8,
        ok,
        f"rel errs {', '.join(f'{e:.4f}' for e in errs)}; refined s=0.95 {fine[-1].rel_err:.5f}; "
        f"max dofs {dofs}, {elapsed:.1f} s",
    )


def test_criterion_09_p3_sweep(sweep_p3):
    rows, elapsed = sweep_p3
    ref = steklov_p_fem(3.0, h=1e-3)
    last = rows[-1]
    ok = (
        last.s == 0.95
        and last.error is None
        and abs(last.lam - ref) / ref < 0.10
        and all(r.monotone for r in rows)
        and elapsed < 900
    )
    report(9, ok, f"lambda(0.95,3)={last.lam:.6f} vs {ref:.6f} ({abs(last.lam - ref) / ref:.4f}), {elapsed:.1f} s")


def test_criterion_10_structure(sweep_p2, sweep_p3):
    rows = sweep_p2[0] + sweep_p2[1] + sweep_p3[0]
    sign = all(r.sign_constant for r in rows)
    norm = all(r.normalized for r in rows)
    gap = all(r.gap > 0 for r in sweep_p2[0] + sweep_p2[1])
    rng = all(0 < r.lam <= 0.5 for r in rows)
    ok = sign and norm and gap and rng
    report(10, ok, f"sign {sign}, normalized {norm}, p=2 gap {gap}, range {rng} over {len(rows)} rows")


def test_criterion_11_zero_infimum():
    with Clock() as c:
        t = zero_infimum_demo(range(2, 21), 0.5, 2.0)
    v = t.values
    ok = bool(np.all(np.diff(v) < 0)) and v[-1] < 0.1 * v[0] and c.elapsed < 10
    report(11, ok, f"ratio k=20/k=2 {v[-1] / v[0]:.4f}, {c.elapsed:.2f} s")


def test_criterion_12_trace():
    with Clock() as c:
        lam = trace_constant(0.95, 2.0)
        try:
            trace_constant(0.5, 2.0)
            rejected = False
        except ValueError:
            rejected = True
    rel = abs(lam - TANH_HALF) / TANH_HALF
    ok = rel < 0.10 and rejected and c.elapsed < 120
    report(12, ok, f"Lambda(0.95,2)={lam:.6f} ({rel:.4f}), sp<=1 rejected {rejected}, {c.elapsed:.2f} s")


def test_criterion_13_determinism(tmp_path):
    out = []
    for threads in (1, 4):
        cfg = tmp_path / f"c{threads}.yaml"
        cfg.write_text(f"command: sweep\np: 2\nthreads: {threads}\noutput: {tmp_path / str(threads)}\n")
        status = main(["sweep", str(cfg)])
        out.append((status, (tmp_path / str(threads) / "sweep.csv").read_bytes()))
    ok = out[0][0] == out[1][0] == 0 and out[0][1] == out[1][1]
    report(13, ok, f"threads 1 vs 4 byte-identical {out[0][1] == out[1][1]}")
