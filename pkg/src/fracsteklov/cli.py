"""Command line entry point.

Usage::

    fracsteklov COMMAND [CONFIG.yaml] [--s S] [--p P]

The config is a flat YAML mapping; unknown keys are rejected. Exit status is
0 on success, 1 when a solver or check does not converge, 2 on a
configuration error. ``FRACSTEKLOV_LOG`` sets the log level (default INFO).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np
import yaml

from . import _validation as V
from .eigen import diagnostics, solve_first_p, solve_linear
from .forms import assemble, identity_check, picone_defect
from .harness import (
    DEFAULT_S_GRID,
    MeshPolicy,
    bbm_limit_table,
    convergence_sweep,
    emit_report,
    strip_limit_table,
    trace_constant,
    zero_infimum_demo,
)
from .kernel import KernelSpec, QuadratureControl, bbm_constant
from .reference import ReferenceCache, steklov_linear, steklov_p_fem, steklov_p_shooting

__all__ = ["COMMANDS", "ConfigError", "RunConfig", "parse_config", "run", "main"]

logger = logging.getLogger("fracsteklov")

COMMANDS = ("constants", "verify", "solve", "sweep", "ref", "demo-zero", "trace")
LOG_ENV = "FRACSTEKLOV_LOG"

EXIT_OK, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration document."""


@dataclass
class RunConfig:
    command: str = "sweep"
    n: int = 1
    a: float = 0.0
    b: float = 1.0
    p: float = 2.0
    s: float = 0.95
    s_grid: List[float] = field(default_factory=lambda: list(DEFAULT_S_GRID))
    eps: Optional[float] = None
    k: int = 2
    k_grid: List[int] = field(default_factory=lambda: list(range(2, 21)))
    R: float = 2.0
    h: float = 1.0 / 64
    gamma: float = 2.0
    strip_ratio: float = 8.0
    min_strip_cells: int = 8
    refine: int = 1
    order: int = 8
    levels: int = 30
    rtol: float = 1e-10
    tol: float = 1e-10
    max_outer: int = 200
    output: str = "out"
    seed: int = 42
    threads: int = 1

    @property
    def policy(self) -> MeshPolicy:
        return MeshPolicy(
            gamma=self.gamma,
            R=self.R,
            strip_ratio=self.strip_ratio,
            min_strip_cells=self.min_strip_cells,
            refine=self.refine,
            h=self.h,
        )

    @property
    def ctrl(self) -> QuadratureControl:
        return QuadratureControl(order=self.order, levels=self.levels, rtol=self.rtol)


_FIELDS = {f.name for f in fields(RunConfig)}
_FLOAT_FIELDS = {"a", "b", "p", "s", "eps", "R", "h", "gamma", "strip_ratio", "rtol", "tol"}


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise ValueError(f"command must be one of {', '.join(COMMANDS)}, got {cfg.command!r}")
    cfg.n = V.check_int("n", cfg.n, lo=1)
    cfg.a, cfg.b = V.check_interval(cfg.a, cfg.b)
    cfg.p = V.check_p(cfg.p)
    cfg.s = V.check_s(cfg.s)
    cfg.s_grid = V.check_s_grid(cfg.s_grid)
    if cfg.eps is not None:
        cfg.eps = V.check_real("eps", cfg.eps, lo=0.0)
    cfg.k = V.check_int("k", cfg.k, lo=1)
    if not isinstance(cfg.k_grid, list) or not cfg.k_grid:
        raise ValueError("k_grid must be a nonempty list")
    cfg.k_grid = [V.check_int("k_grid", k, lo=1) for k in cfg.k_grid]
    if any(t <= u for u, t in zip(cfg.k_grid, cfg.k_grid[1:])):
        raise ValueError("k_grid must be strictly increasing")
    cfg.R = V.check_real("R", cfg.R, lo=0.0)
    cfg.h = V.check_real("h", cfg.h, lo=0.0, hi=(cfg.b - cfg.a) / 2, hi_open=False)
    cfg.gamma = V.check_real("gamma", cfg.gamma, lo=1.0, lo_open=False)
    cfg.strip_ratio = V.check_real("strip_ratio", cfg.strip_ratio, lo=0.0)
    cfg.min_strip_cells = V.check_int("min_strip_cells", cfg.min_strip_cells, lo=1)
    cfg.refine = V.check_int("refine", cfg.refine, lo=1)
    cfg.order = V.check_int("order", cfg.order, lo=2)
    cfg.levels = V.check_int("levels", cfg.levels, lo=0)
    if cfg.levels > 40:
        raise ValueError("levels must be at most 40")
    cfg.rtol = V.check_real("rtol", cfg.rtol, lo=0.0)
    cfg.tol = V.check_real("tol", cfg.tol, lo=0.0)
    cfg.max_outer = V.check_int("max_outer", cfg.max_outer, lo=1)
    cfg.seed = V.check_int("seed", cfg.seed, lo=0)
    cfg.threads = V.check_int("threads", cfg.threads, lo=1)
    if not isinstance(cfg.output, str) or not cfg.output:
        raise ValueError("output must be a nonempty path")
    if cfg.command == "sweep" and cfg.gamma < 2:
        raise ValueError("sweep needs gamma >= 2")
    return cfg


def parse_config(source: str, overrides: Optional[dict] = None) -> RunConfig:
    """Parse and validate a flat YAML mapping.

    Raises :class:`ConfigError` with the offending line or field.
    """
    try:
        root = yaml.compose(source, Loader=yaml.SafeLoader)
        data = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a key-value mapping")
    lines = {}
    if root is not None:
        for key_node, _ in root.value:
            lines[key_node.value] = key_node.start_mark.line + 1
    for key in data:
        if key not in _FIELDS:
            raise ConfigError(f"parse error at line {lines.get(key, '?')}: unknown key {key!r}")
    data.update(overrides or {})
    for key, value in data.items():
        # YAML 1.1 reads 1e-10 (no dot) as a string
        if key in _FLOAT_FIELDS and isinstance(value, str):
            try:
                data[key] = float(value)
            except ValueError:
                pass
    try:
        cfg = RunConfig(**data)
        return _validate(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"validation error: {exc}") from exc


# ---------------------------------------------------------------------------
# commands


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output, exist_ok=True)
    return os.path.join(cfg.output, name)


def _cmd_constants(cfg: RunConfig) -> int:
    print(repr(bbm_constant(cfg.n, cfg.p)))
    return EXIT_OK


def _cmd_verify(cfg: RunConfig) -> int:
    ok = True
    rng = np.random.default_rng(cfg.seed)
    mesh = MeshPolicy(gamma=cfg.gamma, R=cfg.R, h=max(cfg.h, 1.0 / 16)).build(None, cfg.a, cfg.b)
    form = assemble(mesh, KernelSpec(cfg.s, cfg.p), cfg.ctrl)
    tol = 1e-12 if cfg.p == 2 else 1e-8
    worst = 0.0
    for _ in range(10):
        u = rng.standard_normal(mesh.n_nodes)
        v = rng.standard_normal(mesh.n_nodes)
        rep = identity_check(form, u, v)
        worst = max(worst, rep.divergence_residual / rep.divergence_scale, rep.parts_residual / rep.scale)
    ok &= worst < tol
    print(f"identities: worst relative residual {worst:.3e} (tol {tol:g})")

    vals = rng.uniform(0.1, 2.0, size=(4, 1000))
    defect = picone_defect((vals[0], vals[1]), (vals[2], vals[3]), cfg.p)
    scale = np.abs(vals[0] - vals[1]) ** cfg.p + 1.0
    pic = float(np.min(defect / scale))
    ok &= pic >= -1e-14
    print(f"picone: min scaled defect {pic:.3e}")

    bbm = bbm_limit_table(lambda x: x, cfg.p, cfg.s_grid, cfg.a, cfg.b, du=lambda x: np.ones_like(x), ctrl=cfg.ctrl)
    strip = strip_limit_table(lambda x: x, cfg.p, [0.2, 0.1, 0.01], cfg.a, cfg.b)
    emit_report(bbm, _out(cfg, "bbm_limit"))
    emit_report(strip, _out(cfg, "strip_limit"))
    for r in bbm.rows:
        print(f"bbm s={r.param:g}: {r.value:.10f} vs {r.target:.10f}")
    for r in strip.rows:
        print(f"strip eps={r.param:g}: {r.value:.10f} vs {r.target:.10f}")
    print("verify:", "ok" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_NONCONVERGED


def _cmd_solve(cfg: RunConfig) -> int:
    eps = 1.0 - cfg.s if cfg.eps is None else cfg.eps
    L = cfg.b - cfg.a
    if eps >= L / 2:
        print(f"note: eps={eps:g} >= (b-a)/2, the strip is the whole domain")
    mesh = cfg.policy.build(eps, cfg.a, cfg.b)
    form = assemble(mesh, KernelSpec(cfg.s, cfg.p), cfg.ctrl)
    if cfg.p == 2:
        results = solve_linear(form, eps, k=min(cfg.k, 2))
        res = results[0]
        diag = diagnostics(res, mesh, results[1].eigenvalue if len(results) > 1 else None)
    else:
        res = solve_first_p(form, eps, tol=cfg.tol, max_outer=cfg.max_outer)
        diag = diagnostics(res, mesh)
    payload = res.to_dict()
    payload["diagnostics"] = diag.to_dict()
    with open(_out(cfg, "eigenpair.json"), "w") as fh:
        json.dump(payload, fh, indent=1)
    print(f"lambda = {res.eigenvalue:.17g}")
    print(f"residual = {res.residual:.3e}, sign constant = {diag.sign_constant}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _cmd_sweep(cfg: RunConfig) -> int:
    cache = ReferenceCache(_out(cfg, "reference.json"))
    rows = convergence_sweep(
        cfg.p, cfg.s_grid, cfg.policy, cfg.a, cfg.b, cfg.ctrl, threads=cfg.threads, cache=cache
    )
    emit_report(rows, _out(cfg, "sweep"), title=f"eps = 1 - s sweep, p = {cfg.p:g}")
    for r in rows:
        print(f"s={r.s:g} lambda={r.lam:.12f} ref={r.reference:.12f} rel_err={r.rel_err:.3e}")
    bad = [r for r in rows if r.error or not r.converged]
    return EXIT_NONCONVERGED if bad else EXIT_OK


def _cmd_ref(cfg: RunConfig) -> int:
    L = cfg.b - cfg.a
    out = {"p": cfg.p, "L": L}
    if cfg.p == 2:
        out["closed_form"] = steklov_linear(L, 2)
    out["shooting"] = steklov_p_shooting(cfg.p, L)
    out["local_fem"] = steklov_p_fem(cfg.p, L, min(1e-3, L / 8))
    out["discrepancy"] = abs(out["shooting"] - out["local_fem"])
    with open(_out(cfg, "steklov_reference.json"), "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
    for k in sorted(out):
        print(f"{k}: {out[k]}")
    return EXIT_OK


def _cmd_demo_zero(cfg: RunConfig) -> int:
    table = zero_infimum_demo(cfg.k_grid, cfg.s, cfg.p, cfg.a, cfg.b, cfg.ctrl)
    emit_report(table, _out(cfg, "zero_infimum"))
    for r in table.rows:
        print(f"k={int(r.param)} quotient={r.value:.6e}")
    return EXIT_OK


def _cmd_trace(cfg: RunConfig) -> int:
    if not cfg.s * cfg.p > 1:
        raise ConfigError(f"trace needs s p > 1, got s p = {cfg.s * cfg.p:g}")
    val = trace_constant(cfg.s, cfg.p, cfg.policy, cfg.a, cfg.b, cfg.ctrl, cfg.tol, cfg.max_outer)
    with open(_out(cfg, "trace.json"), "w") as fh:
        json.dump({"s": cfg.s, "p": cfg.p, "trace_constant": val}, fh, indent=1)
    print(f"trace constant = {val:.17g}")
    return EXIT_OK


_DISPATCH = {
    "constants": _cmd_constants,
    "verify": _cmd_verify,
    "solve": _cmd_solve,
    "sweep": _cmd_sweep,
    "ref": _cmd_ref,
    "demo-zero": _cmd_demo_zero,
    "trace": _cmd_trace,
}


def run(cfg: RunConfig) -> int:
    """Dispatch one command; returns the exit status."""
    start = time.perf_counter()
    try:
        status = _DISPATCH[cfg.command](cfg)
    except ConfigError as exc:
        logger.error("%s", exc)
        status = EXIT_CONFIG
    except RuntimeError as exc:
        logger.error("did not converge: %s", exc)
        status = EXIT_NONCONVERGED
    logger.info("%s finished in %.3f s (exit %d)", cfg.command, time.perf_counter() - start, status)
    return status


def _setup_logging():
    level = getattr(logging, os.environ.get(LOG_ENV, "INFO").upper(), logging.INFO)
    logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logger.setLevel(level if isinstance(level, int) else logging.INFO)


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="fracsteklov", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", nargs="?", help="YAML config file")
    parser.add_argument("--s", type=float, help="override s")
    parser.add_argument("--p", type=float, help="override p")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    _setup_logging()
    text = ""
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            logger.error("cannot read config: %s", exc)
            return EXIT_CONFIG
    overrides = {k: v for k, v in (("s", args.s), ("p", args.p)) if v is not None}
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    if "command" in (yaml.safe_load(text) or {}) and cfg.command != args.command:
        logger.error("config command %r does not match %r", cfg.command, args.command)
        return EXIT_CONFIG
    cfg.command = args.command
    if cfg.command == "sweep" and cfg.gamma < 2:
        logger.error("validation error: sweep needs gamma >= 2")
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
