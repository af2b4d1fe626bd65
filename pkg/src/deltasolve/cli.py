"""Batch front end: ``deltasolve {solve,spectrum,kernel,coeffs,verify}``.

Every command reads one YAML configuration.  The schema is strict: unknown
keys are rejected and every default that was filled in is echoed into the
output header.  Floats are written as ``%.16e``.  Exit codes: 0 ok,
1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .closedform import RegularSolver, c_solution, closed_form_solution, propagate_solution, s_solution
from .core import (
    DEFAULT_KMAX,
    DEFAULT_M,
    GridError,
    InteractionSet,
    PolynomialPotential,
    Problem,
    SampledPotential,
    ZeroPotential,
    legendre_table,
)

__all__ = ["ConfigError", "RunConfig", "load_config", "cmd_solve", "cmd_spectrum", "cmd_kernel", "cmd_coeffs",
           "cmd_verify", "main"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("solve", "spectrum", "kernel", "coeffs", "verify")
BACKENDS = ("nsbf", "propagation", "oracle")
KINDS = ("c", "s", "e", "psi", "theta")
MAX_POLY_DEGREE = 20
FMT = "%.16e"


class ConfigError(ValueError):
    """Configuration rejected; the message names the field and source line."""


# ---------------------------------------------------------------------------
# YAML with source lines
# ---------------------------------------------------------------------------


def _node_lines(node, path=(), out=None):
    """Map key paths to 1-based source lines; reject duplicate keys."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        seen = set()
        for k, v in node.value:
            key = k.value
            if key in seen:
                raise ConfigError(f"line {k.start_mark.line + 1}: duplicate key {'.'.join(path + (key,))!r}")
            seen.add(key)
            _node_lines(v, path + (key,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _node_lines(v, path + (i,), out)
    return out


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, path, msg):
        line = None
        p = tuple(path)
        while line is None and p:
            line = self.lines.get(p)
            p = p[:-1]
        where = ".".join(str(s) for s in path) or "<root>"
        pre = f"line {line}: " if line else ""
        raise ConfigError(f"{pre}{where}: {msg}")

    def mapping(self, path, value, allowed, required=()):
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
        for k in value:
            if k not in allowed:
                self.fail(tuple(path) + (k,), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        for k in required:
            if k not in value:
                self.fail(path, f"missing required key {k!r}")
        return value

    def number(self, path, value, *, integer=False, lo=None, hi=None, lo_open=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, "expected a number")
        if integer and not (isinstance(value, int) or float(value).is_integer()):
            self.fail(path, "expected an integer")
        v = int(value) if integer else float(value)
        if not math.isfinite(v):
            self.fail(path, "must be finite")
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.fail(path, f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and v > hi:
            self.fail(path, f"must be <= {hi}")
        return v

    def boolean(self, path, value):
        if not isinstance(value, bool):
            self.fail(path, "expected true or false")
        return value

    def complex_(self, path, value):
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                self.fail(path, "complex values are [re, im]")
            return complex(self.number(tuple(path) + (0,), value[0]), self.number(tuple(path) + (1,), value[1]))
        return complex(self.number(path, value))

    def seq(self, path, value, min_len=0):
        if not isinstance(value, list):
            self.fail(path, "expected a list")
        if len(value) < min_len:
            self.fail(path, f"needs at least {min_len} entries")
        return value


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------


NUMERICS_DEFAULTS = {
    "M": DEFAULT_M,
    "K_max": DEFAULT_KMAX,
    "N_max": 120,
    "nsbf_M": 40,
    "deriv_M": 20,
    "oracle_substeps": 32,
    "seed": 0,
}

TASK_DEFAULTS = {
    "solve": {"kinds": ["c", "s"], "h": 0.0, "H": 0.0, "derivatives": True},
    "spectrum": {"count": None, "bc": {"beta0": 1.0, "beta1": 0.0, "gamma0": 1.0, "gamma1": 0.0}},
    "kernel": {"x": None, "n": 401},
    "coeffs": {"x": None, "n_max": None},
    "verify": {"rho_count": 5, "rho_max": 10.0},
}

TASK_KEYS = {
    "solve": {"rho", "rho_range", "x", "x_every", "kinds", "h", "H", "derivatives"},
    "spectrum": {"lambda_range", "count", "bc"},
    "kernel": {"x", "n"},
    "coeffs": {"x", "n_max"},
    "verify": {"rho_count", "rho_max"},
}

DEFAULT_VERIFY_CONFIG = {
    "problem": {
        "b": 1.0,
        "interactions": [{"x": 0.25, "alpha_re": 1.0, "alpha_im": 0.0}, {"x": 0.75, "alpha_re": 2.0, "alpha_im": 0.0}],
        "potential": {"kind": "zero"},
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with defaults filled in."""

    command: str
    problem: Problem
    numerics: dict
    task: dict
    output: dict
    resolved: dict

    @property
    def seed(self) -> int:
        return self.numerics["seed"]

    def digest(self) -> str:
        return hashlib.sha256(_canonical(self.resolved).encode()).hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _potential(ctx, spec, M, b, base_dir):
    path = ("problem", "potential")
    kind = ctx.mapping(path, spec, {"kind", "coeffs", "path"}, ("kind",))["kind"]
    if kind == "zero":
        ctx.mapping(path, spec, {"kind"})
        return ZeroPotential(), {"kind": "zero"}
    if kind == "polynomial":
        ctx.mapping(path, spec, {"kind", "coeffs"}, ("kind", "coeffs"))
        cs = ctx.seq(path + ("coeffs",), spec["coeffs"], 1)
        if len(cs) - 1 > MAX_POLY_DEGREE:
            ctx.fail(path + ("coeffs",), f"polynomial degree must be <= {MAX_POLY_DEGREE}")
        vals = [ctx.complex_(path + ("coeffs", i), c) for i, c in enumerate(cs)]
        res = [[v.real, v.imag] if v.imag else v.real for v in vals]
        return PolynomialPotential(vals), {"kind": "polynomial", "coeffs": res}
    if kind == "samples":
        ctx.mapping(path, spec, {"kind", "path"}, ("kind", "path"))
        p = Path(str(spec["path"]))
        if not p.is_absolute():
            p = base_dir / p
        try:
            arr = np.loadtxt(p, ndmin=2)
        except (OSError, ValueError) as exc:
            ctx.fail(path + ("path",), f"cannot read samples: {exc}")
        if arr.shape[1] not in (1, 2):
            ctx.fail(path + ("path",), "samples file needs one (re) or two (re im) columns")
        vals = arr[:, 0] + (1j * arr[:, 1] if arr.shape[1] == 2 else 0)
        if vals.size != M + 1:
            ctx.fail(path + ("path",), f"samples file has {vals.size} values, grid has {M + 1} nodes")
        digest = hashlib.sha256(np.ascontiguousarray(vals).tobytes()).hexdigest()
        return SampledPotential(vals, b), {"kind": "samples", "path": str(spec["path"]), "sha256": digest}
    ctx.fail(path + ("kind",), "must be one of zero, polynomial, samples")


def _task(ctx, command, task):
    path = ("task",)
    task = {} if task is None else task
    ctx.mapping(path, task, TASK_KEYS[command])
    d = json.loads(json.dumps(TASK_DEFAULTS[command]))
    out = {}
    if command == "solve":
        if ("rho" in task) == ("rho_range" in task):
            ctx.fail(path, "give exactly one of rho, rho_range")
        if "rho" in task:
            rhos = [ctx.complex_(path + ("rho", i), r) for i, r in enumerate(ctx.seq(path + ("rho",), task["rho"], 1))]
            out["rho"] = [[r.real, r.imag] for r in rhos]
        else:
            rr = ctx.mapping(path + ("rho_range",), task["rho_range"], {"start", "stop", "num", "im"},
                             ("start", "stop", "num"))
            p = path + ("rho_range",)
            out["rho_range"] = {
                "start": ctx.number(p + ("start",), rr["start"]),
                "stop": ctx.number(p + ("stop",), rr["stop"]),
                "num": ctx.number(p + ("num",), rr["num"], integer=True, lo=1),
                "im": ctx.number(p + ("im",), rr.get("im", 0.0)),
            }
        if "x" in task and "x_every" in task:
            ctx.fail(path, "give at most one of x, x_every")
        if "x" in task:
            out["x"] = [ctx.number(path + ("x", i), v, lo=0.0) for i, v in enumerate(ctx.seq(path + ("x",), task["x"], 1))]
        else:
            out["x_every"] = ctx.number(path + ("x_every",), task.get("x_every", 100), integer=True, lo=1)
        kinds = ctx.seq(path + ("kinds",), task.get("kinds", d["kinds"]), 1)
        for i, k in enumerate(kinds):
            if k not in KINDS:
                ctx.fail(path + ("kinds", i), f"must be one of {', '.join(KINDS)}")
        out["kinds"] = list(kinds)
        for key in ("h", "H"):
            v = ctx.complex_(path + (key,), task.get(key, d[key]))
            out[key] = [v.real, v.imag] if v.imag else v.real
        out["derivatives"] = ctx.boolean(path + ("derivatives",), task.get("derivatives", d["derivatives"]))
    elif command == "spectrum":
        if "lambda_range" not in task:
            ctx.fail(path, "missing required key 'lambda_range'")
        lr = ctx.seq(path + ("lambda_range",), task["lambda_range"], 2)
        if len(lr) != 2:
            ctx.fail(path + ("lambda_range",), "expected [lo, hi]")
        out["lambda_range"] = [ctx.number(path + ("lambda_range", i), v) for i, v in enumerate(lr)]
        c = task.get("count", d["count"])
        out["count"] = None if c is None else ctx.number(path + ("count",), c, integer=True, lo=0)
        bc = ctx.mapping(path + ("bc",), task.get("bc", d["bc"]), {"beta0", "beta1", "gamma0", "gamma1"})
        full = dict(d["bc"])
        for k, v in bc.items():
            full[k] = ctx.number(path + ("bc", k), v)
        if full["beta0"] == 0 and full["beta1"] == 0:
            ctx.fail(path + ("bc",), "beta0 and beta1 cannot both vanish")
        if full["gamma0"] == 0 and full["gamma1"] == 0:
            ctx.fail(path + ("bc",), "gamma0 and gamma1 cannot both vanish")
        out["bc"] = full
    elif command in ("kernel", "coeffs"):
        xs = task.get("x", d["x"])
        if xs is None:
            ctx.fail(path, "missing required key 'x'")
        out["x"] = [ctx.number(path + ("x", i), v, lo=0.0, lo_open=True) for i, v in enumerate(ctx.seq(path + ("x",), xs, 1))]
        if command == "kernel":
            out["n"] = ctx.number(path + ("n",), task.get("n", d["n"]), integer=True, lo=2)
        else:
            n = task.get("n_max", d["n_max"])
            out["n_max"] = None if n is None else ctx.number(path + ("n_max",), n, integer=True, lo=0)
    else:
        out["rho_count"] = ctx.number(path + ("rho_count",), task.get("rho_count", d["rho_count"]), integer=True, lo=1)
        out["rho_max"] = ctx.number(path + ("rho_max",), task.get("rho_max", d["rho_max"]), lo=0.0, lo_open=True)
    return out


def parse_config(data, command: str, *, lines=None, base_dir: Path = Path("."), seed: int | None = None) -> RunConfig:
    """Validate a loaded mapping for ``command``."""
    ctx = _Ctx(lines or {})
    data = {} if data is None else data
    ctx.mapping((), data, {"problem", "numerics", "task", "output"}, ("problem",))
    nm = ctx.mapping(("numerics",), data.get("numerics") or {}, set(NUMERICS_DEFAULTS))
    numerics = {}
    limits = {"M": 16, "K_max": 4, "N_max": 4, "nsbf_M": 0, "deriv_M": 0, "oracle_substeps": 4, "seed": 0}
    for k, default in NUMERICS_DEFAULTS.items():
        numerics[k] = ctx.number(("numerics", k), nm.get(k, default), integer=True, lo=limits[k])
    if seed is not None:
        numerics["seed"] = int(seed)
    if 2 * numerics["nsbf_M"] + 1 > numerics["N_max"]:
        ctx.fail(("numerics", "nsbf_M"), "2*nsbf_M + 1 must not exceed N_max")

    pb = ctx.mapping(("problem",), data["problem"], {"b", "interactions", "potential"}, ("b",))
    b = ctx.number(("problem", "b"), pb["b"], lo=0.0, lo_open=True)
    pts, als, res_int = [], [], []
    for i, it in enumerate(ctx.seq(("problem", "interactions"), pb.get("interactions") or [])):
        p = ("problem", "interactions", i)
        ctx.mapping(p, it, {"x", "alpha_re", "alpha_im"}, ("x", "alpha_re"))
        x = ctx.number(p + ("x",), it["x"])
        a = complex(ctx.number(p + ("alpha_re",), it["alpha_re"]), ctx.number(p + ("alpha_im",), it.get("alpha_im", 0.0)))
        if not 0 < x < b:
            ctx.fail(p + ("x",), f"interaction point must lie in (0, {b})")
        if a == 0:
            ctx.fail(p, "interaction strength must be non-zero")
        if pts and not pts[-1] < x:
            ctx.fail(p + ("x",), "interaction points must be strictly increasing")
        pts.append(x)
        als.append(a)
        res_int.append({"x": x, "alpha_re": a.real, "alpha_im": a.imag})
    try:
        iset = InteractionSet(tuple(pts), tuple(als), b)
    except ValueError as exc:
        ctx.fail(("problem", "interactions"), str(exc))
    pot, res_pot = _potential(ctx, pb.get("potential") or {"kind": "zero"}, numerics["M"], b, base_dir)
    problem = Problem(iset, pot, numerics["M"])
    try:
        problem.grid
    except GridError as exc:
        ctx.fail(("numerics", "M"), str(exc))

    task = _task(ctx, command, data.get("task"))
    om = ctx.mapping(("output",), data.get("output") or {}, {"path", "format"})
    fmt = om.get("format", "json" if command == "verify" else "csv")
    if fmt != ("json" if command == "verify" else "csv"):
        ctx.fail(("output", "format"), f"command {command} writes {'json' if command == 'verify' else 'csv'}")
    output = {"path": om.get("path"), "format": fmt}
    resolved = {
        "command": command,
        "problem": {"b": b, "interactions": res_int, "potential": res_pot},
        "numerics": numerics,
        "task": task,
    }
    return RunConfig(command, problem, numerics, task, output, resolved)


def load_config(path, command: str, seed: int | None = None) -> RunConfig:
    """Read and validate a YAML configuration; raises :class:`ConfigError`."""
    if path is None:
        if command != "verify":
            raise ConfigError(f"command {command} needs --config")
        return parse_config(json.loads(json.dumps(DEFAULT_VERIFY_CONFIG)), command, seed=seed)
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    lines = _node_lines(node) if node is not None else {}
    return parse_config(data, command, lines=lines, base_dir=p.parent, seed=seed)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _f(v) -> str:
    return FMT % float(v)


def _header(cfg: RunConfig, backend: str, extra=()) -> str:
    rows = [
        f"# deltasolve {__version__} numpy {np.__version__} scipy {scipy.__version__}",
        f"# command {cfg.command} backend {backend} seed {cfg.seed}",
        f"# config_sha256 {cfg.digest()}",
        f"# config {_canonical(cfg.resolved)}",
    ]
    rows += [f"# {e}" for e in extra]
    return "\n".join(rows) + "\n"


def _json_dump(obj, indent=0) -> str:
    """Deterministic JSON with ``%.16e`` floats."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_dump(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _json_dump(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return '"nan"'
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        return FMT % v
    return json.dumps(str(obj))


# ---------------------------------------------------------------------------
# solution evaluation per backend
# ---------------------------------------------------------------------------


def _install_solver(cfg: RunConfig):
    p = cfg.problem
    cache = p.__dict__.setdefault("_solvers", {})
    if "spps" not in cache:
        cache["spps"] = RegularSolver(p, "spps", K_max=cfg.numerics["K_max"])
    return p


def _rho_list(task):
    if "rho" in task:
        return [complex(r, i) for r, i in task["rho"]]
    rr = task["rho_range"]
    return [complex(t, rr["im"]) for t in np.linspace(rr["start"], rr["stop"], rr["num"])]


def _x_indices(cfg: RunConfig):
    g = cfg.problem.grid
    if "x" in cfg.task:
        out = []
        for i, x in enumerate(cfg.task["x"]):
            if x > g.b:
                raise ConfigError(f"task.x.{i}: x={x} outside [0, {g.b}]")
            try:
                out.append(g.index_of(x))
            except GridError as exc:
                raise ConfigError(f"task.x.{i}: {exc}") from None
        return out
    idx = set(range(0, g.M + 1, cfg.task["x_every"])) | {g.M} | set(g.nodes)
    return sorted(idx)


def _cplx(v):
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


class _Evaluator:
    """Values and left derivatives of ``c, s, e, psi, theta`` at grid nodes."""

    def __init__(self, cfg: RunConfig, backend: str):
        self.cfg = cfg
        self.backend = backend
        self.problem = _install_solver(cfg)
        self.h = _cplx(cfg.task.get("h", 0.0))
        self.H = _cplx(cfg.task.get("H", 0.0))
        self._coeffs = {}
        self._dcoeffs = {}
        self._refl = None

    # reflected problem for psi, theta
    def reflected(self):
        if self._refl is None:
            self._refl = self.problem.reflected()
        return self._refl

    def _pair_direct(self, problem, rho, h):
        """Full-grid ``(c^h, s)`` solutions by propagation or RK4 shooting."""
        if self.backend == "oracle":
            from .oracle import OracleConfig, rk_shoot

            conf = OracleConfig(substeps=self.cfg.numerics["oracle_substeps"])
            c = rk_shoot(problem.potential, problem.iset, rho * rho, 1.0, h, grid=problem.grid, config=conf)
            s = rk_shoot(problem.potential, problem.iset, rho * rho, 0.0, 1.0, grid=problem.grid, config=conf)
            return c, s
        return (c_solution(problem, problem.iset, rho, h, method="propagation"),
                s_solution(problem, problem.iset, rho, method="propagation"))

    def _coeff_table(self, problem, key):
        if key not in self._coeffs:
            from .nsbf import fl_coefficients

            self._coeffs[key] = fl_coefficients(problem, N_max=self.cfg.numerics["N_max"], seed=self.cfg.seed)
        return self._coeffs[key]

    def _nsbf_derivs(self, problem, key, x, side, h, rho):
        from .nsbf import derivative_nsbf_coeffs, derivative_nsbf_eval

        if x == 0:
            return complex(h), 1.0 + 0j
        k = (key, x, side, complex(h))
        if k not in self._dcoeffs:
            co = self._coeff_table(problem, key)
            self._dcoeffs[k] = derivative_nsbf_coeffs(co, None, problem, h, x, self.cfg.numerics["deriv_M"], side=side)
        dc, ds = derivative_nsbf_eval(self._dcoeffs[k], np.array([rho]))
        return complex(dc[0]), complex(ds[0])

    def rows(self, rho, idx, kinds, derivs):
        """Yield ``(i, kind, side, value, dvalue)`` for the requested nodes."""
        p = self.problem
        g = p.grid
        nodes = set(g.nodes)
        need_left = any(k in kinds for k in ("c", "s", "e"))
        need_right = any(k in kinds for k in ("psi", "theta"))
        out = {}
        if self.backend == "nsbf":
            from .nsbf import nsbf_eval

            M = self.cfg.numerics["nsbf_M"]
            if need_left:
                co = self._coeff_table(p, "orig")
                for i in idx:
                    x = float(g.x[i])
                    c, s = nsbf_eval(co, np.array([rho]), x, M, h=self.h)
                    c, s = complex(c[0]), complex(s[0])
                    dc = ds = complex("nan")
                    if derivs:
                        dc, ds = self._nsbf_derivs(p, "orig", x, "left", self.h, rho)
                    out[(i, "c")] = (c, dc)
                    out[(i, "s")] = (s, ds)
                    out[(i, "e")] = (c + 1j * rho * s, dc + 1j * rho * ds)
            if need_right:
                R = self.reflected()
                co = self._coeff_table(R, "refl")
                for i in idx:
                    j = g.M - i
                    xr = float(R.grid.x[j])
                    c, s = nsbf_eval(co, np.array([rho]), xr, M, h=self.H)
                    dc = ds = complex("nan")
                    if derivs:
                        # left derivative of psi at x is minus the right derivative of c* at b - x
                        dc, ds = self._nsbf_derivs(R, "refl", xr, "right", self.H, rho)
                    out[(i, "psi")] = (complex(c[0]), -dc)
                    out[(i, "theta")] = (complex(s[0]), -ds)
        else:
            if need_left:
                c, s = self._pair_direct(p, rho, self.h)
                cl, sl = c.du_left_values(), s.du_left_values()
                for i in idx:
                    out[(i, "c")] = (c.u[i], cl[i])
                    out[(i, "s")] = (s.u[i], sl[i])
                    out[(i, "e")] = (c.u[i] + 1j * rho * s.u[i], cl[i] + 1j * rho * sl[i])
            if need_right:
                R = self.reflected()
                c, s = self._pair_direct(R, rho, self.H)
                for i in idx:
                    j = g.M - i
                    out[(i, "psi")] = (c.u[j], -c.du[j])
                    out[(i, "theta")] = (s.u[j], -s.du[j])
        for i in idx:
            side = "left" if i in nodes else "both"
            for k in kinds:
                v, dv = out[(i, k)]
                yield i, k, side, complex(v), complex(dv) if derivs else complex("nan")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_solve(cfg: RunConfig, backend: str = "propagation") -> str:
    """CSV of solution values and left derivatives at the requested nodes."""
    ev = _Evaluator(cfg, backend)
    idx = _x_indices(cfg)
    buf = io.StringIO()
    buf.write(_header(cfg, backend, ["derivatives are left limits at interaction nodes (side=left)"]))
    buf.write("rho_re,rho_im,x,kind,side,value_re,value_im,dvalue_re,dvalue_im\n")
    x = cfg.problem.grid.x
    for rho in _rho_list(cfg.task):
        for i, k, side, v, dv in ev.rows(rho, idx, cfg.task["kinds"], cfg.task["derivatives"]):
            buf.write(",".join([_f(rho.real), _f(rho.imag), _f(x[i]), k, side,
                                _f(v.real), _f(v.imag), _f(dv.real), _f(dv.imag)]) + "\n")
    return buf.getvalue()


def cmd_spectrum(cfg: RunConfig, backend: str = "propagation") -> str:
    """CSV of the real eigenvalues in ``task.lambda_range``."""
    from .spectral import BoundaryConditions, CharacteristicFunction, find_eigenvalues

    import warnings

    p = _install_solver(cfg)
    bc = BoundaryConditions(**cfg.task["bc"])
    n = cfg.numerics
    lo, hi = cfg.task["lambda_range"]
    char = CharacteristicFunction(p, bc, backend, nsbf_M=n["nsbf_M"], deriv_M=n["deriv_M"], N_max=n["N_max"],
                                  seed=cfg.seed, oracle_substeps=n["oracle_substeps"])
    notes = []
    if hi >= lo:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sp = find_eigenvalues(p, (lo, hi), cfg.task["count"], bc, backend, char=char)
        pairs, notes = sp.eigenpairs, sp.warnings
    else:
        pairs = []
    buf = io.StringIO()
    buf.write(_header(cfg, backend, [f"note {m}" for m in notes]))
    buf.write("index,lambda,rho_re,rho_im,residual\n")
    for k, e in enumerate(pairs, 1):
        r = complex(e.rho)
        buf.write(",".join([str(k), _f(e.lam), _f(r.real), _f(r.imag), _f(e.residual)]) + "\n")
    return buf.getvalue()


def _kernel_series(coeffs, x, t):
    """``K(x, t) = sum a_n(x) P_n(t/x) / x`` truncated at the table length."""
    a = coeffs.at(x)
    P = legendre_table(a.size - 1, np.asarray(t) / x)
    return (a @ P) / x


def cmd_kernel(cfg: RunConfig, backend: str = "propagation") -> str:
    """CSV of ``K(x, t)`` on ``n`` equispaced points of ``[-x, x]``.

    With ``q = 0`` the exact piecewise-polynomial kernel is sampled;
    otherwise the Fourier-Legendre series of the coefficient table.
    """
    from .kernels import exact_kernel_q0, kernel_samples

    p = _install_solver(cfg)
    exact = p.potential.is_zero
    method = "exact piecewise polynomial" if exact else f"Fourier-Legendre series, N_max={cfg.numerics['N_max']}"
    coeffs = None
    if not exact:
        from .nsbf import fl_coefficients

        coeffs = fl_coefficients(p, N_max=cfg.numerics["N_max"], seed=cfg.seed)
    buf = io.StringIO()
    buf.write(_header(cfg, backend, [f"kernel {method}; right limits at breakpoints"]))
    buf.write("x,t,K_re,K_im\n")
    for i, x in enumerate(cfg.task["x"]):
        if x > p.b:
            raise ConfigError(f"task.x.{i}: x={x} outside (0, {p.b}]")
        if exact:
            t, K = kernel_samples(exact_kernel_q0(p.iset, x), cfg.task["n"])
        else:
            try:
                xi = p.grid.x[p.grid.index_of(x)]
            except GridError as exc:
                raise ConfigError(f"task.x.{i}: {exc}") from None
            t = np.linspace(-xi, xi, cfg.task["n"])
            K = _kernel_series(coeffs, xi, t)
        for tt, kk in zip(t, K):
            buf.write(",".join([_f(x), _f(tt), _f(kk.real), _f(kk.imag)]) + "\n")
    return buf.getvalue()


def cmd_coeffs(cfg: RunConfig, backend: str = "nsbf") -> str:
    """CSV of the Fourier-Legendre coefficients ``a_n(x)``.

    ``nsbf`` uses the recursive procedure, ``propagation`` the direct
    formula, ``oracle`` brute-force projection of the exact kernel (``q = 0``).
    """
    from .nsbf import fl_coefficients

    p = _install_solver(cfg)
    N = cfg.task["n_max"] if cfg.task["n_max"] is not None else cfg.numerics["N_max"]
    g = p.grid
    idx = []
    for i, x in enumerate(cfg.task["x"]):
        try:
            idx.append(g.index_of(x))
        except GridError as exc:
            raise ConfigError(f"task.x.{i}: {exc}") from None
    cols = {}
    if backend == "oracle":
        if not p.potential.is_zero:
            raise ConfigError("problem.potential: backend oracle projects the exact kernel and needs kind zero")
        from .kernels import exact_kernel_q0
        from .oracle import project_fl_bruteforce

        for i in idx:
            cols[i] = project_fl_bruteforce(exact_kernel_q0(p.iset, float(g.x[i])), float(g.x[i]), N)
        method = "brute-force projection"
    else:
        method = "recursive" if backend == "nsbf" else "direct"
        if method == "direct" and N > 30:
            raise ConfigError("task.n_max: the direct formula loses all accuracy beyond n = 30")
        co = fl_coefficients(p, N_max=max(N, 4), method=method, seed=cfg.seed)
        for i in idx:
            cols[i] = co.a[: N + 1, i]
    buf = io.StringIO()
    buf.write(_header(cfg, backend, [f"coefficients {method}"]))
    buf.write("x,n,a_re,a_im\n")
    for i in idx:
        for n_, a in enumerate(cols[i][: N + 1]):
            buf.write(",".join([_f(g.x[i]), str(n_), _f(a.real), _f(a.imag)]) + "\n")
    return buf.getvalue()


def _check(dev, tol, applicable=True, detail=None):
    if not applicable:
        return {"status": "n/a", "max_deviation": None, "tol": tol, **({"detail": detail} if detail else {})}
    ok = bool(np.isfinite(dev) and dev <= tol)
    out = {"status": "pass" if ok else "fail", "max_deviation": float(dev), "tol": tol}
    if detail:
        out["detail"] = detail
    return out


def verify_report(cfg: RunConfig, backend: str = "propagation") -> dict:
    """Run the identity suite; returns the report mapping."""
    from .kernels import exact_kernel_q0, goursat_check
    from .nsbf import PINNED_VARIANT, fl_coefficients, nsbf_error_bound, nsbf_eval, pin_sigma_variant
    from .spps import nonvanishing_solution

    p = _install_solver(cfg)
    g = p.grid
    iset = p.iset
    rng = np.random.default_rng(cfg.seed)
    nr = cfg.task["rho_count"]
    rmax = cfg.task["rho_max"]
    rhos = list(rng.uniform(0.1, rmax, nr)) + list(rng.uniform(0.1, rmax, max(1, nr // 2)) + 1j * rng.uniform(-1, 1, max(1, nr // 2)))
    checks = {}
    delta = iset.N > 0

    # Goursat conditions of the exact kernel
    if p.potential.is_zero:
        xs = np.linspace(0, g.b, 41)[1:]
        dev = max(goursat_check(exact_kernel_q0(iset, x), None, iset).max_deviation for x in xs)
        checks["goursat"] = _check(dev, 1e-12)
    else:
        checks["goursat"] = _check(None, 1e-12, False, "exact kernel needs q = 0")

    # sum over index sequences vs propagation, Wronskian, jumps
    dev_sum = dev_w = dev_j = 0.0
    for rho in rhos:
        c = c_solution(p, iset, rho, method="propagation")
        s = s_solution(p, iset, rho, method="propagation")
        w = c.u * s.du - c.du * s.u
        dev_w = max(dev_w, float(np.max(np.abs(w - 1))))
        for sol in (c, s):
            for i, a in zip(g.nodes, iset.strengths):
                dev_j = max(dev_j, abs(sol.du[i] - sol.du_left[i] - a * sol.u[i]) / max(1.0, abs(sol.u[i])))
        if delta:
            u0, u1 = complex(rng.normal(), rng.normal()), complex(rng.normal(), rng.normal())
            A = closed_form_solution(p, iset, rho, u0, u1)
            B = propagate_solution(p, iset, rho, u0, u1)
            dev_sum = max(dev_sum, float(np.max(np.abs(A.u - B.u))))
    checks["wronskian"] = _check(dev_w, 1e-8)
    checks["jump_conditions"] = _check(dev_j, 1e-8, delta)
    checks["sum_vs_propagation"] = _check(dev_sum, 1e-9, delta)

    # coefficient relations at rho = 0
    co = fl_coefficients(p, N_max=cfg.numerics["N_max"], seed=cfg.seed)
    e0 = c_solution(p, iset, 0.0, co.h).u
    c0 = c_solution(p, iset, 0.0).u
    s0 = s_solution(p, iset, 0.0).u
    x = g.x
    a = co.a
    dev = float(np.max(np.abs(a[0] - 0.5 * (e0 - 1))))
    dev = max(dev, float(np.max(np.abs(2 * a[0] - (c0 + co.h * s0 - 1)))))
    dev = max(dev, float(np.max(np.abs(2 * a[1, 1:] - 3 * (s0[1:] / x[1:] - 1)))))
    checks["coefficient_relations"] = _check(dev, 1e-8)

    # recursive vs direct coefficients
    nv = nonvanishing_solution(p.q, iset, cfg.seed, grid=g)
    best, devs = pin_sigma_variant(nv, 20, tol=np.inf)
    ok = best == PINNED_VARIANT
    checks["direct_vs_recursive"] = _check(devs[PINNED_VARIANT], 1e-7,
                                           detail=f"closest variant {best}" + ("" if ok else " differs from the pinned one"))
    if not ok:
        checks["direct_vs_recursive"]["status"] = "fail"
    checks["direct_vs_recursive"]["variants"] = {k: float(v) for k, v in devs.items()}

    # NSBF error bound at x = b
    rr = np.linspace(0.0, 20.0, 41)
    ref = np.empty(rr.size, dtype=complex)
    for k, r in enumerate(rr):
        ref[k] = c_solution(p, iset, r, co.h, method="propagation").u[-1]
    worst = -np.inf
    for M in (5, 10, 20):
        if 2 * M + 1 >= co.N_max:
            continue
        cM, _ = nsbf_eval(co, rr, g.b, M)
        bound = nsbf_error_bound(co, g.b, M)
        worst = max(worst, float(np.max(np.abs(cM - ref)) - bound))
    checks["nsbf_bound"] = _check(max(worst, 0.0), 0.0, detail="max excess of observed error over the bound")

    passed = all(v["status"] != "fail" for v in checks.values())
    return {
        "command": "verify",
        "backend": backend,
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "version": __version__,
        "checks": checks,
        "passed": passed,
    }


def cmd_verify(cfg: RunConfig, backend: str = "propagation") -> tuple[str, bool]:
    """Deterministic JSON report and the overall pass flag."""
    rep = verify_report(cfg, backend)
    return _json_dump(rep) + "\n", rep["passed"]


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(prog="deltasolve", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="YAML configuration file")
    ap.add_argument("--out", help="output file (default: output.path or stdout)")
    ap.add_argument("--backend", choices=BACKENDS, default=None,
                    help="nsbf, propagation or oracle (default: propagation; nsbf for coeffs)")
    ap.add_argument("--seed", type=int, default=None, help="override numerics.seed")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    backend = args.backend or ("nsbf" if args.command == "coeffs" else "propagation")
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        cfg = load_config(args.config, args.command, args.seed)
        if args.command == "verify":
            text, ok = cmd_verify(cfg, backend)
            code = EXIT_OK if ok else EXIT_FAIL
        else:
            text = globals()[f"cmd_{args.command}"](cfg, backend)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output["path"]
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"wall time {time.perf_counter() - t0:.3f} s (backend {backend})", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
