"""Run configuration: JSON in, validated problem objects out.

The raw dict is kept verbatim so save(load(path)) round-trips losslessly.
Unknown keys are rejected with the offending location. Scalar fields accept
numbers, expression strings over a small whitelisted language, or
{"table": "file.csv"} references resolved relative to the config file.

Expression language: +, -, *, /, ^ (or **), parentheses; names x1..x3 for
coordinates, r for |x|, mu for sqrt(1+|x|^2), d for collar depth in
envelope expressions; functions exp, log, sqrt, abs, sin, cos, min, max,
pow; constants pi and e. Evaluation is vectorized over point arrays.
"""
from __future__ import annotations

import ast
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .admissibility import ProblemSpec
from .domains import Ball, Ellipse, PlanarDomain, SmoothConvex
from .errors import ConfigError

Array = np.ndarray

_FUNCS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "sin": np.sin, "cos": np.cos, "min": np.minimum, "max": np.maximum,
    "pow": np.power,
}
_CONSTS = {"pi": math.pi, "e": math.e}

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}
_UNOPS = {ast.USub: np.negative, ast.UAdd: lambda v: v}


def _eval_node(node, env: dict):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, env)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return float(node.value)
        raise ConfigError(f"literal {node.value!r} is not a number")
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        raise ConfigError(f"unknown name '{node.id}' in expression")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left, env),
                                      _eval_node(node.right, env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
        return _UNOPS[type(node.op)](_eval_node(node.operand, env))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            name = getattr(node.func, "id", "<expr>")
            raise ConfigError(f"function '{name}' is not allowed")
        if node.keywords:
            raise ConfigError("keyword arguments are not allowed")
        args = [_eval_node(a, env) for a in node.args]
        return _FUNCS[node.func.id](*args)
    raise ConfigError(f"expression element {type(node).__name__} is not allowed")


def compile_expression(src: str, n: int, mode: str = "point"):
    """Compile one whitelisted expression to a vectorized callable.

    mode 'point': f(X) over (m, n) arrays with x1..xn, r, mu bound.
    mode 'depth': f(d) over scalars or 1d arrays with d bound.
    """
    text = src.replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {src!r}: {exc.msg}",
                          line=exc.lineno, col=exc.offset) from None

    if mode == "point":
        def f(X, _tree=tree, _n=n):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            env = {f"x{i + 1}": X[:, i] for i in range(_n)}
            rr = np.linalg.norm(X, axis=1)
            env["r"] = rr
            env["mu"] = np.sqrt(1.0 + rr * rr)
            out = _eval_node(_tree, env)
            return np.broadcast_to(np.asarray(out, dtype=float),
                                   (len(X),)).copy()
    elif mode == "depth":
        def f(d, _tree=tree):
            d = np.asarray(d, dtype=float)
            out = _eval_node(_tree, {"d": d, "t": d})
            return np.broadcast_to(np.asarray(out, dtype=float), d.shape).copy() \
                if d.ndim else float(np.asarray(out))
    else:
        raise ValueError(f"unknown expression mode {mode!r}")
    # fail fast on bad names/structure
    probe = np.full((2, n), 0.25) if mode == "point" else np.array([0.25, 0.5])
    f(probe)
    return f


def load_table(path: str):
    """CSV table to a multilinear interpolant.

    Two columns give a 1d interpolant in the first column's variable;
    k+1 columns give a gridded interpolant over the first k columns (rows
    must enumerate a full lattice, any order). Queries outside the table
    clamp to the nearest face.
    """
    data = np.loadtxt(path, delimiter=",", skiprows=_header_rows(path))
    if data.ndim == 1:
        data = data.reshape(-1, 2)
    k = data.shape[1] - 1
    if k == 1:
        xs = data[:, 0]
        order = np.argsort(xs)
        xs, vs = xs[order], data[order, 1]

        def f(q):
            q = np.asarray(q, dtype=float)
            out = np.interp(q, xs, vs)
            return out if q.ndim else float(out)
        return f

    from scipy.interpolate import RegularGridInterpolator
    axes = [np.unique(data[:, i]) for i in range(k)]
    shape = tuple(len(a) for a in axes)
    if np.prod(shape) != len(data):
        raise ConfigError(
            f"table {path} does not enumerate a full lattice "
            f"({len(data)} rows, axes imply {np.prod(shape)})")
    idx = np.lexsort([data[:, i] for i in reversed(range(k))])
    grid_vals = data[idx, -1].reshape(shape)
    itp = RegularGridInterpolator(axes, grid_vals, bounds_error=False,
                                  fill_value=None)

    def f(X, _itp=itp, _axes=axes):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Xc = np.column_stack([np.clip(X[:, i], a[0], a[-1])
                              for i, a in enumerate(_axes)])
        return np.asarray(_itp(Xc), dtype=float)
    return f


def _header_rows(path: str) -> int:
    with open(path) as fh:
        first = fh.readline()
    try:
        float(first.split(",")[0])
        return 0
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# schema


_DOMAIN_KEYS = {"type", "center", "radius", "semiaxes", "level", "box", "r0"}
_PROBLEM_KEYS = {"case", "p", "n", "domain", "section", "m_free",
                 "half_length", "curvature", "g", "h", "r0", "q",
                 "boundary", "sign"}
_SOLVER_KEYS = {"h", "tol", "max_newton", "wide", "k_max", "L"}
_OUTPUT_KEYS = {"dir", "mesh", "fields"}
_TOP_KEYS = {"problem", "solver", "output"}


def _key_location(source: str, key: str, after_line: int = 0):
    needle = f'"{key}"'
    for i, line in enumerate(source.splitlines(), start=1):
        if i <= after_line:
            continue
        col = line.find(needle)
        if col >= 0:
            return i, col + 1
    return None, None


def _check_keys(obj: dict, allowed: set, path: str, source: str):
    for k in obj:
        if k not in allowed:
            line, col = _key_location(source, k)
            raise ConfigError(f"unknown key '{k}'", line=line, col=col,
                              path=path)


@dataclass
class RunConfig:
    """Parsed configuration plus the verbatim source for lossless output."""

    raw: dict
    source: str
    base_dir: str = "."
    path: str | None = None

    @property
    def problem(self) -> dict:
        return self.raw.get("problem", {})

    @property
    def solver(self) -> dict:
        return self.raw.get("solver", {})

    @property
    def output(self) -> dict:
        return self.raw.get("output", {})

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    # -- resolved objects --------------------------------------------------

    def _scalar_field(self, value, n: int, mode: str):
        if value is None:
            return None
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            return compile_expression(value, n, mode=mode)
        if isinstance(value, dict) and set(value) == {"table"}:
            return load_table(os.path.join(self.base_dir, value["table"]))
        raise ConfigError(f"cannot interpret field value {value!r}",
                          path="problem")

    def domain(self, key: str = "domain") -> PlanarDomain | None:
        d = self.problem.get(key)
        if d is None:
            return None
        _check_keys(d, _DOMAIN_KEYS, f"problem.{key}", self.source)
        kind = d.get("type")
        r0 = d.get("r0")
        if kind == "ball":
            return Ball(d.get("center", [0.0] * int(self.problem["n"])),
                        d["radius"], r0=r0)
        if kind == "ellipse":
            return Ellipse(d["semiaxes"], r0=r0)
        if kind == "smooth":
            box = np.asarray(d["box"], dtype=float)
            level = compile_expression(d["level"], box.shape[0], mode="point")
            return SmoothConvex(level, box, r0=r0)
        raise ConfigError(f"unknown domain type {kind!r}", path=f"problem.{key}")

    def boundary_data(self, n: int):
        b = self.problem.get("boundary")
        if b is None:
            return None
        return self._scalar_field(b, n, "point")

    def problem_spec(self) -> ProblemSpec:
        pr = self.problem
        n = int(pr["n"])
        case = pr["case"]
        dom = self.domain() if case != "TypeIII" else None
        sec = self.domain("section") if case == "TypeIII" else None
        spec = ProblemSpec(
            p=float(pr["p"]), n=n, case=case, domain=dom,
            curvature=self._scalar_field(pr.get("curvature", 1.0), n, "point"),
            sign_hint=pr.get("sign", "Negative"),
            boundary=self.boundary_data(n),
            g=self._scalar_field(pr.get("g"), n, "depth"),
            h=self._scalar_field(pr.get("h"), n, "depth"),
            r0=pr.get("r0"),
            q=pr.get("q"),
            m_free=int(pr.get("m_free", 0)),
        )
        if sec is not None:
            spec.notes["section"] = sec
            spec.notes["half_length"] = float(pr.get("half_length",
                                                     self.solver.get("L", 4.0)))
        return spec


def loads(source: str, base_dir: str = ".", path: str | None = None) -> RunConfig:
    try:
        raw = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno,
                          col=exc.colno) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    _check_keys(raw, _TOP_KEYS, "<top>", source)
    if "problem" not in raw:
        raise ConfigError("missing required section 'problem'")
    _check_keys(raw["problem"], _PROBLEM_KEYS, "problem", source)
    _check_keys(raw.get("solver", {}), _SOLVER_KEYS, "solver", source)
    _check_keys(raw.get("output", {}), _OUTPUT_KEYS, "output", source)
    for req in ("case", "p", "n"):
        if req not in raw["problem"]:
            raise ConfigError(f"missing required key '{req}'", path="problem")
    return RunConfig(raw=raw, source=source, base_dir=base_dir, path=path)


def load(path) -> RunConfig:
    with open(path) as fh:
        source = fh.read()
    return loads(source, base_dir=os.path.dirname(os.path.abspath(path)),
                 path=str(path))
