"""JSON run configuration (schema 1).

Parsing resolves every default, so ``RunConfig.to_dict()`` is the complete
description of a run and ``parse_config(cfg.to_dict()) == cfg``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .model import (ClassParams, LossRateSpec, NetworkModel, binary_tree,
                    custom_model, errors, validate, linear_model, ring_full, ring_mixed, ring_two,
                    tree_model)
from .simulator import SimOptions
from .solvers import SolverOptions

SCHEMA_VERSION = 1
COMMANDS = ("solve", "simulate", "scan", "check", "density")
PRESET_NAMES = ("tree", "linear", "ring2", "ring2+1", "ring2+full")
_RING_BUILDERS = {"linear": linear_model, "ring2": ring_two, "ring2+1": ring_mixed,
                  "ring2+full": ring_full}
# blocks each command reads; "solver" is also read by simulate for the comparison
_BLOCKS = {"solve": {"solver"}, "simulate": {"simulate", "solver"}, "scan": {"scan", "solver"},
           "check": {"check"}, "density": {"density"}}


class ConfigError(ValueError):
    """Invalid configuration; ``where`` is a dotted field path or ``line L, column C``."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


def _expect(obj, kind, where):
    if not isinstance(obj, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(where, f"expected {names}, got {type(obj).__name__}")
    return obj


def _number(d: dict, key: str, where: str, default=None, cast=float):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}.{key}", "required field is missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}", f"expected a number, got {v!r}")
    if cast is int and float(v) != int(v):
        raise ConfigError(f"{where}.{key}", f"expected an integer, got {v!r}")
    return cast(v)


def _no_extra(d: dict, allowed, where: str):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{where}.{extra[0]}", "unknown field")


def _options(cls, d: dict, where: str, skip=()):
    """Build a frozen options dataclass from ``d``, reporting the failing field."""
    _expect(d, dict, where)
    names = [f.name for f in fields(cls) if f.name not in skip]
    _no_extra(d, names, where)
    try:
        return cls(**{k: v for k, v in d.items()})
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        key = next((n for n in names if n in msg), "")
        raise ConfigError(f"{where}.{key}" if key else where, msg) from None


# ---------------------------------------------------------------------------
# model block

@dataclass(frozen=True)
class ModelConfig:
    """Resolved model description: a preset with its size, or a matrix."""

    preset: str | None = None
    J: int | None = None
    parent: tuple[int, ...] | None = None
    matrix: tuple[tuple[float, ...], ...] | None = None
    classes: tuple[ClassParams, ...] = ()
    loss: tuple[LossRateSpec, ...] = ()

    def build(self) -> NetworkModel:
        if self.matrix is not None:
            return custom_model(np.array(self.matrix), list(self.classes), list(self.loss))
        if self.preset == "tree":
            return tree_model(self.parent, list(self.classes), list(self.loss))
        return _RING_BUILDERS[self.preset](self.J, list(self.classes), list(self.loss))

    def to_dict(self) -> dict:
        out: dict = {}
        if self.matrix is not None:
            out["matrix"] = [list(row) for row in self.matrix]
        else:
            out["preset"] = self.preset
            if self.preset == "tree":
                out["parent"] = list(self.parent)
            else:
                out["J"] = self.J
        out["classes"] = [asdict(c) for c in self.classes]
        out["loss"] = [s.to_dict() for s in self.loss]
        return out


def _class_params(d, where) -> ClassParams:
    _expect(d, dict, where)
    _no_extra(d, ("a", "r", "p", "label"), where)
    label = d.get("label", "")
    _expect(label, str, f"{where}.label")
    return ClassParams(_number(d, "a", where, 1.0), _number(d, "r", where, 0.5),
                       _number(d, "p", where, 1.0), label)


def _loss_spec(d, where) -> LossRateSpec:
    _expect(d, dict, where)
    _no_extra(d, ("kind", "delta", "coeff", "exponent", "terms", "nodes"), where)
    try:
        return LossRateSpec.from_dict(d)
    except (TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(where, str(exc)) from None


def _per_class(value, where, parse, default):
    """A single object applies to every class; a list gives one per class."""
    if value is None:
        return default
    if isinstance(value, list):
        return [parse(v, f"{where}[{i}]") for i, v in enumerate(value)]
    return parse(value, where)


_FIELD_OF = {"a_nonpositive": "classes[{k}].a", "r_range": "classes[{k}].r",
             "p_nonpositive": "classes[{k}].p", "delta_negative": "loss[{k}].delta",
             "beta_zero": "loss[{k}].delta", "delta_zero": "loss[{k}].delta",
             "matrix_negative": "matrix", "zero_column": "matrix", "class_count": "classes",
             "loss_count": "loss"}


def _violation_field(v, where: str) -> str:
    tmpl = _FIELD_OF.get(v.code, "loss[{k}]" if v.code.startswith("loss") else "")
    if not tmpl:
        return where
    return f"{where}.{tmpl.format(k=v.index)}"


def parse_model(d, where: str = "model") -> ModelConfig:
    _expect(d, dict, where)
    has_matrix = "matrix" in d
    if has_matrix == ("preset" in d):
        raise ConfigError(where, "give exactly one of 'preset' or 'matrix'")
    classes = _per_class(d.get("classes"), f"{where}.classes", _class_params, ClassParams())
    loss = _per_class(d.get("loss"), f"{where}.loss", _loss_spec, None)
    try:
        if has_matrix:
            _no_extra(d, ("matrix", "classes", "loss"), where)
            rows = _expect(d["matrix"], list, f"{where}.matrix")
            try:
                A = np.array(rows, dtype=float, ndmin=2)
            except (TypeError, ValueError):
                raise ConfigError(f"{where}.matrix", "not a rectangular numeric matrix") from None
            if A.ndim != 2 or A.size == 0:
                raise ConfigError(f"{where}.matrix", "not a rectangular numeric matrix")
            if loss is None:
                raise ConfigError(f"{where}.loss", "required for matrix models")
            model = custom_model(A, classes, loss)
        else:
            preset = d["preset"]
            if preset not in PRESET_NAMES:
                raise ConfigError(f"{where}.preset", f"unknown preset {preset!r}; "
                                                     f"choose from {', '.join(PRESET_NAMES)}")
            if preset == "tree":
                _no_extra(d, ("preset", "levels", "parent", "classes", "loss"), where)
                if ("levels" in d) == ("parent" in d):
                    raise ConfigError(where, "tree preset needs exactly one of 'levels' or 'parent'")
                if "levels" in d:
                    model = binary_tree(_number(d, "levels", where, cast=int), classes, loss)
                else:
                    parent = _expect(d["parent"], list, f"{where}.parent")
                    model = tree_model(parent, classes, loss)
            else:
                _no_extra(d, ("preset", "J", "classes", "loss"), where)
                model = _RING_BUILDERS[preset](_number(d, "J", where, cast=int), classes, loss)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(where, str(exc)) from None
    bad = errors(validate(model))
    if bad:
        v = bad[0]
        raise ConfigError(_violation_field(v, where), "; ".join(map(str, bad)))
    # bound loss specs pin the route, so emitting them reproduces the model
    if has_matrix:
        return ModelConfig(matrix=tuple(tuple(float(x) for x in row) for row in model.A),
                           classes=model.classes, loss=model.loss)
    return ModelConfig(preset=model.topology,
                       J=None if model.topology == "tree" else model.J,
                       parent=model.parent if model.topology == "tree" else None,
                       classes=model.classes, loss=model.loss)


# ---------------------------------------------------------------------------
# command blocks

@dataclass(frozen=True)
class SimulateBlock:
    mode: str = "particles"           # particles | finite | single
    options: SimOptions = SimOptions()
    counts: tuple[int, ...] | None = None
    scaled_load: bool = False
    a: float = 1.0                    # single mode
    beta: float = 1.0
    r: float = 0.5
    compare: bool = True              # add u* and relative gaps

    def to_dict(self) -> dict:
        out = {"mode": self.mode, "options": self.options.to_dict(), "compare": self.compare}
        if self.mode == "finite":
            out["counts"] = list(self.counts)
            out["scaled_load"] = self.scaled_load
        if self.mode == "single":
            out.update(a=self.a, beta=self.beta, r=self.r)
        return out


@dataclass(frozen=True)
class ScanBlock:
    n_starts: int = 32
    seed: int = 0
    rtol: float = 1e-6

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DensityBlock:
    r: float = 0.5
    rho: float = 1.0
    n_points: int = 2001
    w_max: float | None = None        # default: where the upper tail drops below 1e-13

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CheckBlock:
    filter: str | None = None
    simulate: bool = True             # run the particle-simulation gaps
    horizon: float = 200.0
    particles_per_class: int = 1000
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: ModelConfig | None = None
    solver: SolverOptions = SolverOptions()
    method: str = "specialized"
    simulate: SimulateBlock | None = None
    scan: ScanBlock | None = None
    density: DensityBlock | None = None
    check: CheckBlock | None = None
    out_dir: str | None = None
    format: str = "json"
    schema: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out: dict = {"schema": self.schema, "command": self.command}
        if self.model is not None:
            out["model"] = self.model.to_dict()
        if "solver" in _BLOCKS[self.command]:
            out["solver"] = {**self.solver.to_dict(), "method": self.method}
        for name in ("simulate", "scan", "density", "check"):
            block = getattr(self, name)
            if block is not None:
                out[name] = block.to_dict()
        out["output"] = {"dir": self.out_dir, "format": self.format}
        return out

    def with_seed(self, seed: int) -> "RunConfig":
        """Override every seed in the active block."""
        from dataclasses import replace
        if self.simulate is not None:
            return replace(self, simulate=replace(self.simulate,
                                                  options=replace(self.simulate.options, seed=seed)))
        if self.scan is not None:
            return replace(self, scan=replace(self.scan, seed=seed))
        if self.check is not None:
            return replace(self, check=replace(self.check, seed=seed))
        return self


def _bool(d, key, where, default):
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{where}.{key}", f"expected true/false, got {v!r}")
    return v


def _parse_simulate(d, where="simulate") -> SimulateBlock:
    _expect(d, dict, where)
    _no_extra(d, ("mode", "options", "counts", "scaled_load", "a", "beta", "r", "w0", "compare"), where)
    mode = d.get("mode", "particles")
    if mode not in ("particles", "finite", "single"):
        raise ConfigError(f"{where}.mode", f"unknown mode {mode!r}")
    opts_d = dict(d.get("options", {}))
    if "w0" in d:
        opts_d["w0"] = d["w0"]
    if mode == "single":
        opts_d.setdefault("w0", 0.0)
    opts = _options(SimOptions, opts_d, f"{where}.options")
    counts = None
    if mode == "finite":
        raw = _expect(d.get("counts"), list, f"{where}.counts")
        if not raw or any(isinstance(c, bool) or not isinstance(c, int) or c < 1 for c in raw):
            raise ConfigError(f"{where}.counts", "expected a list of positive integers")
        counts = tuple(raw)
    block = SimulateBlock(mode, opts, counts, _bool(d, "scaled_load", where, False),
                          _number(d, "a", where, 1.0), _number(d, "beta", where, 1.0),
                          _number(d, "r", where, 0.5),
                          _bool(d, "compare", where, mode != "single"))
    if mode == "single":
        if not block.a > 0:
            raise ConfigError(f"{where}.a", "must be positive")
        if not block.beta >= 0:
            raise ConfigError(f"{where}.beta", "must be nonnegative")
        if not 0 <= block.r < 1:
            raise ConfigError(f"{where}.r", "must lie in [0, 1)")
    return block


def _parse_density(d, where="density") -> DensityBlock:
    _expect(d, dict, where)
    _no_extra(d, ("r", "rho", "n_points", "w_max"), where)
    b = DensityBlock(_number(d, "r", where, 0.5), _number(d, "rho", where, 1.0),
                     _number(d, "n_points", where, 2001, int),
                     None if d.get("w_max") is None else _number(d, "w_max", where))
    if not 0 <= b.r < 1:
        raise ConfigError(f"{where}.r", "must lie in [0, 1)")
    if not b.rho > 0:
        raise ConfigError(f"{where}.rho", "must be positive")
    if b.n_points < 2:
        raise ConfigError(f"{where}.n_points", "need at least 2 points")
    if b.w_max is not None and not b.w_max > 0:
        raise ConfigError(f"{where}.w_max", "must be positive")
    return b


def _parse_scan(d, where="scan") -> ScanBlock:
    _expect(d, dict, where)
    _no_extra(d, ("n_starts", "seed", "rtol"), where)
    b = ScanBlock(_number(d, "n_starts", where, 32, int), _number(d, "seed", where, 0, int),
                  _number(d, "rtol", where, 1e-6))
    if b.n_starts < 1:
        raise ConfigError(f"{where}.n_starts", "must be at least 1")
    return b


def _parse_check(d, where="check") -> CheckBlock:
    _expect(d, dict, where)
    _no_extra(d, ("filter", "simulate", "horizon", "particles_per_class", "seed"), where)
    flt = d.get("filter")
    if flt is not None:
        _expect(flt, str, f"{where}.filter")
    return CheckBlock(flt, _bool(d, "simulate", where, True), _number(d, "horizon", where, 200.0),
                      _number(d, "particles_per_class", where, 1000, int),
                      _number(d, "seed", where, 0, int))


def parse_config(d, command: str | None = None) -> RunConfig:
    """Validate a config document. ``command`` comes from the command line
    and must agree with the document's own ``command`` field if both are set."""
    _expect(d, dict, "")
    _no_extra(d, ("schema", "command", "model", "solver", "simulate", "scan", "density",
                  "check", "output"), "config")
    schema = d.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError("schema", f"unsupported schema {schema!r}; expected {SCHEMA_VERSION}")
    doc_cmd = d.get("command")
    if doc_cmd is not None and command is not None and doc_cmd != command:
        raise ConfigError("command", f"config is for {doc_cmd!r} but {command!r} was requested")
    cmd = command or doc_cmd
    if cmd not in COMMANDS:
        raise ConfigError("command", f"expected one of {', '.join(COMMANDS)}, got {cmd!r}")
    for block in ("solver", "simulate", "scan", "density", "check"):
        if block in d and block not in _BLOCKS[cmd]:
            raise ConfigError(block, f"block is not used by the {cmd!r} command")

    solver_d = dict(_expect(d.get("solver", {}), dict, "solver"))
    method = solver_d.pop("method", "specialized")
    if method not in ("specialized", "generic"):
        raise ConfigError("solver.method", f"expected 'specialized' or 'generic', got {method!r}")
    solver = _options(SolverOptions, solver_d, "solver")

    sim = _parse_simulate(d.get("simulate", {})) if cmd == "simulate" else None
    needs_model = cmd in ("solve", "scan") or (cmd == "simulate" and sim.mode != "single")
    model = None
    if "model" in d:
        if not needs_model:
            raise ConfigError("model", f"not used by {cmd!r}" +
                              (" in single mode" if cmd == "simulate" else ""))
        model = parse_model(d["model"])
    elif needs_model:
        raise ConfigError("model", "required field is missing")
    if sim is not None and sim.mode == "finite" and len(sim.counts) != len(model.classes):
        raise ConfigError("simulate.counts", f"expected {len(model.classes)} entries, "
                                             f"got {len(sim.counts)}")

    out_d = _expect(d.get("output", {}), dict, "output")
    _no_extra(out_d, ("dir", "format"), "output")
    fmt = out_d.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ConfigError("output.format", f"expected 'json' or 'csv', got {fmt!r}")
    out_dir = out_d.get("dir")
    if out_dir is not None:
        _expect(out_dir, str, "output.dir")

    return RunConfig(
        command=cmd, model=model, solver=solver, method=method, simulate=sim,
        scan=_parse_scan(d.get("scan", {})) if cmd == "scan" else None,
        density=_parse_density(d.get("density", {})) if cmd == "density" else None,
        check=_parse_check(d.get("check", {})) if cmd == "check" else None,
        out_dir=out_dir, format=fmt, schema=schema)


def load_config(text: str, command: str | None = None) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    return parse_config(doc, command)


def default_config(command: str) -> RunConfig:
    """Config used when no file is given: the symmetric ring of three nodes."""
    doc: dict = {"command": command}
    if command in ("solve", "scan", "simulate"):
        doc["model"] = {"preset": "ring2", "J": 3}
    return parse_config(doc)
