"""Network data model: topology, allocation matrix, AIMD class parameters and
loss-rate functions.

Node and class indices are 0-based throughout. Topology builders attach the
conventional labels ("0", "1", ..., "01", ...) to classes so that reports can
be read against the usual 1-based ring/line numbering.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

KINDS = ("constant", "additive", "routesum")
TOPOLOGIES = ("custom", "tree", "linear", "ring2", "ring2+1", "ring2+full")


class DomainError(ValueError):
    """An argument lies outside the domain of a model function."""


class ModelWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ClassParams:
    """AIMD parameters of one class of connections.

    ``a`` is the linear growth rate, ``r`` the multiplicative decrease factor
    and ``p`` the population weight of the class.
    """

    a: float = 1.0
    r: float = 0.5
    p: float = 1.0
    label: str = ""


@dataclass(frozen=True)
class NodeLossTerm:
    """Per-node loss function ``x -> coeff * x**exponent``."""

    coeff: float = 1.0
    exponent: float = 1.0

    def __call__(self, x: float) -> float:
        if self.coeff == 0.0:
            return 0.0
        return self.coeff * x**self.exponent


@dataclass(frozen=True)
class LossRateSpec:
    """Loss rate ``beta_k(u)`` of one class.

    - ``constant``: ``delta``
    - ``additive``: ``delta + sum_j term_j(u_j)`` over the route nodes
    - ``routesum``: ``delta + term(sum_j u_j)`` over the route nodes

    ``nodes`` is ``None`` for a template that a topology builder binds to a
    route with :meth:`on_route`.
    """

    kind: str
    delta: float
    nodes: tuple[int, ...] | None = None
    terms: tuple[NodeLossTerm, ...] = ()

    @classmethod
    def constant(cls, delta: float) -> "LossRateSpec":
        return cls("constant", float(delta))

    @classmethod
    def additive(cls, delta: float = 1.0, coeff: float = 1.0, exponent: float = 1.0,
                 terms: dict[int, NodeLossTerm] | None = None) -> "LossRateSpec":
        if terms is None:
            return cls("additive", float(delta), None, (NodeLossTerm(coeff, exponent),))
        nodes = tuple(terms)   # keep the given order so bound specs round-trip
        return cls("additive", float(delta), nodes, tuple(terms[j] for j in nodes))

    @classmethod
    def route_sum(cls, delta: float = 1.0, coeff: float = 1.0,
                  exponent: float = 1.0) -> "LossRateSpec":
        return cls("routesum", float(delta), None, (NodeLossTerm(coeff, exponent),))

    @property
    def is_template(self) -> bool:
        return self.kind != "constant" and self.nodes is None

    def on_route(self, route: Sequence[int]) -> "LossRateSpec":
        """Bind a template to ``route``; bound specs are returned unchanged."""
        if not self.is_template:
            return self
        route = tuple(int(j) for j in route)
        if self.kind == "additive":
            return LossRateSpec("additive", self.delta, route, self.terms * len(route))
        return LossRateSpec("routesum", self.delta, route, self.terms)

    def __call__(self, u) -> float:
        if self.kind == "constant":
            return self.delta
        if self.nodes is None:
            raise ValueError("loss-rate template is not bound to a route")
        if self.kind == "additive":
            return self.delta + sum(t(u[j]) for j, t in zip(self.nodes, self.terms))
        return self.delta + self.terms[0](sum(u[j] for j in self.nodes))

    def as_route_sum(self) -> NodeLossTerm | None:
        """Equivalent term of the route load sum, when one exists.

        Constant specs map to a zero term; additive specs map when every node
        term is the same linear function.
        """
        if self.kind == "constant":
            return NodeLossTerm(0.0, 1.0)
        if self.kind == "routesum":
            return self.terms[0]
        first = self.terms[0]
        if all(t == first for t in self.terms) and first.exponent == 1.0:
            return first
        return None

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "delta": self.delta}
        if self.kind == "constant":
            return out
        if self.kind == "routesum" or self.nodes is None:
            out["coeff"] = self.terms[0].coeff
            out["exponent"] = self.terms[0].exponent
        else:
            out["terms"] = {str(j): {"coeff": t.coeff, "exponent": t.exponent}
                            for j, t in zip(self.nodes, self.terms)}
        if self.nodes is not None:
            out["nodes"] = list(self.nodes)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LossRateSpec":
        kind = str(d.get("kind", "routesum")).lower().replace("_", "").replace("-", "")
        delta = float(d.get("delta", 1.0))
        if kind == "constant":
            return cls.constant(delta)
        if kind == "additive":
            if "terms" in d:
                terms = {int(j): NodeLossTerm(float(t.get("coeff", 1.0)),
                                              float(t.get("exponent", 1.0)))
                         for j, t in d["terms"].items()}
                return cls.additive(delta, terms=terms)
            spec = cls.additive(delta, float(d.get("coeff", 1.0)), float(d.get("exponent", 1.0)))
        elif kind == "routesum":
            spec = cls.route_sum(delta, float(d.get("coeff", 1.0)), float(d.get("exponent", 1.0)))
        else:
            raise ValueError(f"unknown loss-rate kind {d.get('kind')!r}")
        if "nodes" in d:
            spec = spec.on_route(d["nodes"])
        return spec


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Allocation matrix ``A`` (J x K), per-class AIMD parameters and loss rates.

    ``routes`` fixes the node order of each route (root-to-leaf on trees,
    cyclic on rings); when omitted, routes are the sorted column supports.
    ``parent`` is the tree parent array (``-1`` for the root).
    """

    A: np.ndarray
    classes: tuple[ClassParams, ...]
    loss: tuple[LossRateSpec, ...]
    topology: str = "custom"
    parent: tuple[int, ...] | None = None
    routes: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.routes is None:
            routes = tuple(tuple(int(j) for j in np.flatnonzero(A[:, k] > 0))
                           for k in range(A.shape[1]))
            object.__setattr__(self, "routes", routes)
        loss = tuple(spec.on_route(route) for spec, route in zip(self.loss, self.routes))
        object.__setattr__(self, "loss", loss)

    @property
    def J(self) -> int:
        return self.A.shape[0]

    @property
    def K(self) -> int:
        return self.A.shape[1]

    @property
    def a(self) -> np.ndarray:
        return np.array([c.a for c in self.classes])

    @property
    def r(self) -> np.ndarray:
        return np.array([c.r for c in self.classes])

    @property
    def p(self) -> np.ndarray:
        return np.array([c.p for c in self.classes])

    @property
    def labels(self) -> list[str]:
        return [c.label or str(k) for k, c in enumerate(self.classes)]

    @property
    def delta(self) -> np.ndarray:
        return np.array([s.delta for s in self.loss])

    def betas(self, u) -> np.ndarray:
        """All loss rates at node loads ``u`` (no domain check)."""
        u = [float(x) for x in u]
        return np.array([spec(u) for spec in self.loss])

    def replace(self, **changes) -> "NetworkModel":
        kw = dict(A=self.A, classes=self.classes, loss=self.loss, topology=self.topology,
                  parent=self.parent, routes=self.routes)
        kw.update(changes)
        return NetworkModel(**kw)

    def to_dict(self) -> dict:
        d = {
            "matrix": self.A.tolist(),
            "classes": [{"a": c.a, "r": c.r, "p": c.p, "label": c.label} for c in self.classes],
            "loss": [s.to_dict() for s in self.loss],
            "topology": self.topology,
            "routes": [list(r) for r in self.routes],
        }
        if self.parent is not None:
            d["parent"] = list(self.parent)
        return d


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    index: int | None = None
    severity: str = "error"

    def __str__(self):
        return f"{self.code}: {self.message}"


def route_of(model: NetworkModel, k: int) -> list[int]:
    """Nodes used by class ``k``, in topology order."""
    if not 0 <= k < model.K:
        raise IndexError(f"class index {k} out of range for K={model.K}")
    return list(model.routes[k])


def eval_beta(model: NetworkModel, k: int, u) -> float:
    """Loss rate ``beta_k(u)`` of class ``k`` at node loads ``u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (model.J,):
        raise ValueError(f"expected {model.J} node loads, got shape {u.shape}")
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise DomainError("node loads must be finite and nonnegative")
    if not 0 <= k < model.K:
        raise IndexError(f"class index {k} out of range for K={model.K}")
    return float(model.loss[k](u.tolist()))


def _ring_route(j: int, J: int, length: int) -> tuple[int, ...]:
    return tuple((j + i) % J for i in range(length))


def _expected_routes(model: NetworkModel) -> list[tuple[int, ...]] | None:
    J = model.J
    top = model.topology
    if top == "tree":
        if model.parent is None or len(model.parent) != J:
            return None
        out = []
        for g in range(J):
            path, node, seen = [], g, 0
            while node != -1 and seen <= J:
                path.append(node)
                node = model.parent[node]
                seen += 1
            out.append(tuple(reversed(path)))
        return out
    if top == "linear":
        return [tuple(range(J))] + [(j,) for j in range(J)]
    if top == "ring2":
        return [_ring_route(j, J, 2) for j in range(J)]
    if top == "ring2+1":
        return [_ring_route(j, J, 2) for j in range(J)] + [(j,) for j in range(J)]
    if top == "ring2+full":
        return [tuple(range(J))] + [_ring_route(j, J, 2) for j in range(J)]
    return None


def validate(model: NetworkModel, for_generic: bool = False) -> list[Violation]:
    """Every invariant violation of ``model``; an empty list means valid.

    Warnings (``severity="warning"``) do not block solvers. With
    ``for_generic=True`` a zero base loss rate is an error, since the
    bracketing iteration needs ``beta_k(0) > 0``.
    """
    out: list[Violation] = []
    A = model.A
    J, K = A.shape
    if len(model.classes) != K:
        out.append(Violation("class_count", f"{len(model.classes)} class parameter sets for K={K}"))
    if len(model.loss) != K:
        out.append(Violation("loss_count", f"{len(model.loss)} loss specs for K={K}"))
    if not np.all(np.isfinite(A)) or np.any(A < 0):
        out.append(Violation("matrix_negative", "allocation matrix must be finite and nonnegative"))
    for k in range(K):
        if not np.any(A[:, k] > 0):
            out.append(Violation("zero_column", f"class {k} uses no node", k))

    for k, c in enumerate(model.classes):
        if not c.a > 0:
            out.append(Violation("a_nonpositive", f"class {k}: a={c.a} must be > 0", k))
        if not 0 <= c.r < 1:
            out.append(Violation("r_range", f"class {k}: r={c.r} out of [0,1)", k))
        if not c.p > 0:
            out.append(Violation("p_nonpositive", f"class {k}: p={c.p} must be > 0", k))
    if model.classes and all(c.p > 0 for c in model.classes):
        total = sum(c.p for c in model.classes)
        if abs(total - 1.0) > 1e-9:
            out.append(Violation("p_sum", f"population weights sum to {total:g}, not 1",
                                 severity="warning"))

    for k, spec in enumerate(model.loss[:K]):
        if spec.kind not in KINDS:
            out.append(Violation("loss_kind", f"class {k}: unknown kind {spec.kind!r}", k))
            continue
        if not (spec.delta >= 0 and math.isfinite(spec.delta)):
            out.append(Violation("delta_negative", f"class {k}: delta={spec.delta}", k))
        elif spec.delta == 0 and spec.kind != "constant":
            sev = "error" if for_generic else "warning"
            out.append(Violation("delta_zero", f"class {k}: beta_k(0) = 0", k, sev))
        elif spec.delta == 0:
            out.append(Violation("beta_zero", f"class {k}: constant loss rate 0", k))
        for t in spec.terms:
            if t.coeff < 0 or t.exponent < 0:
                out.append(Violation("loss_term_negative",
                                     f"class {k}: loss term {t} is not non-decreasing", k))
        if spec.kind == "constant" or spec.nodes is None:
            continue
        if spec.kind == "additive" and len(spec.nodes) != len(spec.terms):
            out.append(Violation("loss_term_count", f"class {k}: terms do not match nodes", k))
        support = {j for j in range(J) if A[j, k] > 0}
        for j in spec.nodes:
            if not 0 <= j < J or j not in support:
                out.append(Violation("loss_off_route",
                                     f"class {k}: loss term on node {j} off route", k))
        if spec.kind == "routesum" and set(spec.nodes) != support:
            out.append(Violation("loss_route_mismatch",
                                 f"class {k}: route-sum nodes {spec.nodes} differ from route", k))

    for k, route in enumerate(model.routes[:K]):
        if set(route) != {j for j in range(J) if A[j, k] > 0}:
            out.append(Violation("route_mismatch", f"class {k}: route {route} != support of A", k))

    if model.topology not in TOPOLOGIES:
        out.append(Violation("topology", f"unknown topology {model.topology!r}"))
    elif model.topology != "custom":
        expected = _expected_routes(model)
        if expected is None:
            out.append(Violation("topology", f"{model.topology}: missing structural data"))
        elif len(expected) != K or any(tuple(model.routes[k]) != expected[k] for k in range(K)):
            out.append(Violation("topology", f"routes do not match {model.topology} structure"))
        elif model.topology == "tree" and sum(1 for q in model.parent if q == -1) != 1:
            out.append(Violation("topology", "tree must have exactly one root"))
    return out


def errors(violations: Iterable[Violation]) -> list[Violation]:
    return [v for v in violations if v.severity == "error"]


def check_model(model: NetworkModel, for_generic: bool = False) -> None:
    """Raise ``ValueError`` on validation errors; emit warnings otherwise."""
    found = validate(model, for_generic=for_generic)
    for v in found:
        if v.severity == "warning":
            warnings.warn(str(v), ModelWarning, stacklevel=3)
    bad = errors(found)
    if bad:
        raise ValueError("invalid model: " + "; ".join(map(str, bad)))


# ---------------------------------------------------------------------------
# topology builders

def _per_class(value, n: int, what: str) -> list:
    if isinstance(value, (ClassParams, LossRateSpec)):
        return [value] * n
    value = list(value)
    if len(value) != n:
        raise ValueError(f"expected {n} {what}, got {len(value)}")
    return value


def _labelled(classes: list[ClassParams], labels: list[str]) -> list[ClassParams]:
    return [c if c.label else ClassParams(c.a, c.r, c.p, lab) for c, lab in zip(classes, labels)]


def _build(J: int, routes: list[tuple[int, ...]], classes, loss, topology: str,
           labels: list[str], parent=None) -> NetworkModel:
    K = len(routes)
    A = np.zeros((J, K))
    for k, route in enumerate(routes):
        A[list(route), k] = 1.0
    cls = _labelled(_per_class(classes, K, "class parameter sets"), labels)
    return NetworkModel(A, tuple(cls), tuple(_per_class(loss, K, "loss specs")), topology,
                        None if parent is None else tuple(parent), tuple(routes))


def tree_model(parent: Sequence[int], classes=ClassParams(), loss=None) -> NetworkModel:
    """Tree with one class per node; class ``G`` follows the root-to-``G`` path."""
    parent = [int(q) for q in parent]
    J = len(parent)
    loss = LossRateSpec.additive() if loss is None else loss
    stub = NetworkModel(np.eye(J), [ClassParams()] * J, [LossRateSpec.constant(1)] * J,
                        "tree", tuple(parent), tuple((j,) for j in range(J)))
    routes = _expected_routes(stub)
    if sum(1 for q in parent if q == -1) != 1 or any(len(r) > J for r in routes):
        raise ValueError("parent array does not describe a rooted tree")
    return _build(J, routes, classes, loss, "tree", [str(g) for g in range(J)], parent)


def binary_tree(levels: int, classes=ClassParams(), loss=None) -> NetworkModel:
    """Complete binary tree with ``levels`` levels (root is level 1)."""
    n = 2**levels - 1
    return tree_model([-1] + [(g - 1) // 2 for g in range(1, n)], classes, loss)


def _check_ring(J: int):
    if J < 2:
        raise ValueError(f"a ring needs at least 2 nodes, got J={J}")


def linear_model(J: int, classes=ClassParams(), loss=None) -> NetworkModel:
    """Line of ``J`` nodes: class 0 uses every node, class ``j`` node ``j-1``."""
    if J < 1:
        raise ValueError("a line needs at least one node")
    loss = LossRateSpec.route_sum() if loss is None else loss
    routes = [tuple(range(J))] + [(j,) for j in range(J)]
    return _build(J, routes, classes, loss, "linear", [str(k) for k in range(J + 1)])


def ring_two(J: int, classes=ClassParams(), loss=None) -> NetworkModel:
    """Ring of ``J`` nodes; class ``j`` uses nodes ``j`` and ``j+1 mod J``."""
    _check_ring(J)
    loss = LossRateSpec.route_sum() if loss is None else loss
    routes = [_ring_route(j, J, 2) for j in range(J)]
    return _build(J, routes, classes, loss, "ring2", [str(j + 1) for j in range(J)])


def ring_mixed(J: int, classes=ClassParams(), loss=None) -> NetworkModel:
    """Ring with two-node classes ``0..J-1`` and single-node classes ``J..2J-1``."""
    _check_ring(J)
    loss = LossRateSpec.route_sum() if loss is None else loss
    routes = [_ring_route(j, J, 2) for j in range(J)] + [(j,) for j in range(J)]
    labels = [str(j + 1) for j in range(J)] + [f"0{j + 1}" for j in range(J)]
    return _build(J, routes, classes, loss, "ring2+1", labels)


def ring_full(J: int, classes=ClassParams(), loss=None) -> NetworkModel:
    """Ring with the complete-route class 0 and two-node classes ``1..J``.

    Class ``i >= 1`` uses nodes ``i-1`` and ``i mod J``.
    """
    _check_ring(J)
    loss = LossRateSpec.route_sum() if loss is None else loss
    routes = [tuple(range(J))] + [_ring_route(j, J, 2) for j in range(J)]
    return _build(J, routes, classes, loss, "ring2+full", [str(k) for k in range(J + 1)])


def custom_model(A, classes, loss) -> NetworkModel:
    A = np.asarray(A, dtype=float)
    K = A.shape[1]
    return NetworkModel(A, tuple(_per_class(classes, K, "class parameter sets")),
                        tuple(_per_class(loss, K, "loss specs")))


PRESETS: dict[str, Callable[..., NetworkModel]] = {
    "linear": linear_model,
    "ring2": ring_two,
    "ring2+1": ring_mixed,
    "ring2+full": ring_full,
}
