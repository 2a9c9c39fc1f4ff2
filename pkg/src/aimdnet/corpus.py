"""Built-in test corpus: one entry per (topology, size, loss family)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .model import (ClassParams, LossRateSpec, NetworkModel, binary_tree, custom_model,
                    linear_model, ring_full, ring_mixed, ring_two)

VARIANTS = {
    "routesum": LossRateSpec.route_sum(1.0, 1.0, 1.0),
    "additive": LossRateSpec.additive(1.0, 1.0, 1.0),
}


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    topology: str
    variant: str
    build: Callable[[], NetworkModel]
    mean_field: bool = False    # include in the particle-simulation checks

    def matches(self, pattern: str | None) -> bool:
        if not pattern:
            return True
        return pattern in (self.topology, self.variant) or pattern in self.name


def single_node() -> NetworkModel:
    """One node, one class: ``a=1, r=0.5, p=1``, ``beta(u) = 1 + u``."""
    return custom_model([[1.0]], ClassParams(1.0, 0.5, 1.0), LossRateSpec.route_sum())


def _entries() -> list[CorpusEntry]:
    out = [CorpusEntry("single", "custom", "routesum", single_node, mean_field=True)]
    for v, loss in VARIANTS.items():
        out.append(CorpusEntry(f"tree-L3-{v}", "tree", v,
                               lambda loss=loss: binary_tree(3, ClassParams(p=1 / 7), loss)))
        for J in (1, 2, 3):
            out.append(CorpusEntry(f"linear-J{J}-{v}", "linear", v,
                                   lambda J=J, loss=loss: linear_model(J, ClassParams(p=1 / (J + 1)), loss)))
        for J in (3, 4, 5):
            out.append(CorpusEntry(f"ring2-J{J}-{v}", "ring2", v,
                                   lambda J=J, loss=loss: ring_two(J, ClassParams(), loss),
                                   mean_field=(J == 3 and v == "routesum")))
        for J in (3, 4):
            out.append(CorpusEntry(f"ring2+1-J{J}-{v}", "ring2+1", v,
                                   lambda J=J, loss=loss: ring_mixed(J, ClassParams(), loss)))
        for J in (3, 4):
            out.append(CorpusEntry(f"ring2+full-J{J}-{v}", "ring2+full", v,
                                   lambda J=J, loss=loss: ring_full(J, ClassParams(), loss)))
    return out


CORPUS: tuple[CorpusEntry, ...] = tuple(_entries())


def corpus(pattern: str | None = None) -> list[CorpusEntry]:
    """Entries whose topology or variant equals ``pattern`` or whose name contains it."""
    return [e for e in CORPUS if e.matches(pattern)]
