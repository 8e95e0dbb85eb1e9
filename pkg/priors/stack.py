from __future__ import annotations

from dataclasses import dataclass, field

from common.exceptions import ConfigError
from neighbors.types import NeighborList
from priors import tables
from priors.terms import D2, ZBL, Atomref, Coulomb, Prior
from structure.energy import EnergyForces
from structure.system import System


@dataclass
class PriorStack:
    terms: list[Prior] = field(default_factory=list)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    @property
    def learnable_atomref(self) -> Atomref | None:
        for term in self.terms:
            if isinstance(term, Atomref) and term.learnable:
                return term
        return None

    def evaluate(
        self, system: System, neighbors: NeighborList | None, derivative: bool = True
    ) -> EnergyForces:
        return evaluate_prior_stack(system, neighbors, self, derivative)

    def describe(self) -> list[dict]:
        return [term.describe() for term in self.terms]


def evaluate_prior_stack(
    system: System,
    neighbors: NeighborList | None,
    stack: PriorStack,
    derivative: bool = True,
) -> EnergyForces:
    result = EnergyForces.zeros(system, derivative)
    for term in stack:
        result = result + term.energy_forces(system, neighbors, derivative)
    return result


def prior_from_description(description: dict) -> Prior:
    options = dict(description)
    name = options.pop("name", None)
    if name == Atomref.name:
        table = {int(z): float(v) for z, v in options.get("table", {}).items()}
        return Atomref(table, learnable=bool(options.get("learnable", False)))
    if name == Coulomb.name:
        return Coulomb(options["switch_radius"])
    if name == D2.name:
        return D2(
            s6=options.get("s6", tables.D2_DEFAULT_S6),
            d_steep=options.get("d_steep", tables.D2_DEFAULT_STEEPNESS),
        )
    if name == ZBL.name:
        return ZBL()
    raise ConfigError(f"unknown prior {name!r}")


def build_prior_stack(
    names: str | list[str],
    atomref: dict[int, float] | None = None,
    atomref_learnable: bool = False,
    coulomb_switch: float = 1.0,
    d2_s6: float | None = None,
    d2_steep: float | None = None,
) -> PriorStack:
    """Create a stack from prior names, e.g. the ``prior_model`` config key."""
    if isinstance(names, str):
        names = [n for n in (part.strip().lower() for part in names.split(",")) if n]
    descriptions = []
    for name in names:
        description = {"name": name.lower()}
        if description["name"] == Atomref.name:
            description.update(table=atomref or {}, learnable=atomref_learnable)
        elif description["name"] == Coulomb.name:
            description.update(switch_radius=coulomb_switch)
        elif description["name"] == D2.name:
            if d2_s6 is not None:
                description["s6"] = d2_s6
            if d2_steep is not None:
                description["d_steep"] = d2_steep
        descriptions.append(description)
    return PriorStack([prior_from_description(d) for d in descriptions])


def stack_from_description(descriptions: list[dict]) -> PriorStack:
    return PriorStack([prior_from_description(d) for d in descriptions])
