"""Cross-model criterion tables and efficiency distributions of randomised designs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from netdex.graph import Network
from netdex.models import BlockPartition, Design, Model, ModelSpec
from netdex.optimality import CriterionEvaluator
from netdex.randomization import Sampler
from netdex.search import SearchResult, find_optimal_design

log = logging.getLogger(__name__)

DESIGN_COLUMNS = ("CRD", "RBD", "LND", "NBD")
ROWS_BY_CRITERION = {
    "phi1": (Model.CRM, Model.RBM, Model.LNM, Model.NBM),
    "phi2": (Model.LNM, Model.NBM),
}


@dataclass(frozen=True)
class Cell:
    value: float
    evaluable: bool = True
    optimal: bool = False
    designs: int = 1
    singular: int = 0
    std_error: float = 0.0


@dataclass
class CrossTable:
    criterion: str
    rows: tuple[Model, ...]
    columns: tuple[str, ...]
    cells: dict[tuple[Model, str], Cell]
    optimal_designs: dict[str, SearchResult] = field(default_factory=dict)
    sampling: dict[str, str] = field(default_factory=dict)

    def value(self, row: Model | str, column: str) -> float:
        return self.cells[(Model(row), column)].value

    def as_rows(self) -> list[list]:
        return [[r.value.upper()] + [self.cells[(r, c)].value for c in self.columns] for r in self.rows]


def _summarise(values: np.ndarray) -> Cell:
    finite = values[np.isfinite(values)]
    singular = int(values.size - finite.size)
    if finite.size == 0:
        return Cell(math.inf, True, designs=0, singular=singular)
    se = float(finite.std(ddof=1) / math.sqrt(finite.size)) if finite.size > 1 else 0.0
    return Cell(float(finite.mean()), True, designs=int(finite.size), singular=singular, std_error=se)


def cross_model_table(
    net: Network,
    blocks: BlockPartition,
    m: int = 2,
    criterion: str = "phi1",
    sampler: Sampler | None = None,
    rows: tuple[Model | str, ...] | None = None,
    search_method: str = "auto",
    restarts: int = 20,
    seed: int = 0,
) -> CrossTable:
    """Criterion value of each design (columns) under each model (rows).

    LND and NBD are optimal designs found under their own model; CRD and RBD
    cells are means over balanced randomisations (enumerated or sampled),
    with singular randomisations excluded and counted.
    """
    sampler = sampler or Sampler(seed=seed)
    rows = tuple(Model(r) for r in (rows or ROWS_BY_CRITERION[criterion]))
    crd, crd_mode = sampler.designs(net.n, m, None)
    rbd, rbd_mode = sampler.designs(net.n, m, blocks)
    randomised = {"CRD": crd, "RBD": rbd}

    evaluators, rand_values = {}, {}
    for row in set(rows) | {Model.LNM, Model.NBM}:
        if criterion == "phi2" and not row.has_network:
            continue
        evaluators[row] = ev = CriterionEvaluator(net, blocks, m, ModelSpec(row), criterion)
        for col, designs in randomised.items():
            rand_values[(row, col)] = ev.values(designs)

    optimal = _optimal_designs(net, blocks, m, criterion, randomised, rand_values, evaluators,
                               search_method, restarts, seed)

    cells = {}
    for row in rows:
        if row not in evaluators:
            for col in DESIGN_COLUMNS:
                cells[(row, col)] = Cell(math.nan, evaluable=False)
            continue
        ev = evaluators[row]
        for col in DESIGN_COLUMNS:
            is_opt = col == row.design_name
            if col in randomised:
                cell = _summarise(rand_values[(row, col)])
            else:
                v = ev.value(optimal[col].best_design.assignment - 1)
                cell = Cell(v, True, singular=int(not math.isfinite(v)))
            cells[(row, col)] = Cell(cell.value, cell.evaluable, is_opt, cell.designs, cell.singular, cell.std_error)
    return CrossTable(
        criterion, rows, DESIGN_COLUMNS, cells, optimal, {"CRD": crd_mode, "RBD": rbd_mode}
    )


def _best_randomised(randomised, rand_values, row, m) -> list[Design]:
    out = []
    for col, designs in randomised.items():
        vals = rand_values[(row, col)]
        if np.isfinite(vals).any():
            out.append(Design(designs[int(np.argmin(vals))] + 1, m))
    return out


def _optimal_designs(net, blocks, m, criterion, randomised, rand_values, evaluators,
                     method, restarts, seed, max_rounds: int = 5) -> dict[str, SearchResult]:
    """LND and NBD searches, each warm-started from the other and from the best randomised designs.

    Exchanges only ever improve a start, so each optimum is at least as good
    under its own model as every other design in the table.
    """
    def search(model, extra):
        b = blocks if model is Model.NBM else None
        return find_optimal_design(net, b, m, ModelSpec(model), criterion, method=method,
                                   restarts=restarts, seed=seed, initial_designs=extra)

    def warm(model):
        return _best_randomised(randomised, rand_values, model, m)

    lnd = search(Model.LNM, warm(Model.LNM))
    nbd = search(Model.NBM, warm(Model.NBM) + [lnd.best_design])
    ev_l, ev_n = evaluators[Model.LNM], evaluators[Model.NBM]
    for _ in range(max_rounds):
        if ev_l.value(nbd.best_design.assignment - 1) < lnd.best_value - 1e-12 * abs(lnd.best_value):
            lnd = search(Model.LNM, warm(Model.LNM) + [nbd.best_design])
        elif ev_n.value(lnd.best_design.assignment - 1) < nbd.best_value - 1e-12 * abs(nbd.best_value):
            nbd = search(Model.NBM, warm(Model.NBM) + [lnd.best_design])
        else:
            break
    return {"LND": lnd, "NBD": nbd}


@dataclass
class EfficiencyDistribution:
    samples: np.ndarray
    reference: float
    family: str
    singular: int
    mode: str
    pen_missed_optimum: bool = False

    @property
    def summary(self) -> dict[str, float]:
        if self.samples.size == 0:
            return dict.fromkeys(("min", "q1", "median", "q3", "max"), math.nan)
        q = np.percentile(self.samples, [0, 25, 50, 75, 100])
        return dict(zip(("min", "q1", "median", "q3", "max"), map(float, q)))


def randomization_efficiency_study(
    net: Network,
    blocks: BlockPartition | None,
    m: int,
    model: ModelSpec | str,
    criterion: str = "phi1",
    count: int = 50_000,
    seed: int = 0,
    family: str = "crd",
    reference: SearchResult | float | None = None,
    sampler_mode: str = "auto",
    restarts: int = 20,
) -> EfficiencyDistribution:
    """L-efficiencies ``phi* / phi`` of balanced CRDs or RBDs under ``model``."""
    model = ModelSpec.parse(model)
    family = family.lower()
    if family not in ("crd", "rbd"):
        raise ValueError("family must be 'crd' or 'rbd'")
    if family == "rbd" and blocks is None:
        raise ValueError("RBD randomisation needs blocks")
    exhaustive_ref = False
    if reference is None:
        reference = find_optimal_design(net, blocks, m, model, criterion, restarts=restarts, seed=seed)
    if isinstance(reference, SearchResult):
        exhaustive_ref = reference.method == "exhaustive"
        phi_star = reference.best_value
    else:
        phi_star = float(reference)
    if not math.isfinite(phi_star) or phi_star <= 0:
        raise ValueError("reference criterion value unavailable")
    sampler = Sampler(sampler_mode, count, seed)
    designs, mode = sampler.designs(net.n, m, blocks if family == "rbd" else None)
    ev = CriterionEvaluator(net, blocks, m, model, criterion)
    values = ev.values(designs)
    finite = values[np.isfinite(values)]
    eff = phi_star / finite
    missed = bool(np.any(eff > 1 + 1e-10))
    if missed:
        msg = "a randomised design beats the reference optimum"
        if exhaustive_ref:
            raise ArithmeticError(msg + " found by exhaustive search")
        log.warning("%s; PEN missed the optimum (best ratio %.6g)", msg, eff.max())
    return EfficiencyDistribution(eff, phi_star, family, int(values.size - finite.size), mode, missed)
