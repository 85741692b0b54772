"""Extended design matrices and information matrices for CRM, RBM, LNM and NBM.

Parameterisation uses set-last-to-zero constraints: the columns for the last
treatment effect and the last block effect are dropped, and optionally the
last network effect as well (needed for regular graphs).

Column order is always::

    intercept | tau_1..tau_{m-1} | b_1..b_{k-1} | gamma_1..gamma_m (or ..gamma_{m-1})
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from netdex.graph import Network

RCOND_THRESHOLD = 1e-12


class DesignMatrixError(ValueError):
    """Inputs cannot produce a design matrix for the requested model."""


class Model(str, enum.Enum):
    CRM = "crm"
    RBM = "rbm"
    LNM = "lnm"
    NBM = "nbm"

    @property
    def has_blocks(self) -> bool:
        return self in (Model.RBM, Model.NBM)

    @property
    def has_network(self) -> bool:
        return self in (Model.LNM, Model.NBM)

    @property
    def design_name(self) -> str:
        return {"crm": "CRD", "rbm": "RBD", "lnm": "LND", "nbm": "NBD"}[self.value]


@dataclass(frozen=True)
class ModelSpec:
    kind: Model
    gamma_constraint: bool = False

    def __post_init__(self):
        if not isinstance(self.kind, Model):
            object.__setattr__(self, "kind", Model(str(self.kind).lower()))

    @classmethod
    def parse(cls, name: str | Model | "ModelSpec", gamma_constraint: bool = False) -> "ModelSpec":
        if isinstance(name, ModelSpec):
            return name
        return cls(Model(name.lower() if isinstance(name, str) else name), gamma_constraint)

    def __str__(self) -> str:
        return self.kind.value.upper() + ("[gamma_m=0]" if self.gamma_constraint else "")


@dataclass(frozen=True, eq=False)
class Design:
    """Treatment labels ``1..m``, one per vertex in internal vertex order."""

    assignment: np.ndarray
    m: int

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64)
        if a.ndim != 1:
            raise DesignMatrixError("assignment must be one-dimensional")
        if self.m < 2:
            raise DesignMatrixError("need at least two treatments")
        if a.size and (a.min() < 1 or a.max() > self.m):
            raise DesignMatrixError(f"treatment labels must lie in 1..{self.m}")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def n(self) -> int:
        return self.assignment.size

    def replication(self) -> np.ndarray:
        return np.bincount(self.assignment - 1, minlength=self.m)

    def is_complete(self) -> bool:
        """Every treatment used at least once."""
        return bool(np.all(self.replication() > 0))

    def __eq__(self, other):
        return (
            isinstance(other, Design)
            and self.m == other.m
            and np.array_equal(self.assignment, other.assignment)
        )

    def __hash__(self):
        return hash((self.m, self.assignment.tobytes()))


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """Block labels ``1..kappa``, one per vertex."""

    labels: np.ndarray
    kappa: int = field(init=False)
    sizes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise DesignMatrixError("block labels must be a non-empty vector")
        kappa = int(labels.max())
        if labels.min() < 1:
            raise DesignMatrixError("block labels must start at 1")
        sizes = np.bincount(labels - 1, minlength=kappa)
        if np.any(sizes == 0):
            missing = [g + 1 for g in np.flatnonzero(sizes == 0)]
            raise DesignMatrixError(f"block labels are not surjective onto 1..{kappa}; missing {missing}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "sizes", sizes)

    @property
    def n(self) -> int:
        return self.labels.size

    @classmethod
    def single(cls, n: int) -> "BlockPartition":
        return cls(np.ones(n, dtype=np.int64))

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.labels == g)

    def __eq__(self, other):
        return isinstance(other, BlockPartition) and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class ParameterLayout:
    """Bookkeeping between the full (unconstrained) parameter vector and X's columns.

    ``full_labels`` follows ``mu, tau_1..tau_m, b_1..b_k, gamma_1..gamma_m``;
    models without blocks carry a single deleted ``b_1`` so the indexing matches
    the network-block model with ``k = 1``.
    """

    model: ModelSpec
    m: int
    kappa: int
    full_labels: tuple[str, ...]
    column_labels: tuple[str, ...]

    @property
    def p(self) -> int:
        return len(self.column_labels)

    def column_of(self, label: str) -> int | None:
        try:
            return self.column_labels.index(label)
        except ValueError:
            return None

    def full_index(self, label: str) -> int:
        """1-based position of ``label`` in the full layout."""
        return self.full_labels.index(label) + 1

    def tau_labels(self) -> list[str]:
        return [f"tau{s}" for s in range(1, self.m + 1)]

    def gamma_labels(self) -> list[str]:
        return [f"gamma{s}" for s in range(1, self.m + 1)] if self.model.kind.has_network else []


def parameter_layout(model: ModelSpec, m: int, kappa: int = 1) -> ParameterLayout:
    kind = model.kind
    k = kappa if kind.has_blocks else 1
    full = ["mu"] + [f"tau{s}" for s in range(1, m + 1)] + [f"b{g}" for g in range(1, k + 1)]
    if kind.has_network:
        full += [f"gamma{s}" for s in range(1, m + 1)]
    deleted = {f"tau{m}", f"b{k}"}
    if kind.has_network and model.gamma_constraint:
        deleted.add(f"gamma{m}")
    cols = tuple(lab for lab in full if lab not in deleted)
    return ParameterLayout(model, m, k, tuple(full), cols)


@dataclass(frozen=True, eq=False)
class ExtendedDesignMatrix:
    X: np.ndarray
    column_labels: tuple[str, ...]
    layout: ParameterLayout

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True, eq=False)
class InformationMatrix:
    M: np.ndarray
    rank_deficient: bool
    rcond: float
    Minv: np.ndarray | None
    layout: ParameterLayout | None = None


def _check_inputs(net, blocks, design, model):
    kind = model.kind
    if kind.has_network and net is None:
        raise DesignMatrixError(f"{model} needs a Network")
    if kind.has_blocks and blocks is None:
        raise DesignMatrixError(f"{model} needs a BlockPartition")
    n = design.n
    if net is not None and net.n != n:
        raise DesignMatrixError(f"design has {n} units but network has {net.n} vertices")
    if kind.has_blocks and blocks.n != n:
        raise DesignMatrixError(f"design has {n} units but block partition has {blocks.n}")


def block_columns(blocks: BlockPartition) -> np.ndarray:
    """Block incidence matrix with the last block's column removed."""
    W = np.zeros((blocks.n, blocks.kappa), dtype=float)
    W[np.arange(blocks.n), blocks.labels - 1] = 1.0
    return W[:, :-1]


def design_matrix_array(
    assign0: np.ndarray,
    m: int,
    model: ModelSpec,
    adjacency: np.ndarray | None,
    block_cols: np.ndarray | None,
) -> np.ndarray:
    """X for 0-based treatment labels ``assign0``; single design or a batch ``(B, n)``."""
    assign0 = np.asarray(assign0)
    U = (assign0[..., None] == np.arange(m)).astype(float)
    parts = [np.ones(assign0.shape + (1,)), U[..., : m - 1]]
    if model.kind.has_blocks and block_cols.shape[1]:
        parts.append(np.broadcast_to(block_cols, assign0.shape + (block_cols.shape[1],)))
    if model.kind.has_network:
        keep = m - 1 if model.gamma_constraint else m
        parts.append(np.matmul(adjacency.astype(float), U[..., :keep]))
    return np.concatenate(parts, axis=-1)


def build_design_matrix(
    net: Network | None,
    blocks: BlockPartition | None,
    design: Design,
    model: ModelSpec | str,
) -> ExtendedDesignMatrix:
    model = ModelSpec.parse(model)
    _check_inputs(net, blocks, design, model)
    kappa = blocks.kappa if (blocks is not None and model.kind.has_blocks) else 1
    layout = parameter_layout(model, design.m, kappa)
    X = design_matrix_array(
        design.assignment - 1,
        design.m,
        model,
        net.adjacency if net is not None else None,
        block_columns(blocks) if model.kind.has_blocks else None,
    )
    return ExtendedDesignMatrix(X, layout.column_labels, layout)


def scaled_eigh(M: np.ndarray):
    """Eigendecomposition of the unit-diagonal rescaling of ``M`` (single or stacked).

    Returns ``(d, w, V, rcond)`` with ``M = diag(d) V diag(w) V^T diag(d)``.
    Zero diagonal entries give ``rcond = 0``.
    """
    diag = np.diagonal(M, axis1=-2, axis2=-1)
    zero = np.any(diag <= 0, axis=-1)
    d = np.sqrt(np.where(diag > 0, diag, 1.0))
    C = M / (d[..., :, None] * d[..., None, :])
    w, V = np.linalg.eigh(C)
    top = w[..., -1]
    rcond = np.where(zero | (top <= 0), 0.0, w[..., 0] / np.where(top > 0, top, 1.0))
    return d, w, V, rcond


def information_matrix(X: ExtendedDesignMatrix | np.ndarray) -> InformationMatrix:
    """``M = X^T X`` with its inverse when the (scaled) reciprocal condition number allows."""
    layout = X.layout if isinstance(X, ExtendedDesignMatrix) else None
    Xa = X.X if isinstance(X, ExtendedDesignMatrix) else np.asarray(X, dtype=float)
    M = Xa.T @ Xa
    d, w, V, rcond = scaled_eigh(M)
    rcond = float(rcond)
    if rcond < RCOND_THRESHOLD:
        return InformationMatrix(M, True, rcond, None, layout)
    Cinv = (V / w) @ V.T
    Minv = Cinv / np.outer(d, d)
    Minv = (Minv + Minv.T) / 2
    return InformationMatrix(M, False, rcond, Minv, layout)


def parse_assignment(values: Sequence[int], m: int) -> Design:
    return Design(np.asarray(values, dtype=np.int64), m)
