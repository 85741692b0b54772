"""Contrast vectors, L-optimality criteria and efficiencies.

``phi1`` sums the variances of all pairwise treatment differences and
``phi2`` those of all pairwise network-effect differences, both as
``Tr(M^{-1} S S^T)``. The averaging constant ``2/(m(m-1))`` is left out; it
cancels in every efficiency ratio.

Index bookkeeping for models other than NBM
-------------------------------------------
The full parameter layout is ``mu, tau_1..tau_m, b_1..b_k, gamma_1..gamma_m``
(1-based positions). Models without blocks use ``k = 1`` so their single
block position is deleted along with ``tau_m``; models without network
effects simply have no gamma positions.

=====  ===============================  =================
model  full layout length               X columns
=====  ===============================  =================
CRM    m + 2                            m
RBM    m + k + 1                        m + k - 1
LNM    2m + 2                           2m  (2m-1 with gamma_m = 0)
NBM    2m + k + 1                       2m + k - 1 (one less with gamma_m = 0)
=====  ===============================  =================
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from netdex.graph import Network
from netdex.models import (
    RCOND_THRESHOLD,
    BlockPartition,
    Design,
    DesignMatrixError,
    InformationMatrix,
    Model,
    ModelSpec,
    ParameterLayout,
    block_columns,
    design_matrix_array,
    parameter_layout,
    scaled_eigh,
)


class Criterion(str, enum.Enum):
    PHI1 = "phi1"
    PHI2 = "phi2"
    CUSTOM = "custom"


class CriterionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContrastSet:
    S: np.ndarray
    description: str

    @property
    def L(self) -> np.ndarray:
        return self.S @ self.S.T


@dataclass(frozen=True)
class CriterionResult:
    value: float
    singular: bool
    criterion: str

    def __post_init__(self):
        if self.singular != (not math.isfinite(self.value)):
            raise ValueError("value must be finite exactly when the result is non-singular")


def contrast_vector(a1: int, a2: int, m: int, kappa: int) -> np.ndarray:
    """Contrast between 1-based full-layout positions ``a1`` (+1) and ``a2`` (-1).

    The full layout has ``2m + kappa + 1`` entries; positions ``m + 1`` (tau_m)
    and ``m + kappa + 1`` (b_kappa) are then deleted.

    >>> contrast_vector(2, 3, 2, 2)
    array([0., 1., 0., 0., 0.])
    >>> contrast_vector(6, 7, 2, 2)
    array([ 0.,  0.,  0.,  1., -1.])
    """
    size = 2 * m + kappa + 1
    if not 1 <= a1 < a2 <= size:
        raise IndexError(f"need 1 <= a1 < a2 <= {size}, got ({a1}, {a2})")
    full = np.zeros(size)
    full[a1 - 1] = 1.0
    full[a2 - 1] = -1.0
    return np.delete(full, [m, m + kappa])


def _layout_contrast(layout: ParameterLayout, plus: str, minus: str) -> np.ndarray:
    s = np.zeros(layout.p)
    i, j = layout.column_of(plus), layout.column_of(minus)
    if i is not None:
        s[i] = 1.0
    if j is not None:
        s[j] = -1.0
    return s


def contrast_set(layout: ParameterLayout, criterion: str | Criterion) -> ContrastSet:
    """Prebuilt contrasts for ``phi1`` (treatment pairs) or ``phi2`` (network pairs)."""
    criterion = Criterion(criterion)
    if criterion is Criterion.PHI1:
        labels = layout.tau_labels()
    elif criterion is Criterion.PHI2:
        if not layout.model.kind.has_network:
            raise CriterionError(f"network effects absent from {layout.model}; phi2 is undefined")
        labels = layout.gamma_labels()
    else:
        raise CriterionError("custom criteria need an explicit contrast matrix")
    cols = [_layout_contrast(layout, a, b) for a, b in itertools.combinations(labels, 2)]
    return ContrastSet(np.column_stack(cols), criterion.value)


def l_criterion(info: InformationMatrix, S: np.ndarray, criterion: str = "custom") -> CriterionResult:
    """``Tr(S^T M^{-1} S)``; singular information gives an infinite, flagged result."""
    if info.rank_deficient:
        return CriterionResult(math.inf, True, criterion)
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    value = float(np.einsum("ic,ij,jc->", S, info.Minv, S))
    return CriterionResult(value, False, criterion)


def _info_layout(info: InformationMatrix, m: int, kappa: int) -> ParameterLayout:
    if info.layout is not None:
        return info.layout
    layout = parameter_layout(ModelSpec(Model.NBM), m, kappa)
    if layout.p != info.M.shape[0]:
        raise CriterionError(
            f"information matrix is {info.M.shape[0]}x{info.M.shape[0]}, "
            f"expected {layout.p} for the NBM layout with m={m}, kappa={kappa}"
        )
    return layout


def phi1(info: InformationMatrix, m: int, kappa: int = 1) -> CriterionResult:
    layout = _info_layout(info, m, kappa)
    return l_criterion(info, contrast_set(layout, Criterion.PHI1).S, "phi1")


def phi2(info: InformationMatrix, m: int, kappa: int = 1) -> CriterionResult:
    layout = _info_layout(info, m, kappa)
    return l_criterion(info, contrast_set(layout, Criterion.PHI2).S, "phi2")


def relative_efficiency(phi_a: float, phi_b: float) -> float:
    """``phi_a / phi_b``; pass the optimum first to get an L-efficiency."""
    for x in (phi_a, phi_b):
        if not math.isfinite(x) or x <= 0:
            raise ValueError(f"efficiency needs finite positive criterion values, got {x}")
    return phi_a / phi_b


class CriterionEvaluator:
    """Evaluate one criterion for many designs on a fixed network/blocks/model.

    Designs are passed as 0-based treatment arrays (``labels - 1``), singly or
    as a ``(B, n)`` batch. Singular designs evaluate to ``inf``.
    """

    def __init__(
        self,
        net: Network | None,
        blocks: BlockPartition | None,
        m: int,
        model: ModelSpec | str,
        criterion: str | Criterion | np.ndarray = "phi1",
    ):
        self.model = ModelSpec.parse(model)
        kind = self.model.kind
        if kind.has_network and net is None:
            raise DesignMatrixError(f"{self.model} needs a Network")
        if kind.has_blocks and blocks is None:
            raise DesignMatrixError(f"{self.model} needs a BlockPartition")
        self.net = net
        self.blocks = blocks if kind.has_blocks else None
        self.m = m
        self.n = net.n if net is not None else blocks.n
        kappa = blocks.kappa if self.blocks is not None else 1
        self.layout = parameter_layout(self.model, m, kappa)
        if isinstance(criterion, np.ndarray):
            S = criterion if criterion.ndim == 2 else criterion[:, None]
            if S.shape[0] != self.layout.p:
                raise CriterionError(f"contrast matrix needs {self.layout.p} rows")
            self.contrasts = ContrastSet(np.asarray(S, float), "custom")
        else:
            self.contrasts = contrast_set(self.layout, criterion)
        self.criterion = self.contrasts.description
        self._A = net.adjacency.astype(float) if net is not None else None
        self._W = block_columns(self.blocks) if self.blocks is not None else None
        self._neighbours = (
            [np.flatnonzero(net.adjacency[j]) for j in range(net.n)] if net is not None else None
        )
        self.evaluations = 0

    @property
    def p(self) -> int:
        return self.layout.p

    def design_matrix(self, assign0: np.ndarray) -> np.ndarray:
        return design_matrix_array(assign0, self.m, self.model, self._A, self._W)

    def value_from_information(self, M: np.ndarray) -> np.ndarray | float:
        """Criterion value(s) from one or a stack of information matrices."""
        if M.ndim == 3 and M.shape[0] > 1:
            return self._stacked_values(M)
        vals = self.value_from_information_eigh(M)
        return float(vals) if np.ndim(vals) == 0 else vals

    def _stacked_values(self, M: np.ndarray) -> np.ndarray:
        # rcond >= 1 / (p * tr(C^-1)) for unit-diagonal C; only uncertain cases pay for eigh
        diag = np.diagonal(M, axis1=1, axis2=2)
        ok = np.all(diag > 0, axis=1)
        vals = np.full(M.shape[0], np.inf)
        if not ok.any():
            self.evaluations += M.shape[0]
            return vals
        idx = np.flatnonzero(ok)
        d = np.sqrt(diag[idx])
        C = M[idx] / (d[:, :, None] * d[:, None, :])
        try:
            Cinv = np.linalg.inv(C)
        except np.linalg.LinAlgError:
            Cinv = None
        if Cinv is not None:
            tr = np.trace(Cinv, axis1=1, axis2=2)
            certain = np.isfinite(tr) & (tr > 0) & (1.0 / (self.p * np.where(tr > 0, tr, 1.0)) >= RCOND_THRESHOLD)
            Sd = self.contrasts.S[None, :, :] / d[:, :, None]
            vals[idx[certain]] = np.einsum("bic,bij,bjc->b", Sd[certain], Cinv[certain], Sd[certain])
        else:
            certain = np.zeros(idx.size, dtype=bool)
        if not certain.all():
            rest = idx[~certain]
            sub = self.value_from_information_eigh(M[rest])
            vals[rest] = sub
        self.evaluations += M.shape[0] - (~certain).sum()
        return vals

    def value_from_information_eigh(self, M: np.ndarray) -> np.ndarray:
        d, w, V, rcond = scaled_eigh(M)
        S = self.contrasts.S
        T = np.swapaxes(V, -1, -2) @ (S / d[..., :, None])
        safe_w = np.where(w > 0, w, 1.0)
        vals = np.sum(T**2 / safe_w[..., :, None], axis=(-2, -1))
        vals = np.where(rcond < RCOND_THRESHOLD, np.inf, vals)
        self.evaluations += int(np.size(vals))
        return vals

    def value(self, assign0: np.ndarray) -> float:
        X = self.design_matrix(assign0)
        return self.value_from_information(X.T @ X)

    def values(self, batch: np.ndarray, chunk: int | None = None) -> np.ndarray:
        batch = np.asarray(batch)
        if batch.ndim == 1:
            batch = batch[None, :]
        if chunk is None:
            chunk = max(1, 4_000_000 // max(1, self.n * self.p))
        out = np.empty(batch.shape[0])
        for start in range(0, batch.shape[0], chunk):
            X = self.design_matrix(batch[start : start + chunk])
            M = np.swapaxes(X, -1, -2) @ X
            out[start : start + chunk] = self.value_from_information(M)
        return out

    def evaluate(self, design: Design) -> CriterionResult:
        v = self.value(design.assignment - 1)
        return CriterionResult(v, not math.isfinite(v), self.criterion)

    def changed_rows(self, j: int) -> np.ndarray:
        """Rows of X that move when unit ``j`` changes treatment."""
        if self._neighbours is None or not self.model.kind.has_network:
            return np.array([j])
        return np.concatenate(([j], self._neighbours[j]))
