"""Bias of least-squares estimators when a reduced model is fitted to data from a larger one.

For a true design matrix ``X_C`` and an assumed model that keeps the columns
``K`` and omits ``O``, the expected bias of the assumed-model estimator is
``W beta`` with::

    W[K, O] = B^{-1} Gamma,  B = X_K^T X_K,  Gamma = X_K^T X_O
    W[O, O] = -I
    (all other entries zero)

Omitted parameters are estimated as zero, hence the ``-I`` rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg

from netdex.graph import Network
from netdex.models import (
    RCOND_THRESHOLD,
    BlockPartition,
    Design,
    ModelSpec,
    block_columns,
    build_design_matrix,
    design_matrix_array,
    parameter_layout,
    scaled_eigh,
)
from netdex.randomization import Sampler

AGREEMENT_TOL = 1e-8


class NonNestedModelError(ValueError):
    def __init__(self, assumed, true_model):
        super().__init__(f"non-nested model: {assumed} vs true {true_model}")


class SingularReducedModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BiasMatrix:
    """``bias = W_coeff @ beta`` in the true model's parameter layout."""

    W_coeff: np.ndarray
    labels: tuple[str, ...]
    assumed: ModelSpec
    true_model: ModelSpec
    design: Design | None = None
    W_general: np.ndarray | None = field(default=None, repr=False)

    def bias(self, beta: np.ndarray) -> np.ndarray:
        return self.W_coeff @ np.asarray(beta, dtype=float)

    def row(self, label: str) -> np.ndarray:
        return self.W_coeff[self.labels.index(label)]


def _kappa(blocks: BlockPartition | None, *models: ModelSpec) -> int:
    # block columns exist whenever either model has them; RBM vs LNM must not collapse to CRM
    return blocks.kappa if blocks is not None and any(s.kind.has_blocks for s in models) else 1


def _nesting(assumed: ModelSpec, true_model: ModelSpec, m: int, kappa: int):
    true_labels = parameter_layout(true_model, m, kappa).column_labels
    assumed_labels = set(parameter_layout(assumed, m, kappa).column_labels)
    if assumed_labels <= set(true_labels):
        keep = [i for i, lab in enumerate(true_labels) if lab in assumed_labels]
        omit = [i for i, lab in enumerate(true_labels) if lab not in assumed_labels]
        return true_labels, keep, omit
    if set(true_labels) <= assumed_labels:
        return true_labels, None, None
    raise NonNestedModelError(assumed, true_model)


def _check_nonsingular(B: np.ndarray):
    *_, rcond = scaled_eigh(B)
    if rcond < RCOND_THRESHOLD:
        raise SingularReducedModelError("reduced-model information matrix B is singular for this design")


def closed_form_bias(X: np.ndarray, keep: list[int], omit: list[int]) -> np.ndarray:
    p = X.shape[1]
    XK, XO = X[:, keep], X[:, omit]
    B = XK.T @ XK
    _check_nonsingular(B)
    W = np.zeros((p, p))
    W[np.ix_(keep, omit)] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(B), XK.T @ XO)
    W[np.ix_(omit, omit)] = -np.eye(len(omit))
    return W


def generalized_inverse_bias(X: np.ndarray, keep: list[int], omit: list[int]) -> np.ndarray:
    """``(X_R^T X_R)^- X_R^T X_C - I`` with ``X_R`` the zero-padded reduced matrix.

    The generalised inverse is built by inverting the non-zero block of
    ``X_R^T X_R`` and re-embedding it, leaving zeros elsewhere.
    """
    p = X.shape[1]
    XR = X.copy()
    XR[:, omit] = 0.0
    Delta = XR.T @ XR
    G = np.zeros((p, p))
    G[np.ix_(keep, keep)] = np.linalg.inv(Delta[np.ix_(keep, keep)])
    return G @ XR.T @ X - np.eye(p)


def bias_matrix(
    net: Network | None,
    blocks: BlockPartition | None,
    design: Design,
    assumed: ModelSpec | str,
    true_model: ModelSpec | str,
) -> BiasMatrix:
    """Bias coefficient matrix, cross-checked between two computation routes."""
    true_model = ModelSpec.parse(true_model)
    assumed = ModelSpec.parse(assumed, true_model.gamma_constraint)
    labels, keep, omit = _nesting(assumed, true_model, design.m, _kappa(blocks, assumed, true_model))
    if keep is None or not omit:
        p = len(labels)
        return BiasMatrix(np.zeros((p, p)), labels, assumed, true_model, design, np.zeros((p, p)))
    X = build_design_matrix(net, blocks, design, true_model).X
    W = closed_form_bias(X, keep, omit)
    W2 = generalized_inverse_bias(X, keep, omit)
    if not np.allclose(W, W2, rtol=0, atol=AGREEMENT_TOL):
        raise ArithmeticError(
            f"bias routes disagree by {np.abs(W - W2).max():.3g} (> {AGREEMENT_TOL})"
        )
    return BiasMatrix(W, labels, assumed, true_model, design, W2)


@dataclass
class BatchBias:
    """Closed-form bias matrices for a batch of designs (singular ones dropped)."""

    W: np.ndarray
    designs: np.ndarray
    labels: tuple[str, ...]
    singular: int


def batch_bias(
    net: Network | None,
    blocks: BlockPartition | None,
    designs0: np.ndarray,
    m: int,
    assumed: ModelSpec,
    true_model: ModelSpec,
    chunk: int = 20000,
) -> BatchBias:
    assumed, true_model = ModelSpec.parse(assumed), ModelSpec.parse(true_model)
    labels, keep, omit = _nesting(assumed, true_model, m, _kappa(blocks, assumed, true_model))
    p = len(labels)
    designs0 = np.asarray(designs0)
    if keep is None or not omit:
        return BatchBias(np.zeros((designs0.shape[0], p, p)), designs0, labels, 0)
    A = net.adjacency if net is not None else None
    Wb = block_columns(blocks) if true_model.kind.has_blocks else None
    out, kept_designs, singular = [], [], 0
    for start in range(0, designs0.shape[0], chunk):
        part = designs0[start : start + chunk]
        X = design_matrix_array(part, m, true_model, A, Wb)
        XK, XO = X[..., keep], X[..., omit]
        B = np.swapaxes(XK, 1, 2) @ XK
        *_, rcond = scaled_eigh(B)
        ok = rcond >= RCOND_THRESHOLD
        singular += int((~ok).sum())
        G = np.swapaxes(XK, 1, 2) @ XO
        sol = np.linalg.solve(B[ok], G[ok])
        W = np.zeros((int(ok.sum()), p, p))
        W[:, np.array(keep)[:, None], np.array(omit)[None, :]] = sol
        W[:, np.array(omit)[:, None], np.array(omit)[None, :]] = -np.eye(len(omit))
        out.append(W)
        kept_designs.append(part[ok])
    return BatchBias(np.concatenate(out), np.concatenate(kept_designs), labels, singular)


@dataclass(frozen=True)
class AverageBias:
    W_mean: np.ndarray
    labels: tuple[str, ...]
    designs: int
    singular: int
    mode: str

    def row(self, label: str) -> np.ndarray:
        return self.W_mean[self.labels.index(label)]


def average_bias(
    net: Network | None,
    blocks: BlockPartition | None,
    assumed: ModelSpec | str,
    true_model: ModelSpec | str,
    m: int = 2,
    sampler: Sampler | None = None,
) -> AverageBias:
    """Mean bias matrix over the balanced randomisations of the assumed model.

    Designs are balanced within blocks when the assumed model has blocks,
    otherwise balanced overall.
    """
    true_model = ModelSpec.parse(true_model)
    assumed = ModelSpec.parse(assumed, true_model.gamma_constraint)
    sampler = sampler or Sampler()
    family_blocks = blocks if assumed.kind.has_blocks else None
    n = net.n if net is not None else blocks.n
    designs, mode = sampler.designs(n, m, family_blocks)
    bb = batch_bias(net, blocks, designs, m, assumed, true_model)
    if bb.W.shape[0] == 0:
        raise SingularReducedModelError("every sampled design is singular under the assumed model")
    return AverageBias(bb.W.mean(axis=0), bb.labels, bb.W.shape[0], bb.singular, mode)


def edges_between_treatments(net: Network, designs0: np.ndarray) -> np.ndarray:
    """``l12``: number of edges joining units with different treatments (per design)."""
    e = np.array(net.edges)
    designs0 = np.atleast_2d(designs0)
    return (designs0[:, e[:, 0]] != designs0[:, e[:, 1]]).sum(axis=1)


@dataclass(frozen=True)
class ProportionGroup:
    l12: int
    proportion: Fraction
    count: int
    mean_tau_bias: float
    q1: float
    median: float
    q3: float
    minimum: float
    maximum: float


@dataclass
class BiasStudy:
    groups: list[ProportionGroup]
    n_edges: int
    total: int
    singular: int
    mean_tau_bias: float
    mode: str
    l12: np.ndarray = field(repr=False)
    tau_bias: np.ndarray = field(repr=False)

    def nearest_half(self) -> list[ProportionGroup]:
        """Group(s) whose proportion is closest to one half."""
        gap = min(abs(g.proportion - Fraction(1, 2)) for g in self.groups)
        return [g for g in self.groups if abs(g.proportion - Fraction(1, 2)) == gap]


def bias_vs_edge_proportion(
    net: Network,
    blocks: BlockPartition | None,
    true_model: ModelSpec | str,
    sampler: Sampler | None = None,
    assumed: ModelSpec | str | None = None,
) -> BiasStudy:
    """Bias of the first treatment effect, with every network effect set to 1, grouped by ``l12 / l``.

    The assumed model defaults to RBM when blocks are given and CRM otherwise;
    designs are its balanced randomisations (two treatments).
    """
    m = 2
    true_model = ModelSpec.parse(true_model)
    if assumed is None:
        assumed = "rbm" if blocks is not None else "crm"
    assumed = ModelSpec.parse(assumed, true_model.gamma_constraint)
    if not true_model.kind.has_network:
        raise ValueError("the true model must contain network effects")
    sampler = sampler or Sampler()
    family_blocks = blocks if assumed.kind.has_blocks else None
    designs, mode = sampler.designs(net.n, m, family_blocks)
    bb = batch_bias(net, blocks, designs, m, assumed, true_model)
    labels = bb.labels
    tau = labels.index("tau1")
    gammas = [i for i, lab in enumerate(labels) if lab.startswith("gamma")]
    tau_bias = bb.W[:, tau, gammas].sum(axis=1)
    l12 = edges_between_treatments(net, bb.designs)
    groups = []
    for k in np.unique(l12):
        vals = tau_bias[l12 == k]
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        groups.append(
            ProportionGroup(
                l12=int(k),
                proportion=Fraction(int(k), net.n_edges),
                count=int(vals.size),
                mean_tau_bias=float(vals.mean()),
                q1=float(q1),
                median=float(med),
                q3=float(q3),
                minimum=float(vals.min()),
                maximum=float(vals.max()),
            )
        )
    mean = float(tau_bias.mean()) if tau_bias.size else math.nan
    return BiasStudy(groups, net.n_edges, int(tau_bias.size), bb.singular, mean, mode, l12, tau_bias)
