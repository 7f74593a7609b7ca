"""Graph mask convolution (GmC) layer and the baseline GCN layer.

A GmC layer alternates, for ``outer_iters`` rounds, between solving the
neighbor mask from the current representation and running ``agg_iters``
steps of the masked random-walk recursion

    U <- alpha (M * A_hat) U + (1 - alpha) H,

and finally returns ``sigma(U Theta)``. Masks are discrete, so gradients
treat them as constants recorded on a :class:`PropagationTape`; with masks
frozen the layer is affine in ``H`` and the backward pass is its exact
adjoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dense import LayerParams, relu, relu_grad
from .errors import NumericError, ValidationError
from .graph import SparseAdjacency
from .mask import MaskSolverConfig, solve_mask

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class PropagationConfig:
    alpha: float = 0.8
    outer_iters: int = 4
    agg_iters: int = 3
    mask_cfg: MaskSolverConfig = field(default_factory=MaskSolverConfig)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.outer_iters < 1 or self.agg_iters < 1:
            raise ValidationError("outer_iters and agg_iters must be >= 1")

    @property
    def inner_iters(self) -> int:
        return self.mask_cfg.inner_iters

    @property
    def mu(self) -> float:
        """Fidelity weight of the equivalent regularization problem."""
        return 1.0 / self.alpha - 1.0


@dataclass
class PropagationTape:
    """State of one GmC forward pass needed by :func:`gmc_backward`.

    ``operators`` holds the K frozen aggregation matrices ``M_k * A_hat``
    and ``masks`` the binary masks they came from. Only the final
    representation is stored: with the masks frozen the recursion is linear
    and its adjoint needs no intermediate states.
    """

    masks: list[sp.csr_matrix]
    operators: list[sp.csr_matrix]
    alpha: float
    agg_iters: int
    u: np.ndarray
    support: int = 0
    pre_activation: np.ndarray | None = None
    activation: str = "identity"

    @property
    def n(self) -> int:
        return self.u.shape[0]

    def mask_density(self, k: int = -1) -> float:
        """Fraction of graph edges kept by the mask of outer round ``k``."""
        if self.support == 0:
            return 0.0
        return self.masks[k].nnz / self.support


def _weights(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, LayerParams) else np.asarray(theta, dtype=np.float64)


def _csr(a_hat) -> sp.csr_matrix:
    return a_hat.matrix if isinstance(a_hat, SparseAdjacency) else sp.csr_matrix(a_hat)


def masked_operator(mask, a_hat) -> sp.csr_matrix:
    """``M * A_hat`` (elementwise) as a CSR matrix."""
    a = _csr(a_hat)
    if mask.shape != a.shape:
        raise ValidationError(f"mask shape {mask.shape} != graph shape {a.shape}")
    if sp.issparse(mask):
        op = sp.csr_matrix(a.multiply(mask))
    else:
        op = sp.csr_matrix(a.multiply(np.asarray(mask, dtype=np.float64)))
    op.eliminate_zeros()
    return op


def _aggregate_op(op: sp.csr_matrix, h: np.ndarray, u0: np.ndarray, alpha: float, t_steps: int) -> np.ndarray:
    base = (1.0 - alpha) * h
    u = u0
    for _ in range(t_steps):
        u = alpha * (op @ u) + base
    return u


def aggregate(mask, a_hat, h: np.ndarray, u0: np.ndarray, alpha: float, t_steps: int) -> np.ndarray:
    """``t_steps`` iterations of ``U <- alpha (M * A_hat) U + (1 - alpha) H`` from ``u0``."""
    h = np.asarray(h, dtype=np.float64)
    u0 = np.asarray(u0, dtype=np.float64)
    if h.ndim != 2 or h.shape != u0.shape:
        raise ValidationError(f"h {h.shape} and u0 {u0.shape} must have the same 2-d shape")
    if h.shape[0] != _csr(a_hat).shape[0]:
        raise ValidationError("feature rows do not match the graph size")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    if t_steps < 1:
        raise ValidationError("t_steps must be >= 1")
    return _aggregate_op(masked_operator(mask, a_hat), h, u0, alpha, t_steps)


def gmc_propagate(h, a_hat, cfg: PropagationConfig, masks=None, scratch=None) -> tuple[np.ndarray, PropagationTape]:
    """Aggregation half of a GmC layer (everything before ``U Theta``).

    ``masks`` replays a fixed sequence of K masks instead of solving them;
    this is how gradients are checked with the masks frozen. ``scratch`` is
    an optional n x n buffer reused by the mask solver.
    """
    h = np.asarray(h, dtype=np.float64)
    a = _csr(a_hat)
    if h.ndim != 2 or h.shape[0] != a.shape[0]:
        raise ValidationError(f"features {h.shape} do not match a graph on {a.shape[0]} nodes")
    if masks is not None and len(masks) != cfg.outer_iters:
        raise ValidationError(f"expected {cfg.outer_iters} masks, got {len(masks)}")
    u = h
    used_masks, operators = [], []
    for k in range(cfg.outer_iters):
        if masks is None:
            mask = solve_mask(a, u, cfg.mask_cfg, scratch=scratch)
        else:
            mask = sp.csr_matrix(masks[k])
        op = masked_operator(mask, a)
        u = _aggregate_op(op, h, u, cfg.alpha, cfg.agg_iters)
        if not np.all(np.isfinite(u)):
            raise NumericError(f"non-finite representation at outer iteration {k + 1}")
        used_masks.append(mask)
        operators.append(op)
    return u, PropagationTape(used_masks, operators, cfg.alpha, cfg.agg_iters, u, support=a.nnz)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return relu(z)
    if activation == "identity":
        return z
    raise ValidationError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")


def _activation_grad(z: np.ndarray, d_out: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return d_out * relu_grad(z)
    return d_out


def transform(u: np.ndarray, theta, activation: str, tape: PropagationTape | None = None) -> np.ndarray:
    w = _weights(theta)
    if u.shape[1] != w.shape[0]:
        raise ValidationError(f"representation width {u.shape[1]} != weight rows {w.shape[0]}")
    z = u @ w
    if tape is not None:
        tape.pre_activation = z
        tape.activation = activation
    return _activate(z, activation)


def gmc_forward(
    h,
    a_hat,
    theta,
    cfg: PropagationConfig,
    activation: str = "relu",
    masks=None,
    scratch=None,
) -> tuple[np.ndarray, PropagationTape]:
    """Full GmC layer: K rounds of mask solve + T-step aggregation, then ``sigma(U Theta)``."""
    w = _weights(theta)
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or w.shape[0] != h.shape[1]:
        raise ValidationError(f"weight {w.shape} does not fit features {h.shape}")
    u, tape = gmc_propagate(h, a_hat, cfg, masks=masks, scratch=scratch)
    out = transform(u, w, activation, tape)
    return out, tape


def propagate_backward(tape: PropagationTape, d_u: np.ndarray) -> np.ndarray:
    """Adjoint of the frozen-mask aggregation: gradient w.r.t. the layer input."""
    if d_u.shape != tape.u.shape:
        raise ValidationError(f"gradient {d_u.shape} does not match tape {tape.u.shape}")
    alpha, c = tape.alpha, 1.0 - tape.alpha
    d_h = np.zeros_like(d_u)
    g = d_u
    for op in reversed(tape.operators):
        op_t = op.T.tocsr()
        for _ in range(tape.agg_iters):
            d_h += c * g
            g = alpha * (op_t @ g)
    # what remains flows into U^(0) = H of the first outer round
    d_h += g
    return d_h


def gmc_backward(tape: PropagationTape, a_hat, theta, d_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients ``(d_h, d_theta)`` of a GmC layer with its masks held fixed.

    ``a_hat`` is accepted for interface symmetry; the frozen operators on
    the tape already carry it.
    """
    w = _weights(theta)
    if tape.pre_activation is None:
        raise ValidationError("tape has no recorded activation; run gmc_forward first")
    if d_out.shape != tape.pre_activation.shape:
        raise ValidationError(f"d_out {d_out.shape} != layer output {tape.pre_activation.shape}")
    if a_hat is not None and _csr(a_hat).shape[0] != tape.n:
        raise ValidationError("graph size does not match the tape")
    d_z = _activation_grad(tape.pre_activation, d_out, tape.activation)
    d_theta = tape.u.T @ d_z
    d_h = propagate_backward(tape, d_z @ w.T)
    return d_h, d_theta


def gcn_aggregate(h, a_hat) -> np.ndarray:
    """``(A_hat + I) H``."""
    a = _csr(a_hat)
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != a.shape[0]:
        raise ValidationError(f"features {h.shape} do not match a graph on {a.shape[0]} nodes")
    return a @ h + h


def gcn_forward(h, a_hat, theta, activation: str = "relu") -> np.ndarray:
    """Baseline GCN layer ``sigma((A_hat + I) H Theta)``."""
    w = _weights(theta)
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or w.shape[0] != h.shape[1]:
        raise ValidationError(f"weight {w.shape} does not fit features {h.shape}")
    return _activate(gcn_aggregate(h, a_hat) @ w, activation)


def gcn_backward(u: np.ndarray, pre_activation: np.ndarray, a_hat, theta, d_out, activation="relu"):
    """Gradients ``(d_h, d_theta)`` of :func:`gcn_forward` given its aggregated input ``u``."""
    w = _weights(theta)
    d_z = _activation_grad(pre_activation, d_out, activation)
    d_theta = u.T @ d_z
    d_u = d_z @ w.T
    a = _csr(a_hat)
    return a.T @ d_u + d_u, d_theta
