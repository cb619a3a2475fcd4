"""Orthonormality penalty on the singular-vector factors.

The loss is ||u^T u - I||_F^2 + ||v^T v - I||_F^2 with the identity sized
r x r (the Gram matrices are r x r, so no other size is well-typed).  It
vanishes exactly when both factors have orthonormal columns, and its
gradient is 4 u (u^T u - I) per factor.  On the region ||u||_F <= m_u,
||v||_F <= m_v the loss is Lipschitz with constant
4 m_u (m_u^2 + 1) + 4 m_v (m_v^2 + 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import check_matrix, frobenius_norm


@dataclass(frozen=True)
class RegEval:
    """One evaluation of the penalty: value, factor gradients, and the
    Lipschitz certificate for the factor norms seen."""

    loss: float
    g_u: np.ndarray
    g_v: np.ndarray
    m_u: float
    m_v: float
    lipschitz_bound: float


def reg_loss(u_p: np.ndarray, v_p: np.ndarray) -> float:
    u_p = check_matrix(u_p, "u_p")
    v_p = check_matrix(v_p, "v_p")
    du = u_p.T @ u_p - np.eye(u_p.shape[1])
    dv = v_p.T @ v_p - np.eye(v_p.shape[1])
    return float(np.sum(du * du) + np.sum(dv * dv))


def reg_grad(u_p: np.ndarray, v_p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u_p = check_matrix(u_p, "u_p")
    v_p = check_matrix(v_p, "v_p")
    g_u = 4.0 * u_p @ (u_p.T @ u_p - np.eye(u_p.shape[1]))
    g_v = 4.0 * v_p @ (v_p.T @ v_p - np.eye(v_p.shape[1]))
    return g_u, g_v


def lipschitz_certificate(m_u: float, m_v: float) -> float:
    """Lipschitz constant of the penalty on the ball ||u||_F <= m_u, ||v||_F <= m_v."""
    if m_u < 0 or m_v < 0:
        raise ValueError("norm bounds must be non-negative")
    return 4.0 * m_u * (m_u * m_u + 1.0) + 4.0 * m_v * (m_v * m_v + 1.0)


def evaluate(u_p: np.ndarray, v_p: np.ndarray) -> RegEval:
    """Loss, gradients, and the certificate at the factors' own norms."""
    g_u, g_v = reg_grad(u_p, v_p)
    m_u = frobenius_norm(u_p)
    m_v = frobenius_norm(v_p)
    return RegEval(
        loss=reg_loss(u_p, v_p),
        g_u=g_u,
        g_v=g_v,
        m_u=m_u,
        m_v=m_v,
        lipschitz_bound=lipschitz_certificate(m_u, m_v),
    )
