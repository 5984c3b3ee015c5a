"""
Unconstrained parameterization of the variance components.

The random-effect covariance is written ``T = L L^T`` with ``L`` lower
triangular, positive diagonal stored as logs and the off-diagonal free
(log-Cholesky). Residual variances are stored as logs. Vector layout:

- random intercept: ``[log L00, log sigma0^2]``
- random slope: ``[log L00, L10, log L11, log sigma0^2, log sigma1^2]``
"""

import numpy as np

from lmm.likelihood import Evaluation


def unpack(theta: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, float, float | None]:
    """Map an unconstrained vector to ``(L, T, sigma0_sq, sigma1_sq)``."""
    if k == 1:
        L = np.array([[np.exp(theta[0])]])
        return L, L @ L.T, float(np.exp(theta[1])), None
    L = np.array([[np.exp(theta[0]), 0.0], [theta[1], np.exp(theta[2])]])
    return L, L @ L.T, float(np.exp(theta[3])), float(np.exp(theta[4]))


def pack(T: np.ndarray, sigma0_sq: float, sigma1_sq: float | None = None) -> np.ndarray:
    """Inverse of :func:`unpack`; ``T`` must be positive definite."""
    L = np.linalg.cholesky(np.atleast_2d(T))
    if L.shape == (1, 1):
        return np.array([np.log(L[0, 0]), np.log(sigma0_sq)])
    return np.array(
        [
            np.log(L[0, 0]),
            L[1, 0],
            np.log(L[1, 1]),
            np.log(sigma0_sq),
            np.log(sigma1_sq),
        ]
    )


def chain_gradient(
    evaluation: Evaluation, L: np.ndarray, sigma0_sq: float, sigma1_sq: float | None
) -> np.ndarray:
    """Gradient of the log-likelihood with respect to the unconstrained vector.

    For symmetric ``G = dl/dT`` the derivative with respect to ``L`` is
    ``2 G L`` (lower triangle); diagonal entries pick up the exp factor.
    """
    dL = 2.0 * evaluation.grad_T @ L
    if L.shape == (1, 1):
        return np.array(
            [dL[0, 0] * L[0, 0], evaluation.grad_sigma0_sq * sigma0_sq]
        )
    return np.array(
        [
            dL[0, 0] * L[0, 0],
            dL[1, 0],
            dL[1, 1] * L[1, 1],
            evaluation.grad_sigma0_sq * sigma0_sq,
            evaluation.grad_sigma1_sq * sigma1_sq,
        ]
    )
