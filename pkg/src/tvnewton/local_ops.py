"""Pointwise algebra of the regularized TV term.

All functions accept a single 2-vector or a stack of shape ``(..., 2)`` and
broadcast over the leading axes.
"""

import numpy as np

BETA_MIN = 1e-14


def _check_beta(beta):
    if not beta >= BETA_MIN:
        raise ValueError(f"beta must be >= {BETA_MIN}, got {beta!r}")


def beta_norm(x, beta):
    """sqrt(|x|^2 + beta)."""
    _check_beta(beta)
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(x * x, axis=-1) + beta)


def _sym(a11, a12, a22):
    out = np.empty(np.shape(a11) + (2, 2))
    out[..., 0, 0] = a11
    out[..., 0, 1] = a12
    out[..., 1, 0] = a12
    out[..., 1, 1] = a22
    return out


def h_matrix(r, beta):
    """Newton matrix H(r) = (I - r r^T / |r|_b^2) / |r|_b.

    Symmetric positive definite with spectrum in
    [beta / |r|_b^3, 1 / |r|_b].
    """
    r = np.asarray(r, dtype=float)
    nb = beta_norm(r, beta)
    nb3 = nb**3
    r1, r2 = r[..., 0], r[..., 1]
    # (|r|^2 + beta - r1^2) = r2^2 + beta avoids cancellation for large |r|
    return _sym((r2 * r2 + beta) / nb3, -r1 * r2 / nb3, (r1 * r1 + beta) / nb3)


def h_matrix_inverse(r, beta):
    """Closed-form inverse |r|_b (I + r r^T / beta) of :func:`h_matrix`."""
    r = np.asarray(r, dtype=float)
    nb = beta_norm(r, beta)
    r1, r2 = r[..., 0], r[..., 1]
    s = nb / beta
    return _sym(nb + s * r1 * r1, s * r1 * r2, nb + s * r2 * r2)


def h_hat(r, beta):
    """Lagged-diffusivity scalar 1 / |r|_b used by the Picard iteration."""
    return 1.0 / beta_norm(r, beta)


def h_eigenvalue_bounds(r, beta):
    """Lower and upper bounds beta/|r|_b^3 and 1/|r|_b on the spectrum of H(r)."""
    nb = beta_norm(r, beta)
    return beta / nb**3, 1.0 / nb
