"""Bayesian linear regression over trigonometric features.

With the feature scaling used by :mod:`sswim.features`, a standard-normal
prior on the weights makes the implied function prior an M-frequency
approximation of the base kernel, so this module is the exact inference core
for the sparse trigonometric model. Everything is phrased in terms of the
regularized feature Gram

    A = Phi^T Phi + noise_var * I          (Phi has one feature row per datum)

whose Cholesky factor backs all solves; no matrix is ever inverted
explicitly. Multiple output columns share one factorization and a single
noise variance, giving each output the same scalar predictive variance.

The negative log evidence uses the weight-space identity

    0.5 * (y.y - b.(A^-1 b)) / noise_var + 0.5 * log|A|
        - (F/2) * log(noise_var) + (N/2) * log(2 pi noise_var)

with b = Phi^T y and F the feature count, which equals the dense N x N
Gaussian log-density exactly (up to factorization round-off).

All functions accept plain numpy arrays or autodiff tensors, so the training
objective reuses them unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .features import SpectralBasis, feature_map


@dataclass
class SsgpPosterior:
    """Posterior over feature weights plus the terms evidence and refits reuse."""

    basis: SpectralBasis
    alpha: object  # (2M,) or (2M, P) posterior weight means A^-1 Phi^T Y
    A_factor: object  # (2M, 2M) lower Cholesky factor of the Gram, plain array
    noise_var: object  # observation noise variance
    gram: object  # (2M, 2M) the Gram A itself, kept for traced solves
    n_data: int
    sq_norm_y: object  # sum of squared targets
    proj_y: object  # (2M,) or (2M, P) b = Phi^T Y

    @property
    def n_outputs(self):
        shape = self.alpha.shape if isinstance(self.alpha, ad.Tensor) else np.shape(self.alpha)
        return 1 if len(shape) == 1 else shape[1]


def fit_from_features(basis, phi, y, noise_var) -> SsgpPosterior:
    """Condition the standard-normal weight prior on Y = Phi w + noise."""
    ad.check_finite(phi, "feature matrix")
    ad.check_finite(y, "targets")
    if not isinstance(noise_var, ad.Tensor) and noise_var <= 0:
        raise ValueError("noise_var must be strictly positive")
    n, n_feat = phi.shape
    y_shape = y.shape if isinstance(y, ad.Tensor) else np.shape(y)
    if len(y_shape) not in (1, 2) or y_shape[0] != n:
        raise ValueError(f"targets have shape {y_shape}, expected ({n},) or ({n}, P)")
    if basis is not None and n_feat != basis.n_features:
        raise ValueError(f"feature matrix has {n_feat} columns, basis provides {basis.n_features}")
    gram = ad.transpose(phi) @ phi + noise_var * np.eye(n_feat)
    # inf noise or amplitude slips past the phi check but poisons the factor
    ad.check_finite(gram, "feature Gram")
    proj = ad.transpose(phi) @ y
    alpha = ad.psd_solve(gram, proj)
    factor = ad.cholesky_cached(gram)
    sq_norm = ad.sum_(ad.multiply(y, y))
    return SsgpPosterior(basis, alpha, factor, noise_var, gram, n, sq_norm, proj)


def fit(basis: SpectralBasis, x, y, noise_var) -> SsgpPosterior:
    """Fit from raw inputs; targets may be (N,) or (N, P)."""
    y = y if isinstance(y, ad.Tensor) else np.asarray(y, dtype=float)
    return fit_from_features(basis, feature_map(basis, x), y, noise_var)


def posterior_nlml(post: SsgpPosterior):
    """Negative log evidence of the data the posterior was fitted on.

    For multi-column targets this is the sum over the independent outputs,
    which share the Gram and its determinant.
    """
    n_feat = post.proj_y.shape[0]
    quad = post.sq_norm_y - ad.sum_(ad.multiply(post.proj_y, post.alpha))
    per_output = (
        0.5 * ad.psd_logdet(post.gram)
        - 0.5 * n_feat * ad.log(post.noise_var)
        + 0.5 * post.n_data * ad.log(2.0 * np.pi * post.noise_var)
    )
    return 0.5 * quad / post.noise_var + post.n_outputs * per_output


def nlml(basis, phi_design, y, noise_var) -> float:
    """Negative log evidence of targets y under feature rows ``phi_design``."""
    return float(posterior_nlml(fit_from_features(basis, phi_design, np.asarray(y, dtype=float), noise_var)))


def predict(post: SsgpPosterior, feat, include_noise=False):
    """Predictive mean and variance at a feature vector or rows of them.

    The caller chooses the map: features of a point for deterministic inputs,
    expected features for Gaussian inputs. The variance is the latent one,
    noise_var * feat.(A^-1 feat), shared by all output columns; with
    ``include_noise`` the observation noise is added on.
    """
    mean = feat @ post.alpha
    sol = ad.psd_solve(post.gram, ad.transpose(feat))
    var = post.noise_var * ad.sum_(ad.multiply(feat, ad.transpose(sol)), axis=-1)
    if include_noise:
        var = var + post.noise_var
    return mean, var
