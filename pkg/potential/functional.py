"""Elementwise building blocks with their analytic derivatives."""

import numpy as np


def cosine_cutoff(d, cutoff_lower: float, cutoff_upper: float) -> np.ndarray:
    """Smooth envelope φ(d); zero at and beyond ``cutoff_upper``."""
    value, _ = cosine_cutoff_with_grad(d, cutoff_lower, cutoff_upper)
    return value


def cosine_cutoff_with_grad(d, cutoff_lower: float, cutoff_upper: float):
    d = np.asarray(d, dtype=np.float64)
    if cutoff_lower > 0:
        width = cutoff_upper - cutoff_lower
        inside = (d > cutoff_lower) & (d < cutoff_upper)
        phase = np.pi * (2.0 * (d - cutoff_lower) / width + 1.0)
        value = 0.5 * (np.cos(phase) + 1.0)
        grad = -0.5 * np.sin(phase) * (2.0 * np.pi / width)
    else:
        inside = d < cutoff_upper
        phase = np.pi * (d / cutoff_upper)
        value = 0.5 * (np.cos(phase) + 1.0)
        grad = -0.5 * np.sin(phase) * (np.pi / cutoff_upper)
    return np.where(inside, value, 0.0), np.where(inside, grad, 0.0)


def expnorm_init(num_rbf: int, cutoff_lower: float, cutoff_upper: float):
    """Initial (means, betas) of the expnorm basis."""
    start = np.exp(-(cutoff_upper - cutoff_lower))
    means = np.linspace(start, 1.0, num_rbf)
    betas = np.full(num_rbf, (2.0 / num_rbf * (1.0 - start)) ** -2)
    return means, betas


def rbf_expnorm(d, means, betas, cutoff_lower: float) -> np.ndarray:
    """f_k(d) = exp(-β_k (e^{r_l - d} - μ_k)²), shape (..., K)."""
    return rbf_expnorm_with_grads(d, means, betas, cutoff_lower)[0]


def rbf_expnorm_with_grads(d, means, betas, cutoff_lower: float):
    """Basis values and their derivatives w.r.t. d, means and betas."""
    d = np.asarray(d, dtype=np.float64)[..., None]
    t = np.exp(cutoff_lower - d)
    shifted = t - means
    value = np.exp(-betas * shifted**2)
    d_dist = 2.0 * betas * t * shifted * value
    d_means = 2.0 * betas * shifted * value
    d_betas = -(shifted**2) * value
    return value, d_dist, d_means, d_betas


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    return x * sigmoid(x)


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))
