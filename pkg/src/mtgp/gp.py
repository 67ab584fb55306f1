"""Exact Gaussian process inference over the multi-task kernels.

Everything here is dense: the full covariance over all task observations is
assembled, a Cholesky factor is taken (with an escalating jitter ladder when
the factorization fails), and the marginal likelihood, posterior predictions
and prior samples follow from triangular solves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .kernels import DimensionMismatchError
from .multitask import KernelSpec, assemble, block_value
from .kernels import _tau_array

__all__ = [
    "CholeskyError",
    "TrainedModel",
    "noise_vector",
    "chol_with_jitter",
    "nlml",
    "nlml_terms",
    "build_model",
    "predict",
    "predict_batch",
    "sample_prior",
]

log = logging.getLogger(__name__)

JITTER_START = 1e-8
JITTER_STOP = 1e-2
NOISE_MODES = ("shared", "per_task")

# predictive variances may dip this far below zero before we call the
# kernel broken rather than clamping
VARIANCE_FLOOR = -1e-10


class CholeskyError(RuntimeError):
    """Covariance stayed indefinite through the whole jitter ladder."""


def noise_vector(noise, noise_mode: str, sizes) -> np.ndarray:
    """Per-observation noise variances for task block sizes ``sizes``."""
    if noise_mode not in NOISE_MODES:
        raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
    noise = np.atleast_1d(np.asarray(noise, dtype=float))
    if np.any(noise <= 0):
        raise ValueError("noise variances must be positive")
    if noise_mode == "shared":
        if noise.shape != (1,):
            raise DimensionMismatchError("shared noise takes a single variance")
        return np.full(int(sum(sizes)), noise[0])
    if noise.shape != (len(sizes),):
        raise DimensionMismatchError(f"per-task noise needs {len(sizes)} variances")
    return np.repeat(noise, sizes)


def chol_with_jitter(k: np.ndarray):
    """Lower Cholesky factor of k, adding diagonal jitter only if needed.

    The ladder starts at 1e-8 times the mean diagonal and escalates tenfold
    up to 1e-2 times the mean diagonal; every escalation is logged.  Returns
    (factor, jitter_added).
    """
    scale = float(np.mean(np.diag(k)))
    jitter = 0.0
    tried = []
    while True:
        try:
            shifted = k if jitter == 0.0 else k + jitter * np.eye(k.shape[0])
            return linalg.cholesky(shifted, lower=True), jitter
        except linalg.LinAlgError:
            tried.append(jitter)
            jitter = JITTER_START * scale if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_STOP * scale:
                raise CholeskyError(
                    f"covariance not positive definite; attempted jitters {tried}"
                ) from None
            log.warning("cholesky failed, escalating jitter to %.3e", jitter)


def _stack_train(dataset):
    xs, ys, sizes = [], [], []
    for task in dataset.tasks:
        xs.append(np.asarray(task.x, dtype=float))
        ys.append(np.asarray(task.y, dtype=float))
        sizes.append(len(task.y))
    return xs, np.concatenate(ys), sizes


@dataclass
class TrainedModel:
    """A spec bound to training data with cached Cholesky state."""

    spec: KernelSpec
    noise: np.ndarray
    noise_mode: str
    dataset: object
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float
    nlml: float


def _nlml_pieces(spec, noise, dataset, noise_mode):
    xs, y, sizes = _stack_train(dataset)
    k = assemble(spec, xs)
    ky = k + np.diag(noise_vector(noise, noise_mode, sizes))
    chol, jitter = chol_with_jitter(ky)
    alpha = linalg.cho_solve((chol, True), y)
    fit = 0.5 * float(y @ alpha)
    penalty = float(np.sum(np.log(np.diag(chol))))
    const = 0.5 * len(y) * math.log(2.0 * math.pi)
    return fit, penalty, const, chol, alpha, jitter


def nlml_terms(spec, noise, dataset, noise_mode="shared"):
    """The three terms of the negative log marginal likelihood.

    Returns (data_fit, complexity, constant): half the Mahalanobis norm of
    the targets, half the log determinant, and the N/2 log 2 pi constant.
    Their sum is :func:`nlml`.
    """
    fit, penalty, const, _, _, _ = _nlml_pieces(spec, noise, dataset, noise_mode)
    return fit, penalty, const


def nlml(spec, noise, dataset, noise_mode="shared") -> float:
    """Negative log marginal likelihood of the dataset under the spec."""
    fit, penalty, const, _, _, _ = _nlml_pieces(spec, noise, dataset, noise_mode)
    return fit + penalty + const


def build_model(spec, noise, dataset, noise_mode="shared") -> TrainedModel:
    """Condition the kernel on the dataset and cache the solve state."""
    fit, penalty, const, chol, alpha, jitter = _nlml_pieces(spec, noise, dataset, noise_mode)
    return TrainedModel(
        spec=spec,
        noise=np.atleast_1d(np.asarray(noise, dtype=float)),
        noise_mode=noise_mode,
        dataset=dataset,
        chol=chol,
        alpha=alpha,
        jitter=jitter,
        nlml=fit + penalty + const,
    )


def predict_batch(model: TrainedModel, x_star, tasks):
    """Posterior mean and variance at new points.

    ``x_star`` holds the query locations, ``tasks`` the task index of each
    query.  Variances are for the latent function (no observation noise).
    """
    spec = model.spec
    x_star = np.asarray(x_star, dtype=float)
    tasks = np.asarray(tasks, dtype=int)
    if x_star.shape[0] != tasks.shape[0]:
        raise DimensionMismatchError("one task index per query point required")
    if tasks.size and (tasks.min() < 0 or tasks.max() >= spec.m):
        raise IndexError("task index out of range")
    xs, _, _ = _stack_train(model.dataset)

    star = _tau_array(x_star, spec.p)
    if star.ndim == 1:
        star = star[np.newaxis, :]
    cross = np.empty((star.shape[0], model.alpha.shape[0]))
    col = 0
    for n, xn in enumerate(xs):
        xn2 = xn[:, np.newaxis] if xn.ndim == 1 else xn
        tau = star[:, np.newaxis, :] - xn2[np.newaxis, :, :]
        for m in range(spec.m):
            rows = tasks == m
            if np.any(rows):
                cross[rows, col:col + len(xn)] = block_value(spec, tau[rows], m, n)
        col += len(xn)

    mean = cross @ model.alpha
    solved = linalg.cho_solve((model.chol, True), cross.T)
    prior = np.array([block_value(spec, np.zeros(spec.p), m, m) for m in tasks])
    var = prior - np.sum(cross * solved.T, axis=1)
    bad = var < VARIANCE_FLOOR
    if np.any(bad):
        raise CholeskyError(
            f"predictive variance fell to {var[bad].min():.3e}; kernel is inconsistent"
        )
    clipped = (var < 0.0) & ~bad
    if np.any(clipped):
        log.info("clamping %d slightly negative predictive variances", int(clipped.sum()))
        var = np.where(clipped, 0.0, var)
    return mean, var


def predict(model: TrainedModel, x_star, task: int):
    """Posterior mean and variance at a single point on one task."""
    mean, var = predict_batch(model, np.atleast_1d(np.asarray(x_star, dtype=float))[:1], [task])
    return float(mean[0]), float(var[0])


def sample_prior(spec: KernelSpec, x_by_task, seed: int) -> np.ndarray:
    """One draw from the zero-mean prior over all task inputs, concatenated."""
    k = assemble(spec, x_by_task)
    chol, _ = chol_with_jitter(k + 1e-10 * np.mean(np.diag(k)) * np.eye(k.shape[0]))
    rng = np.random.default_rng(seed)
    return chol @ rng.standard_normal(k.shape[0])
