"""Marginal-likelihood training.

A deliberately simple first-order scheme: resilient per-coordinate step
sizes driven by gradient signs, with monotone acceptance.  A proposal that
raises the objective is rejected and all steps shrink, so the accepted
objective sequence never increases and the returned model is never worse
than its initialization.  Restarts redraw delays, phases and task factors
around the same spectral initialization and keep the best run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import params as pv
from .gp import CholeskyError, TrainedModel, build_model, nlml
from .gradients import gradient
from .multitask import KernelSpec
from .spectral import InitConfig, rejitter

__all__ = ["TrainConfig", "optimize"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings; the defaults suit the desk-scale experiments."""

    max_iters: int = 200
    tol: float = 1e-6
    initial_step: float = 0.05
    step_grow: float = 1.2
    step_shrink: float = 0.5
    min_step: float = 1e-12
    max_step: float = 2.0
    max_consecutive_rejects: int = 30
    restarts: int = 3
    gradient_mode: str = "analytic"
    noise_mode: str = "shared"
    seed: int = 0
    noise_floor: float = 1e-5


def _run_descent(spec, dataset, vector, config):
    """Minimize nlml from one starting vector; returns (best_vec, best_f, evals)."""

    def objective(vec):
        s, ns = pv.unpack(spec, vec, config.noise_mode)
        return nlml(s, ns, dataset, config.noise_mode)

    def grad_at(vec):
        s, ns = pv.unpack(spec, vec, config.noise_mode)
        return gradient(s, ns, dataset, config.gradient_mode, config.noise_mode)

    # noise variances occupy the trailing slots; left unboxed they drag the
    # Gram matrix toward singularity on noise-free data
    n_noise = spec.m if config.noise_mode == "per_task" else 1
    log_floor = np.log(config.noise_floor) if config.noise_floor > 0 else -np.inf

    f = objective(vector)
    if config.max_iters == 0:
        return vector, f, 0
    g = grad_at(vector)
    steps = np.full_like(vector, config.initial_step)
    prev_sign = np.sign(g)
    rejects = 0
    evals = 0
    while evals < config.max_iters:
        proposal = vector - np.sign(g) * steps
        proposal[-n_noise:] = np.maximum(proposal[-n_noise:], log_floor)
        try:
            f_new = objective(proposal)
        except (CholeskyError, FloatingPointError):
            f_new = np.inf
        evals += 1
        if np.isfinite(f_new) and f_new <= f:
            improvement = f - f_new
            vector, f = proposal, f_new
            g = grad_at(vector)
            sign = np.sign(g)
            steps = np.where(sign * prev_sign > 0, steps * config.step_grow, steps)
            steps = np.where(sign * prev_sign < 0, steps * config.step_shrink, steps)
            steps = np.clip(steps, config.min_step, config.max_step)
            prev_sign = sign
            rejects = 0
            if improvement < config.tol:
                break
        else:
            steps *= config.step_shrink
            rejects += 1
            if rejects >= config.max_consecutive_rejects or steps.max() < config.min_step:
                break
    return vector, f, evals


def optimize(spec: KernelSpec, dataset, config: TrainConfig = TrainConfig(), noise=None,
             init_config: InitConfig = InitConfig()) -> TrainedModel:
    """Train a parameterized spec on the dataset's train points.

    ``spec`` must carry its initialization (see
    :func:`mtgp.spectral.init_hyperparams`).  With ``max_iters == 0`` the
    model is returned untouched.  The best restart wins; ties keep the
    earliest run, so results are deterministic.
    """
    if spec.params is None:
        raise ValueError("optimize needs an initialized spec")
    if noise is None:
        noise = np.full(spec.m if config.noise_mode == "per_task" else 1, 0.01)
    train = dataset.subset(train=True) if any(
        not np.all(t.train_mask) for t in dataset.tasks
    ) else dataset

    best = None
    seeds = np.random.SeedSequence(config.seed).generate_state(max(config.restarts, 1))
    for r in range(max(config.restarts, 1)):
        start_spec = spec if r == 0 else rejitter(spec, int(seeds[r]), init_config)
        vec0 = pv.pack(start_spec, noise, config.noise_mode)
        vec, f, evals = _run_descent(spec, train, vec0, config)
        log.info("restart %d: nlml %.4f after %d evaluations", r, f, evals)
        if best is None or f < best[1]:
            best = (vec, f)
    final_spec, final_noise = pv.unpack(spec, best[0], config.noise_mode)
    return build_model(final_spec, final_noise, train, config.noise_mode)
