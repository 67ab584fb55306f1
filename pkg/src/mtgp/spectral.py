"""Spectral-density-driven hyperparameter initialization.

Training spectral kernels from arbitrary starting points tends to stall in
poor local optima, so all families here start from the data's empirical
spectrum: a one-sided periodogram per task, averaged, then summarized by a
power-weighted Gaussian mixture whose peaks seed the spectral means and
variances.  Weights are rescaled to the target variance, delays and phases
start near zero, task factors start near the identity.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .kernels import BaselineKernelParams, ComponentParams
from .multitask import (
    CSM,
    GCSM_C,
    GCSM_CC,
    MATERN_LMC,
    MOSM,
    SE_LMC,
    SM_LMC,
    CoregionalizationSet,
    CSMParams,
    GCSMCCParams,
    GCSMCParams,
    KernelSpec,
    LMCParams,
    MOSMParams,
    SMLMCParams,
)

__all__ = [
    "GridError",
    "GmmError",
    "Spectrum",
    "GaussianMixture",
    "InitConfig",
    "periodogram",
    "empirical_spectrum",
    "resample_uniform",
    "fit_gmm",
    "init_hyperparams",
    "initial_noise",
    "rejitter",
]

log = logging.getLogger(__name__)


class GridError(ValueError):
    """Series is not on a uniform grid and resampling was not requested."""


class GmmError(RuntimeError):
    """Mixture fit kept collapsing across all restart attempts."""


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectrum; total power equals the series variance."""

    frequencies: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        p = np.asarray(self.power, dtype=float)
        if f.shape != p.shape or f.ndim != 1:
            raise ValueError("frequencies and power must be equal-length vectors")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if np.any(p < 0):
            raise ValueError("power must be nonnegative")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "power", p)


@dataclass(frozen=True)
class GaussianMixture:
    """A fitted 1-d mixture, components sorted by mean."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik: float
    n_iter: int
    converged: bool


@dataclass(frozen=True)
class InitConfig:
    """Knobs of the initialization; defaults follow the experiments."""

    gmm_tol: float = 1e-8
    gmm_max_iters: int = 500
    gmm_min_variance: float = 1e-10
    gmm_max_restarts: int = 5
    delay_halfwidth: float = 0.5
    phase_halfwidth: float = math.pi / 4.0
    factor_scale: float = 0.1
    diag_offset: float = 1.0
    pooled: bool = False
    noise_fraction: float = 0.01


def periodogram(y, dt: float) -> Spectrum:
    """One-sided periodogram at frequencies k / (N dt), k = 1 .. N // 2.

    The input mean is removed; power is normalized so the one-sided total
    equals the biased variance of the series (discrete Parseval identity).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] < 8:
        raise ValueError("periodogram needs a 1-d series of at least 8 samples")
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = y.shape[0]
    coeffs = np.fft.rfft(y - y.mean())
    half = n // 2
    power = np.abs(coeffs[1:half + 1]) ** 2 / n**2
    scale = np.full(half, 2.0)
    if n % 2 == 0:
        scale[-1] = 1.0  # Nyquist bin has no mirror
    freqs = np.arange(1, half + 1) / (n * dt)
    return Spectrum(freqs, scale * power)


def resample_uniform(x, y, rtol: float = 1e-8):
    """Linear interpolation onto a uniform grid spanning the same range.

    Returns (y_uniform, dt, moved_fraction) where moved_fraction is the
    share of grid points that did not coincide with an original sample.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    grid = np.linspace(x[0], x[-1], n)
    yu = np.interp(grid, x, y)
    span = x[-1] - x[0]
    moved = float(np.mean(~np.isclose(grid, x, rtol=0.0, atol=rtol * max(span, 1.0))))
    return yu, grid[1] - grid[0], moved


def _is_uniform(x, rtol: float = 1e-8) -> bool:
    steps = np.diff(x)
    return bool(np.all(np.abs(steps - steps[0]) <= rtol * max(abs(steps[0]), 1e-300)))


def empirical_spectrum(x, y, resample: bool = False) -> Spectrum:
    """Periodogram of a possibly non-uniform series.

    Refuses gapped input unless ``resample`` is set, in which case the
    series is first interpolated onto a uniform grid of the same length.
    """
    x = np.asarray(x, dtype=float)
    if _is_uniform(x):
        return periodogram(np.asarray(y, dtype=float), float(x[1] - x[0]))
    if not resample:
        raise GridError("series is not uniformly sampled; pass resample=True to interpolate")
    yu, dt, moved = resample_uniform(x, y)
    log.info("resampled non-uniform series onto a uniform grid (%.1f%% interpolated)", 100 * moved)
    return periodogram(yu, dt)


def _weighted_em(samples, weights, q, rng, tol, max_iters, min_variance):
    """One weighted EM run; returns (w, mu, var, ll, iters, converged) or None."""
    total = weights.sum()
    probs = weights / total
    if len(samples) >= q:
        mu = rng.choice(samples, size=q, replace=False, p=probs)
    else:
        mu = rng.choice(samples, size=q, replace=True, p=probs)
    span = samples.max() - samples.min()
    var = np.full(q, max((span / (2.0 * q)) ** 2, min_variance))
    w = np.full(q, 1.0 / q)

    prev = -np.inf
    for it in range(1, max_iters + 1):
        # E step in log space: responsibilities of each component per sample
        logp = (
            np.log(w)[:, None]
            - 0.5 * np.log(2.0 * np.pi * var)[:, None]
            - 0.5 * (samples[None, :] - mu[:, None]) ** 2 / var[:, None]
        )
        top = logp.max(axis=0)
        norm = top + np.log(np.exp(logp - top).sum(axis=0))
        resp = np.exp(logp - norm)
        ll = float(np.sum(weights * norm))

        mass = resp @ weights
        if np.any(mass <= 1e-12 * total):
            return None  # starved component, caller restarts
        w = mass / total
        mu = (resp * samples) @ weights / mass
        var = (resp * (samples[None, :] - mu[:, None]) ** 2) @ weights / mass
        var = np.maximum(var, min_variance)

        if ll - prev < tol and it > 1:
            return w, mu, var, ll, it, True
        prev = ll
    return w, mu, var, prev, max_iters, False


def fit_gmm(spectrum: Spectrum, q: int, seed: int, config: InitConfig = InitConfig()) -> GaussianMixture:
    """Power-weighted Gaussian mixture over the spectrum's frequency axis.

    Deterministic for a given seed.  A run that starves a component is
    restarted with a fresh derived seed, up to the configured limit.
    """
    if q < 1:
        raise ValueError("need at least one mixture component")
    keep = spectrum.power > 0
    samples = spectrum.frequencies[keep]
    weights = spectrum.power[keep]
    if samples.size == 0:
        raise GmmError("spectrum carries no power")
    streams = np.random.SeedSequence(seed).spawn(config.gmm_max_restarts + 1)
    for attempt, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        out = _weighted_em(
            samples, weights, q, rng, config.gmm_tol, config.gmm_max_iters, config.gmm_min_variance
        )
        if out is not None:
            w, mu, var, ll, iters, converged = out
            order = np.argsort(mu)
            return GaussianMixture(w[order], mu[order], var[order], ll, iters, converged)
        log.warning("mixture fit collapsed, restart %d", attempt + 1)
    raise GmmError(f"mixture fit collapsed in all {len(streams)} attempts")


def _averaged_spectrum(dataset, config: InitConfig) -> Spectrum:
    spectra = [empirical_spectrum(t.x, t.y, resample=True) for t in dataset.tasks]
    if config.pooled:
        freqs = np.concatenate([s.frequencies for s in spectra])
        power = np.concatenate([s.power for s in spectra])
        order = np.argsort(freqs)
        freqs, power = freqs[order], power[order]
        # merge duplicate frequencies so the grid stays strictly increasing
        uniq, inv = np.unique(freqs, return_inverse=True)
        merged = np.zeros_like(uniq)
        np.add.at(merged, inv, power)
        return Spectrum(uniq, merged)
    base = spectra[0]
    power = base.power.copy()
    for s in spectra[1:]:
        power += np.interp(base.frequencies, s.frequencies, s.power, left=0.0, right=0.0)
    return Spectrum(base.frequencies, power / len(spectra))


def _draw_factor(m: int, rng, config: InitConfig) -> np.ndarray:
    c = np.tril(config.factor_scale * rng.standard_normal((m, m)))
    c[np.diag_indices(m)] += config.diag_offset
    return c


def _draw_components(gmm, q, p, total_var, rng, config, with_delays) -> tuple:
    comps = []
    for i in range(q):
        delay = rng.uniform(-config.delay_halfwidth, config.delay_halfwidth, p) if with_delays else np.zeros(p)
        phase = rng.uniform(-config.phase_halfwidth, config.phase_halfwidth, p) if with_delays else np.zeros(p)
        comps.append(
            ComponentParams(
                weight=float(gmm.weights[i] * total_var),
                mean_freq=np.full(p, gmm.means[i]),
                variance=np.full(p, gmm.variances[i]),
                time_delay=delay,
                phase_delay=phase,
            )
        )
    return tuple(comps)


def initial_noise(dataset, fraction: float = 0.01, per_task: bool = False) -> np.ndarray:
    """Starting noise variance: a fraction of the target variance."""
    if per_task:
        return np.array([max(fraction * float(np.var(t.y)), 1e-8) for t in dataset.tasks])
    pooled = np.concatenate([t.y for t in dataset.tasks])
    return np.array([max(fraction * float(np.var(pooled)), 1e-8)])


def init_hyperparams(dataset, spec: KernelSpec, seed: int, config: InitConfig = InitConfig()) -> KernelSpec:
    """Fill a spec template with spectrum-driven starting parameters.

    The mixture is fitted on the averaged (or pooled) task periodograms;
    component weights are rescaled so their sum equals the variance of the
    pooled targets.  Everything random is drawn from a generator seeded with
    ``seed``, so the result is reproducible.
    """
    if dataset.m != spec.m:
        raise ValueError(f"dataset has {dataset.m} tasks but spec expects {spec.m}")
    rng = np.random.default_rng(seed)
    pooled = np.concatenate([t.y for t in dataset.tasks])
    total_var = float(np.var(pooled))
    if total_var <= 0:
        total_var = 1.0
    task_var = np.array([max(float(np.var(t.y)), 1e-12) for t in dataset.tasks])

    spectrum = _averaged_spectrum(dataset, config)
    gmm = fit_gmm(spectrum, spec.q, seed, config)

    m, q, p = spec.m, spec.q, spec.p
    if spec.family in (SE_LMC, MATERN_LMC):
        mean_freq = float(np.sum(spectrum.frequencies * spectrum.power) / np.sum(spectrum.power))
        length = 1.0 / (2.0 * math.pi * max(mean_freq, 1e-6))
        base = BaselineKernelParams(
            signal_scale=math.sqrt(total_var),
            length_scale=np.full(p, length),
            matern_order=1.5,
        )
        params = LMCParams(_draw_factor(m, rng, config), base)
    elif spec.family == SM_LMC:
        comps = _draw_components(gmm, q, p, total_var, rng, config, with_delays=False)
        coreg = CoregionalizationSet(tuple(_draw_factor(m, rng, config) for _ in range(q)))
        params = SMLMCParams(comps, coreg)
    elif spec.family == CSM:
        phases = rng.uniform(-config.phase_halfwidth, config.phase_halfwidth, (q, m))
        phases[0] = 0.0
        params = CSMParams(
            variance=gmm.variances.copy(),
            mean_freq=gmm.means.copy(),
            weights=np.outer(gmm.weights, task_var),
            phases=phases,
        )
    elif spec.family == MOSM:
        # radian-frequency convention; magnitudes chosen so the task
        # diagonal starts at the task variance
        var_r = 4.0 * math.pi**2 * np.tile(gmm.variances[:, None, None], (1, m, p))
        mag = np.sqrt(
            np.outer(gmm.weights, task_var)
            / ((2.0 * math.pi) ** (p / 2.0) * np.sqrt(np.prod(var_r, axis=2)))
        )
        params = MOSMParams(
            magnitude=mag,
            mean=2.0 * math.pi * np.tile(gmm.means[:, None, None], (1, m, p)),
            variance=var_r,
            time_delay=rng.uniform(-config.delay_halfwidth, config.delay_halfwidth, (q, m, p)),
            phase=rng.uniform(-config.phase_halfwidth, config.phase_halfwidth, (q, m)),
        )
    elif spec.family == GCSM_C:
        comps = _draw_components(gmm, q, p, total_var, rng, config, with_delays=True)
        params = GCSMCParams(comps, _draw_factor(m, rng, config))
    elif spec.family == GCSM_CC:
        comps = _draw_components(gmm, q, p, total_var, rng, config, with_delays=True)
        coreg = CoregionalizationSet(tuple(_draw_factor(m, rng, config) for _ in range(q)))
        params = GCSMCCParams(comps, coreg)
    else:
        raise ValueError(f"unknown kernel family {spec.family!r}")
    return KernelSpec(spec.family, m, q, p, params)


def rejitter(spec: KernelSpec, seed: int, config: InitConfig = InitConfig()) -> KernelSpec:
    """Fresh delays, phases and task factors; spectral peaks stay put.

    Used between optimizer restarts so each restart explores a different
    coupling configuration around the same spectral estimate.
    """
    rng = np.random.default_rng(seed)
    pr = spec.params
    m, q, p = spec.m, spec.q, spec.p
    if spec.family in (SE_LMC, MATERN_LMC):
        params = LMCParams(_draw_factor(m, rng, config), pr.base)
    elif spec.family == SM_LMC:
        coreg = CoregionalizationSet(tuple(_draw_factor(m, rng, config) for _ in range(q)))
        params = SMLMCParams(pr.components, coreg)
    elif spec.family == CSM:
        phases = rng.uniform(-config.phase_halfwidth, config.phase_halfwidth, (q, m))
        phases[0] = 0.0
        params = CSMParams(pr.variance, pr.mean_freq, pr.weights, phases)
    elif spec.family == MOSM:
        params = MOSMParams(
            magnitude=pr.magnitude,
            mean=pr.mean,
            variance=pr.variance,
            time_delay=rng.uniform(-config.delay_halfwidth, config.delay_halfwidth, (q, m, p)),
            phase=rng.uniform(-config.phase_halfwidth, config.phase_halfwidth, (q, m)),
        )
    elif spec.family in (GCSM_C, GCSM_CC):
        comps = tuple(
            ComponentParams(
                weight=c.weight,
                mean_freq=c.mean_freq,
                variance=c.variance,
                time_delay=rng.uniform(-config.delay_halfwidth, config.delay_halfwidth, p),
                phase_delay=rng.uniform(-config.phase_halfwidth, config.phase_halfwidth, p),
            )
            for c in pr.components
        )
        if spec.family == GCSM_C:
            params = GCSMCParams(comps, _draw_factor(m, rng, config))
        else:
            coreg = CoregionalizationSet(tuple(_draw_factor(m, rng, config) for _ in range(q)))
            params = GCSMCCParams(comps, coreg)
    else:
        raise ValueError(f"unknown kernel family {spec.family!r}")
    return KernelSpec(spec.family, m, q, p, params)
