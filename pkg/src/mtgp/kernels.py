"""Stationary spectral kernels on a single channel.

The spectral mixture (SM) kernel models a stationary covariance through a
Gaussian mixture over frequencies: component i has weight w_i, spectral mean
mu_i (cycles per input unit) and diagonal spectral variance v_i, giving

    k_SM(tau) = sum_i w_i cos(2 pi tau' mu_i) prod_p exp(-2 pi^2 tau_p^2 v_ip)

The generalized convolution variant (GCSM) adds cross terms between every
ordered pair of components.  Each pair gets closed-form cross parameters from
the product of the two spectral Gaussians (see :func:`cross_params`), plus
time and phase delay differences, and is evaluated as

    k(tau) = sum_ij w_ij a_ij exp(-0.5 pi^2 u' V_ij u) cos(pi (u' mu_ij - phi_ij))

with u = 2 tau - theta_ij.  Summed over all pairs this is the inverse Fourier
transform of the symmetrized cross spectral densities returned by
:func:`gcsm_cross_density`, so the family stays positive semidefinite.

Conventions: frequencies are in cycles (not radians); `tau` arguments carry
the input dimension on the last axis, shape (..., P), and a bare scalar is
accepted when P == 1.  All spectral variances are diagonal, stored as
length-P vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionMismatchError",
    "ComponentParams",
    "CrossComponentParams",
    "BaselineKernelParams",
    "sm_eval",
    "cross_params",
    "gcsm_eval",
    "gcsm_cross_density",
    "se_eval",
    "matern_eval",
]

MATERN_ORDERS = (0.5, 1.5, 2.5)


class DimensionMismatchError(ValueError):
    """Inputs disagree on the number of input dimensions."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _as_vector(value, p: int | None, name: str) -> np.ndarray:
    """Coerce a scalar or length-P sequence to a read-only (P,) array."""
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a scalar or 1-d vector, got shape {arr.shape}")
    if p is not None and arr.shape[0] != p:
        if arr.shape[0] == 1:
            arr = np.repeat(arr, p)
        else:
            raise DimensionMismatchError(f"{name} has length {arr.shape[0]}, expected {p}")
    return _readonly(arr)


@dataclass(frozen=True)
class ComponentParams:
    """One spectral mixture component.

    weight > 0 scales the component, mean_freq is the spectral mean in cycles
    per input unit, variance the (diagonal, positive) spectral variance.
    time_delay and phase_delay only matter for the convolution variants; both
    are stored per input dimension and the phase enters the cosine as the sum
    over dimensions.
    """

    weight: float
    mean_freq: np.ndarray
    variance: np.ndarray
    time_delay: np.ndarray = 0.0
    phase_delay: np.ndarray = 0.0

    def __post_init__(self):
        mean = _as_vector(self.mean_freq, None, "mean_freq")
        p = mean.shape[0]
        object.__setattr__(self, "mean_freq", mean)
        object.__setattr__(self, "variance", _as_vector(self.variance, p, "variance"))
        object.__setattr__(self, "time_delay", _as_vector(self.time_delay, p, "time_delay"))
        object.__setattr__(self, "phase_delay", _as_vector(self.phase_delay, p, "phase_delay"))
        object.__setattr__(self, "weight", float(self.weight))
        if not self.weight > 0:
            raise ValueError(f"component weight must be positive, got {self.weight}")
        if not np.all(self.variance > 0):
            raise ValueError("spectral variances must be positive")

    @property
    def p(self) -> int:
        return self.mean_freq.shape[0]


@dataclass(frozen=True)
class CrossComponentParams:
    """Closed-form parameters of one ordered component pair.

    weight is the geometric mean of the two component weights, amplitude the
    overlap of the two spectral Gaussians (1 exactly when the components
    coincide, smaller otherwise).  mean/variance describe the product
    Gaussian; the delays are signed differences, so the (j, i) pair carries
    the negated delays of (i, j).
    """

    weight: float
    amplitude: float
    mean: np.ndarray
    variance: np.ndarray
    time_delay: np.ndarray
    phase_delay: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _readonly(self.mean))
        object.__setattr__(self, "variance", _readonly(self.variance))
        object.__setattr__(self, "time_delay", _readonly(self.time_delay))
        object.__setattr__(self, "phase_delay", _readonly(self.phase_delay))

    @property
    def p(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class BaselineKernelParams:
    """Hyperparameters of the SE / Matern baselines."""

    signal_scale: float
    length_scale: np.ndarray
    matern_order: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "length_scale", _as_vector(self.length_scale, None, "length_scale"))
        object.__setattr__(self, "signal_scale", float(self.signal_scale))
        object.__setattr__(self, "matern_order", float(self.matern_order))
        if not self.signal_scale > 0:
            raise ValueError("signal_scale must be positive")
        if not np.all(self.length_scale > 0):
            raise ValueError("length scales must be positive")
        if self.matern_order not in MATERN_ORDERS:
            raise ValueError(f"matern_order must be one of {MATERN_ORDERS}")

    @property
    def p(self) -> int:
        return self.length_scale.shape[0]


def _check_components(components) -> int:
    if len(components) == 0:
        raise ValueError("need at least one spectral component")
    p = components[0].p
    for c in components[1:]:
        if c.p != p:
            raise DimensionMismatchError("components disagree on input dimension")
    return p


def _tau_array(tau, p: int) -> np.ndarray:
    """Bring tau to shape (..., P).  Scalars are fine when P == 1."""
    arr = np.asarray(tau, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != p:
        if p == 1:
            arr = arr[..., np.newaxis]
        else:
            raise DimensionMismatchError(f"tau last axis is {arr.shape[-1]}, expected {p}")
    return arr


def sm_eval(components, tau):
    """Spectral mixture kernel value(s) at lag tau.

    Returns an array shaped like tau without its last axis (a float for a
    single lag).
    """
    p = _check_components(components)
    t = _tau_array(tau, p)
    total = 0.0
    for c in components:
        decay = np.exp(-2.0 * np.pi**2 * np.sum(t**2 * c.variance, axis=-1))
        total = total + c.weight * np.cos(2.0 * np.pi * (t @ c.mean_freq)) * decay
    return total if np.ndim(total) else float(total)


def cross_params(a: ComponentParams, b: ComponentParams) -> CrossComponentParams:
    """Cross parameters of the ordered component pair (a, b).

    The product of the two spectral Gaussians is another Gaussian; its
    normalization splits into the overlap amplitude

        amp = prod_p |sqrt(4 v_a v_b) / (v_a + v_b)|^(1/2)
              * exp(-1/4 (mu_a - mu_b)' (V_a + V_b)^-1 (mu_a - mu_b))

    and the product mean/variance

        mean = (V_a mu_b + V_b mu_a) / (V_a + V_b),
        var  = 2 V_a V_b / (V_a + V_b).

    Delays subtract: time_delay = theta_a - theta_b and likewise for phase,
    so swapping the pair negates them while weight and amplitude are
    symmetric.
    """
    if a.p != b.p:
        raise DimensionMismatchError("components disagree on input dimension")
    va, vb = a.variance, b.variance
    vsum = va + vb
    prefac = np.sqrt(np.abs(np.sqrt(4.0 * va * vb) / vsum))
    dmu = a.mean_freq - b.mean_freq
    overlap = np.exp(-0.25 * dmu**2 / vsum)
    return CrossComponentParams(
        weight=math.sqrt(a.weight * b.weight),
        amplitude=float(np.prod(prefac * overlap)),
        mean=(va * b.mean_freq + vb * a.mean_freq) / vsum,
        variance=2.0 * va * vb / vsum,
        time_delay=a.time_delay - b.time_delay,
        phase_delay=a.phase_delay - b.phase_delay,
    )


def _pair_eval(cp: CrossComponentParams, t: np.ndarray):
    """One convolution cross term on a prepared (..., P) lag array."""
    u = 2.0 * t - cp.time_delay
    decay = np.exp(-0.5 * np.pi**2 * np.sum(u**2 * cp.variance, axis=-1))
    phase = np.pi * ((u @ cp.mean) - np.sum(cp.phase_delay))
    return cp.weight * cp.amplitude * decay * np.cos(phase)


def gcsm_eval(components, tau):
    """Generalized convolution spectral mixture kernel at lag tau.

    Sums the cross term of every ordered component pair, including the
    self pairs.  With one component and zero delays this reduces exactly to
    :func:`sm_eval` of that component.
    """
    p = _check_components(components)
    t = _tau_array(tau, p)
    total = 0.0
    for a in components:
        for b in components:
            total = total + _pair_eval(cross_params(a, b), t)
    return total if np.ndim(total) else float(total)


def gcsm_cross_density(cp: CrossComponentParams, s):
    """Complex cross spectral density of one component pair at frequency s.

    A Gaussian bump at the cross mean, rotated by the delay terms:

        w a N(s; mean, var) exp(-i pi (theta' s + sum(phi)))

    Swapping the pair conjugates the density.  The kernel is recovered by the
    inverse transform of the symmetrized sum over all pairs, integrating
    exp(2 pi i s' tau) against 0.5 (density(s) + density(-s)).
    """
    sv = _tau_array(s, cp.p)
    norm = math.sqrt((2.0 * np.pi) ** cp.p * float(np.prod(cp.variance)))
    gauss = np.exp(-0.5 * np.sum((sv - cp.mean) ** 2 / cp.variance, axis=-1)) / norm
    rot = np.exp(-1j * np.pi * ((sv @ cp.time_delay) + np.sum(cp.phase_delay)))
    out = cp.weight * cp.amplitude * gauss * rot
    return out if np.ndim(out) else complex(out)


def _scaled_dist(params: BaselineKernelParams, t: np.ndarray):
    return np.sqrt(np.sum((t / params.length_scale) ** 2, axis=-1))


def se_eval(params: BaselineKernelParams, tau):
    """Squared exponential kernel, signal_scale^2 exp(-r^2 / 2)."""
    t = _tau_array(tau, params.p)
    r = _scaled_dist(params, t)
    out = params.signal_scale**2 * np.exp(-0.5 * r**2)
    return out if np.ndim(out) else float(out)


def matern_eval(params: BaselineKernelParams, tau):
    """Matern kernel for order 1/2, 3/2 or 5/2."""
    t = _tau_array(tau, params.p)
    r = _scaled_dist(params, t)
    if params.matern_order == 0.5:
        shape = np.exp(-r)
    elif params.matern_order == 1.5:
        c = math.sqrt(3.0) * r
        shape = (1.0 + c) * np.exp(-c)
    else:
        c = math.sqrt(5.0) * r
        shape = (1.0 + c + c**2 / 3.0) * np.exp(-c)
    out = params.signal_scale**2 * shape
    return out if np.ndim(out) else float(out)
