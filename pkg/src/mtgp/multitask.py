"""Multi-task covariance construction.

Seven kernel families over M output channels share one interface here.  The
linear-model-of-coregionalization (LMC) baselines mix a base kernel, or Q
spectral mixture components, through task covariance factors B = C C'.  The
cross spectral mixture (CSM) gives each task its own weight and phase per
component; the multi-output spectral mixture (MOSM) builds cross-task terms
from per-task spectral Gaussians.  The convolution families reuse the
component-pair algebra of :mod:`mtgp.kernels`: `gcsm_c` scales all component
pairs by a single task factor, while `gcsm_cc` couples components across
tasks, pair (i, j) receiving its own task matrix B_ij = C_i C_j'.

Family identifiers: ``se_lmc``, ``matern_lmc``, ``sm_lmc``, ``csm``,
``mosm``, ``gcsm_c``, ``gcsm_cc``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import (
    BaselineKernelParams,
    ComponentParams,
    DimensionMismatchError,
    _pair_eval,
    _readonly,
    _tau_array,
    cross_params,
    matern_eval,
    se_eval,
)

__all__ = [
    "SE_LMC",
    "MATERN_LMC",
    "SM_LMC",
    "CSM",
    "MOSM",
    "GCSM_C",
    "GCSM_CC",
    "FAMILIES",
    "CoregionalizationSet",
    "LMCParams",
    "SMLMCParams",
    "CSMParams",
    "MOSMParams",
    "GCSMCParams",
    "GCSMCCParams",
    "KernelSpec",
    "eval_pair",
    "assemble",
    "degrees_of_freedom",
    "dof_formula",
    "component_terms",
    "block_value",
]

SE_LMC = "se_lmc"
MATERN_LMC = "matern_lmc"
SM_LMC = "sm_lmc"
CSM = "csm"
MOSM = "mosm"
GCSM_C = "gcsm_c"
GCSM_CC = "gcsm_cc"

FAMILIES = (SE_LMC, MATERN_LMC, SM_LMC, CSM, MOSM, GCSM_C, GCSM_CC)

TWO_PI_SQ = 2.0 * np.pi**2


def _check_factor(c: np.ndarray, m: int, name: str) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (m, m):
        raise DimensionMismatchError(f"{name} must be ({m}, {m}), got {c.shape}")
    if np.any(np.triu(c, 1) != 0.0):
        raise ValueError(f"{name} must be lower triangular")
    if np.any(np.diag(c) == 0.0):
        raise ValueError(f"{name} needs a nonzero diagonal")
    return _readonly(c)


@dataclass(frozen=True)
class CoregionalizationSet:
    """Per-component task factors C_1..C_Q, each M x M lower triangular.

    ``coupling(i, j)`` returns B_ij = C_i C_j'.  The diagonal couplings are
    the usual positive semidefinite task covariances; the off-diagonal ones
    tie different components together across tasks.
    """

    factors: tuple

    def __post_init__(self):
        if len(self.factors) == 0:
            raise ValueError("need at least one task factor")
        m = np.asarray(self.factors[0]).shape[0]
        checked = tuple(_check_factor(c, m, f"factor {i}") for i, c in enumerate(self.factors))
        object.__setattr__(self, "factors", checked)

    @property
    def q(self) -> int:
        return len(self.factors)

    @property
    def m(self) -> int:
        return self.factors[0].shape[0]

    def coupling(self, i: int, j: int) -> np.ndarray:
        return self.factors[i] @ self.factors[j].T


@dataclass(frozen=True)
class LMCParams:
    """Single task factor plus one base kernel (SE or Matern baselines)."""

    factor: np.ndarray
    base: BaselineKernelParams

    def __post_init__(self):
        m = np.asarray(self.factor).shape[0]
        object.__setattr__(self, "factor", _check_factor(self.factor, m, "factor"))


@dataclass(frozen=True)
class SMLMCParams:
    """Q spectral mixture components, each with its own task factor."""

    components: tuple
    coreg: CoregionalizationSet

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) != self.coreg.q:
            raise DimensionMismatchError("one task factor per component required")


@dataclass(frozen=True)
class CSMParams:
    """Cross spectral mixture parameters (one input dimension).

    Components share a spectral mean and variance across tasks; each task
    contributes a nonnegative weight and a phase per component.  Phases of
    the first component are pinned to zero, which fixes the phase gauge and
    keeps the free-parameter count at 2Q + M(2Q - 1).
    """

    variance: np.ndarray
    mean_freq: np.ndarray
    weights: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        v = _readonly(np.atleast_1d(self.variance))
        mu = _readonly(np.atleast_1d(self.mean_freq))
        w = _readonly(np.atleast_2d(self.weights))
        ph = _readonly(np.atleast_2d(self.phases))
        q = v.shape[0]
        if mu.shape != (q,) or w.shape[0] != q or ph.shape != w.shape:
            raise DimensionMismatchError("csm parameter shapes disagree")
        if not np.all(v > 0):
            raise ValueError("spectral variances must be positive")
        if np.any(w < 0):
            raise ValueError("csm weights must be nonnegative")
        if np.any(ph[0] != 0.0):
            raise ValueError("phases of the first component are pinned to zero")
        object.__setattr__(self, "variance", v)
        object.__setattr__(self, "mean_freq", mu)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "phases", ph)


@dataclass(frozen=True)
class MOSMParams:
    """Per-task spectral Gaussians for the multi-output spectral mixture.

    magnitude[q, m] is real and sign free; mean, variance and time_delay are
    (Q, M, P); phase is (Q, M).  Frequencies here are in radians per input
    unit, matching the cosine without a 2 pi factor.
    """

    magnitude: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    time_delay: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        mag = _readonly(np.atleast_2d(self.magnitude))
        q, m = mag.shape
        mean = _readonly(np.asarray(self.mean, dtype=float))
        var = _readonly(np.asarray(self.variance, dtype=float))
        delay = _readonly(np.asarray(self.time_delay, dtype=float))
        phase = _readonly(np.atleast_2d(self.phase))
        if mean.ndim != 3 or mean.shape[:2] != (q, m):
            raise DimensionMismatchError(f"mean must be (Q, M, P), got {mean.shape}")
        for name, arr in (("variance", var), ("time_delay", delay)):
            if arr.shape != mean.shape:
                raise DimensionMismatchError(f"{name} must match mean shape {mean.shape}")
        if phase.shape != (q, m):
            raise DimensionMismatchError("phase must be (Q, M)")
        if not np.all(var > 0):
            raise ValueError("spectral variances must be positive")
        object.__setattr__(self, "magnitude", mag)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "time_delay", delay)
        object.__setattr__(self, "phase", phase)


@dataclass(frozen=True)
class GCSMCParams:
    """Convolution spectral mixture under a single task factor."""

    components: tuple
    factor: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        m = np.asarray(self.factor).shape[0]
        object.__setattr__(self, "factor", _check_factor(self.factor, m, "factor"))


@dataclass(frozen=True)
class GCSMCCParams:
    """Convolution spectral mixture with cross-component task coupling."""

    components: tuple
    coreg: CoregionalizationSet

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) != self.coreg.q:
            raise DimensionMismatchError("one task factor per component required")


_PARAM_TYPES = {
    SE_LMC: LMCParams,
    MATERN_LMC: LMCParams,
    SM_LMC: SMLMCParams,
    CSM: CSMParams,
    MOSM: MOSMParams,
    GCSM_C: GCSMCParams,
    GCSM_CC: GCSMCCParams,
}


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family with its sizes and, optionally, its parameter block.

    A spec without params acts as a template (degree-of-freedom queries,
    initialization targets); evaluation requires the params block.
    """

    family: str
    m: int
    q: int = 1
    p: int = 1
    params: object = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.m < 1 or self.q < 1 or self.p < 1:
            raise ValueError("m, q and p must all be at least 1")
        if self.params is not None:
            self._validate_params()

    def _validate_params(self):
        expected = _PARAM_TYPES[self.family]
        if not isinstance(self.params, expected):
            raise TypeError(f"{self.family} expects a {expected.__name__} block")
        pr = self.params
        if self.family in (SE_LMC, MATERN_LMC):
            if pr.factor.shape[0] != self.m or pr.base.p != self.p:
                raise DimensionMismatchError("params sized for a different spec")
        elif self.family == SM_LMC:
            self._check_components(pr.components)
            if pr.coreg.m != self.m or pr.coreg.q != self.q:
                raise DimensionMismatchError("coregionalization sized for a different spec")
        elif self.family == CSM:
            if self.p != 1:
                raise DimensionMismatchError("csm evaluation supports one input dimension")
            if pr.variance.shape[0] != self.q or pr.weights.shape != (self.q, self.m):
                raise DimensionMismatchError("params sized for a different spec")
        elif self.family == MOSM:
            if pr.mean.shape != (self.q, self.m, self.p):
                raise DimensionMismatchError("params sized for a different spec")
        elif self.family == GCSM_C:
            self._check_components(pr.components)
            if pr.factor.shape[0] != self.m:
                raise DimensionMismatchError("params sized for a different spec")
        elif self.family == GCSM_CC:
            self._check_components(pr.components)
            if pr.coreg.m != self.m or pr.coreg.q != self.q:
                raise DimensionMismatchError("coregionalization sized for a different spec")

    def _check_components(self, components):
        if len(components) != self.q:
            raise DimensionMismatchError(f"expected {self.q} components, got {len(components)}")
        for c in components:
            if c.p != self.p:
                raise DimensionMismatchError("component dimension differs from spec")


def dof_formula(family: str, m: int, q: int, p: int) -> int:
    """Free-parameter count of a family, not counting the noise term."""
    tri = m * (m + 1) // 2
    if family in (SE_LMC, MATERN_LMC):
        return tri + p + 1
    if family == SM_LMC:
        return q * (tri + 2 * p + 1)
    if family == CSM:
        return 2 * q + m * (2 * q - 1)
    if family == MOSM:
        return q * m * (3 * p + 2)
    if family == GCSM_C:
        return tri + q * (4 * p + 1)
    if family == GCSM_CC:
        return q * (tri + 4 * p + 1)
    raise ValueError(f"unknown kernel family {family!r}")


def degrees_of_freedom(spec: KernelSpec) -> int:
    return dof_formula(spec.family, spec.m, spec.q, spec.p)


def component_terms(spec: KernelSpec):
    """Enumeration of the additive terms behind a spec.

    Convolution families expand to all Q^2 ordered component pairs; the
    mixture families contribute one term per component; the baselines a
    single term.
    """
    if spec.family in (GCSM_C, GCSM_CC):
        return tuple((i, j) for i in range(spec.q) for j in range(spec.q))
    if spec.family in (SM_LMC, CSM, MOSM):
        return tuple((i,) for i in range(spec.q))
    return ((0,),)


def _mosm_cross(pr: MOSMParams, qi: int, m: int, n: int):
    """Cross-task parameters of component qi between tasks m and n.

    Product of the two per-task spectral Gaussians, same algebra as
    :func:`mtgp.kernels.cross_params` but in radian frequencies and with the
    Gaussian normalization kept in the magnitude so that the task diagonal
    reduces to w^2 (2 pi)^(P/2) |V|^(1/2) exp(-tau' V tau / 2) cos(mu' tau).
    """
    vi, vj = pr.variance[qi, m], pr.variance[qi, n]
    mi, mj = pr.mean[qi, m], pr.mean[qi, n]
    vsum = vi + vj
    cross_var = 2.0 * vi * vj / vsum
    cross_mean = (vi * mj + vj * mi) / vsum
    overlap = np.exp(-0.25 * np.sum((mi - mj) ** 2 / vsum))
    alpha = (
        pr.magnitude[qi, m]
        * pr.magnitude[qi, n]
        * (2.0 * np.pi) ** (pr.mean.shape[2] / 2.0)
        * np.sqrt(np.prod(cross_var))
        * overlap
    )
    delay = pr.time_delay[qi, m] - pr.time_delay[qi, n]
    phase = pr.phase[qi, m] - pr.phase[qi, n]
    return alpha, cross_mean, cross_var, delay, phase


def _mosm_block(pr: MOSMParams, t: np.ndarray, m: int, n: int):
    total = 0.0
    for qi in range(pr.magnitude.shape[0]):
        alpha, mean, var, delay, phase = _mosm_cross(pr, qi, m, n)
        u = t + delay
        decay = np.exp(-0.5 * np.sum(u**2 * var, axis=-1))
        total = total + alpha * decay * np.cos((u @ mean) + phase)
    return total


def _csm_block(pr: CSMParams, t: np.ndarray, m: int, n: int):
    tt = t[..., 0]
    total = 0.0
    for qi in range(pr.variance.shape[0]):
        amp = np.sqrt(pr.weights[qi, m] * pr.weights[qi, n])
        decay = np.exp(-TWO_PI_SQ * tt**2 * pr.variance[qi])
        arg = 2.0 * np.pi * tt * pr.mean_freq[qi] + pr.phases[qi, m] - pr.phases[qi, n]
        total = total + amp * decay * np.cos(arg)
    return total


def block_value(spec: KernelSpec, tau, m: int, n: int):
    """Covariance between tasks m and n at lag(s) tau, shape (..., P)."""
    if spec.params is None:
        raise ValueError("spec carries no parameters")
    if not (0 <= m < spec.m and 0 <= n < spec.m):
        raise IndexError(f"task index out of range for m={spec.m}")
    pr = spec.params
    t = _tau_array(tau, spec.p)
    if spec.family in (SE_LMC, MATERN_LMC):
        base = se_eval if spec.family == SE_LMC else matern_eval
        b = pr.factor @ pr.factor.T
        return b[m, n] * base(pr.base, t)
    if spec.family == SM_LMC:
        total = 0.0
        for qi, comp in enumerate(pr.components):
            b = pr.coreg.coupling(qi, qi)
            decay = np.exp(-TWO_PI_SQ * np.sum(t**2 * comp.variance, axis=-1))
            total = total + b[m, n] * comp.weight * np.cos(2.0 * np.pi * (t @ comp.mean_freq)) * decay
        return total
    if spec.family == CSM:
        return _csm_block(pr, t, m, n)
    if spec.family == MOSM:
        return _mosm_block(pr, t, m, n)
    if spec.family == GCSM_C:
        b = pr.factor @ pr.factor.T
        total = 0.0
        for i, ci in enumerate(pr.components):
            for cj in pr.components:
                total = total + _pair_eval(cross_params(ci, cj), t)
        return b[m, n] * total
    # gcsm_cc
    total = 0.0
    for i, ci in enumerate(pr.components):
        for j, cj in enumerate(pr.components):
            b = pr.coreg.coupling(i, j)
            total = total + b[m, n] * _pair_eval(cross_params(ci, cj), t)
    return total


def eval_pair(spec: KernelSpec, x, m: int, x_other, n: int) -> float:
    """Scalar covariance between point x on task m and x_other on task n."""
    xa = _tau_array(x, spec.p)
    xb = _tau_array(x_other, spec.p)
    value = block_value(spec, xa - xb, m, n)
    return float(value)


def _lift_inputs(x: np.ndarray, p: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if p != 1:
            raise DimensionMismatchError(f"1-d inputs need p == 1, spec has p == {p}")
        arr = arr[:, np.newaxis]
    if arr.ndim != 2 or arr.shape[1] != p:
        raise DimensionMismatchError(f"inputs must be (N, {p}), got {arr.shape}")
    return arr


def assemble(spec: KernelSpec, x_by_task) -> np.ndarray:
    """Dense covariance over all task inputs, task blocks in order.

    ``x_by_task`` is one input array per task (shape (N_m,) or (N_m, P));
    tasks may have different inputs and sizes.  Returns the full
    sum(N_m) x sum(N_m) symmetric matrix.
    """
    if len(x_by_task) != spec.m:
        raise DimensionMismatchError(f"expected {spec.m} task input arrays, got {len(x_by_task)}")
    xs = [_lift_inputs(x, spec.p) for x in x_by_task]
    sizes = [x.shape[0] for x in xs]
    total = int(sum(sizes))
    if total == 0:
        raise ValueError("assemble needs at least one observation")
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    out = np.empty((total, total))
    for m in range(spec.m):
        for n in range(m, spec.m):
            tau = xs[m][:, np.newaxis, :] - xs[n][np.newaxis, :, :]
            block = block_value(spec, tau, m, n)
            out[offsets[m]:offsets[m + 1], offsets[n]:offsets[n + 1]] = block
            if n > m:
                out[offsets[n]:offsets[n + 1], offsets[m]:offsets[m + 1]] = block.T
    return out
