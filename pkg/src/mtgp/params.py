"""Flattening kernel parameters into unconstrained optimizer vectors.

Positive quantities (weights, spectral variances, baseline scales, noise)
travel through a log transform; means, delays, phases, task factor entries
and the sign-free MOSM magnitudes stay as they are.  The layout is the
single source of truth for coordinate order; gradients and the optimizer
both follow it.  Vector length is always the family's free-parameter count
plus the noise dimension.
"""

from __future__ import annotations

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

__all__ = ["layout", "pack", "unpack", "n_params"]

LOG, ID = "log", "id"


def _tri(m: int) -> int:
    return m * (m + 1) // 2


def layout(spec: KernelSpec, noise_mode: str = "shared"):
    """Ordered (key, size, transform) slots for a spec plus its noise."""
    m, q, p = spec.m, spec.q, spec.p
    slots = []
    if spec.family in (SE_LMC, MATERN_LMC):
        slots += [(("factor", 0), _tri(m), ID), (("log_signal",), 1, LOG), (("log_length",), p, LOG)]
    elif spec.family == SM_LMC:
        for i in range(q):
            slots += [
                (("factor", i), _tri(m), ID),
                (("log_weight", i), 1, LOG),
                (("mean", i), p, ID),
                (("log_variance", i), p, LOG),
            ]
    elif spec.family == CSM:
        for i in range(q):
            slots += [(("log_variance", i), 1, LOG), (("mean", i), 1, ID), (("log_weights", i), m, LOG)]
            if i > 0:
                slots += [(("phases", i), m, ID)]
    elif spec.family == MOSM:
        for i in range(q):
            for r in range(m):
                slots += [
                    (("magnitude", i, r), 1, ID),
                    (("mean", i, r), p, ID),
                    (("log_variance", i, r), p, LOG),
                    (("time_delay", i, r), p, ID),
                    (("phase", i, r), 1, ID),
                ]
    elif spec.family == GCSM_C:
        slots += [(("factor", 0), _tri(m), ID)]
        for i in range(q):
            slots += _component_slots(i, p)
    elif spec.family == GCSM_CC:
        for i in range(q):
            slots += [(("factor", i), _tri(m), ID)]
            slots += _component_slots(i, p)
    else:
        raise ValueError(f"unknown kernel family {spec.family!r}")
    slots += [(("log_noise",), m if noise_mode == "per_task" else 1, LOG)]
    return tuple(slots)


def _component_slots(i: int, p: int):
    return [
        (("log_weight", i), 1, LOG),
        (("mean", i), p, ID),
        (("log_variance", i), p, LOG),
        (("time_delay", i), p, ID),
        (("phase_delay", i), p, ID),
    ]


def n_params(spec: KernelSpec, noise_mode: str = "shared") -> int:
    return int(sum(size for _, size, _ in layout(spec, noise_mode)))


def _tril_values(c: np.ndarray) -> np.ndarray:
    return c[np.tril_indices(c.shape[0])]


def _tril_matrix(values: np.ndarray, m: int) -> np.ndarray:
    c = np.zeros((m, m))
    c[np.tril_indices(m)] = values
    return c


def _raw_values(spec: KernelSpec, key) -> np.ndarray:
    pr = spec.params
    kind = key[0]
    if kind == "factor":
        if spec.family in (SE_LMC, MATERN_LMC, GCSM_C):
            return _tril_values(pr.factor)
        return _tril_values(pr.coreg.factors[key[1]])
    if spec.family in (SE_LMC, MATERN_LMC):
        if kind == "log_signal":
            return np.array([pr.base.signal_scale])
        return pr.base.length_scale.copy()
    if spec.family == CSM:
        i = key[1]
        if kind == "log_variance":
            return pr.variance[i:i + 1]
        if kind == "mean":
            return pr.mean_freq[i:i + 1]
        if kind == "log_weights":
            return pr.weights[i].copy()
        return pr.phases[i].copy()
    if spec.family == MOSM:
        i, r = key[1], key[2]
        field = {
            "magnitude": pr.magnitude,
            "phase": pr.phase,
        }.get(kind)
        if field is not None:
            return np.array([field[i, r]])
        field = {"mean": pr.mean, "log_variance": pr.variance, "time_delay": pr.time_delay}[kind]
        return field[i, r].copy()
    comp = pr.components[key[1]]
    return {
        "log_weight": np.array([comp.weight]),
        "mean": comp.mean_freq.copy(),
        "log_variance": comp.variance.copy(),
        "time_delay": comp.time_delay.copy(),
        "phase_delay": comp.phase_delay.copy(),
    }[kind]


def pack(spec: KernelSpec, noise, noise_mode: str = "shared") -> np.ndarray:
    """Flatten params and noise into one unconstrained vector."""
    if spec.params is None:
        raise ValueError("cannot pack a spec without parameters")
    noise = np.atleast_1d(np.asarray(noise, dtype=float))
    pieces = []
    for key, size, transform in layout(spec, noise_mode):
        raw = noise if key[0] == "log_noise" else _raw_values(spec, key)
        if raw.shape[0] != size:
            raise ValueError(f"slot {key} expected {size} values, got {raw.shape[0]}")
        if transform == LOG:
            if np.any(raw <= 0):
                raise ValueError(f"slot {key} requires positive values for the log transform")
            pieces.append(np.log(raw))
        else:
            pieces.append(raw)
    return np.concatenate(pieces)


def unpack(spec: KernelSpec, vector, noise_mode: str = "shared"):
    """Rebuild (spec_with_params, noise) from a flat vector.

    ``spec`` supplies family and sizes; its own params (if any) are ignored.
    """
    vector = np.asarray(vector, dtype=float)
    slots = layout(spec, noise_mode)
    expected = sum(size for _, size, _ in slots)
    if vector.shape != (expected,):
        raise ValueError(f"vector has shape {vector.shape}, expected ({expected},)")
    values = {}
    pos = 0
    for key, size, transform in slots:
        chunk = vector[pos:pos + size]
        values[key] = np.exp(chunk) if transform == LOG else chunk.copy()
        pos += size

    m, q, p = spec.m, spec.q, spec.p
    noise = values.pop(("log_noise",))
    if spec.family in (SE_LMC, MATERN_LMC):
        base = BaselineKernelParams(
            signal_scale=float(values[("log_signal",)][0]),
            length_scale=values[("log_length",)],
            matern_order=spec.params.base.matern_order if spec.params is not None else 1.5,
        )
        params = LMCParams(_tril_matrix(values[("factor", 0)], m), base)
    elif spec.family == SM_LMC:
        comps = tuple(
            ComponentParams(
                weight=float(values[("log_weight", i)][0]),
                mean_freq=values[("mean", i)],
                variance=values[("log_variance", i)],
            )
            for i in range(q)
        )
        coreg = CoregionalizationSet(tuple(_tril_matrix(values[("factor", i)], m) for i in range(q)))
        params = SMLMCParams(comps, coreg)
    elif spec.family == CSM:
        phases = np.zeros((q, m))
        for i in range(1, q):
            phases[i] = values[("phases", i)]
        params = CSMParams(
            variance=np.concatenate([values[("log_variance", i)] for i in range(q)]),
            mean_freq=np.concatenate([values[("mean", i)] for i in range(q)]),
            weights=np.stack([values[("log_weights", i)] for i in range(q)]),
            phases=phases,
        )
    elif spec.family == MOSM:
        params = MOSMParams(
            magnitude=np.array([[values[("magnitude", i, r)][0] for r in range(m)] for i in range(q)]),
            mean=np.array([[values[("mean", i, r)] for r in range(m)] for i in range(q)]),
            variance=np.array([[values[("log_variance", i, r)] for r in range(m)] for i in range(q)]),
            time_delay=np.array([[values[("time_delay", i, r)] for r in range(m)] for i in range(q)]),
            phase=np.array([[values[("phase", i, r)][0] for r in range(m)] for i in range(q)]),
        )
    elif spec.family in (GCSM_C, GCSM_CC):
        comps = tuple(
            ComponentParams(
                weight=float(values[("log_weight", i)][0]),
                mean_freq=values[("mean", i)],
                variance=values[("log_variance", i)],
                time_delay=values[("time_delay", i)],
                phase_delay=values[("phase_delay", i)],
            )
            for i in range(q)
        )
        if spec.family == GCSM_C:
            params = GCSMCParams(comps, _tril_matrix(values[("factor", 0)], m))
        else:
            coreg = CoregionalizationSet(tuple(_tril_matrix(values[("factor", i)], m) for i in range(q)))
            params = GCSMCCParams(comps, coreg)
    else:
        raise ValueError(f"unknown kernel family {spec.family!r}")
    return KernelSpec(spec.family, m, q, p, params), noise
