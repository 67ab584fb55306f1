"""Gradients of the negative log marginal likelihood.

The analytic path uses the trace identity: with Ky = K + noise, alpha =
Ky^-1 y and W = Ky^-1 - alpha alpha', every coordinate h contributes

    d nlml / d h = 0.5 tr(W dKy/dh).

The matrix derivatives are written out per family below, chained through the
closed-form cross parameters of the convolution families and through the
log transforms of :mod:`mtgp.params`.  Coordinates follow the layout of
that module exactly.  The numeric path is a plain central difference on the
packed vector and shares no code with the analytic one, which is what makes
the agreement check in the tests meaningful.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from . import params as pv
from .gp import chol_with_jitter, noise_vector
from .kernels import DimensionMismatchError
from .multitask import (
    CSM,
    GCSM_C,
    GCSM_CC,
    MATERN_LMC,
    MOSM,
    SE_LMC,
    SM_LMC,
    KernelSpec,
    assemble,
)

__all__ = ["gradient", "nlml_gradient", "fd_gradient", "FD_STEP_SCALE"]

FD_STEP_SCALE = 1e-6

PI = np.pi


def _lift(x, p):
    arr = np.asarray(x, dtype=float)
    return arr[:, np.newaxis] if arr.ndim == 1 and p == 1 else arr


def _stacked(dataset, p):
    xs = [_lift(t.x, p) for t in dataset.tasks]
    sizes = [x.shape[0] for x in xs]
    y = np.concatenate([np.asarray(t.y, dtype=float) for t in dataset.tasks])
    return xs, y, sizes


def _block_reduce(a: np.ndarray, offsets) -> np.ndarray:
    rows = np.add.reduceat(a, offsets[:-1], axis=0)
    return np.add.reduceat(rows, offsets[:-1], axis=1)


def _contract(wb: np.ndarray, part: np.ndarray) -> np.ndarray:
    """0.5 tr(W dK) for one scalar slot (part 2-d) or per-dim slot (3-d)."""
    if part.ndim == 2:
        return np.array([0.5 * np.sum(wb * part)])
    return 0.5 * np.einsum("ab,abp->p", wb, part)


def _sym_factor_grad(t: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Factor gradient when one symmetric contraction T scales B = C C'."""
    return 0.5 * (t + t.T) @ c


# ---------------------------------------------------------------------------
# per-family matrix derivatives


def _gcsm_pair_terms(ci, cj, tau):
    """Value and per-side partials of one convolution cross term.

    Returns (G, side_i, side_j) where each side maps slot kinds to arrays:
    scalar slots (N, N), per-dimension slots (N, N, P), already in the
    transformed (log where applicable) coordinates of the parameter vector.
    """
    vi, vj = ci.variance, cj.variance
    s = vi + vj
    vhat = 2.0 * vi * vj / s
    dmu = ci.mean_freq - cj.mean_freq
    mhat = (vi * cj.mean_freq + vj * ci.mean_freq) / s
    wbar = np.sqrt(ci.weight * cj.weight)
    amp = float(np.prod(np.sqrt(np.sqrt(4.0 * vi * vj) / s) * np.exp(-0.25 * dmu**2 / s)))

    u = 2.0 * tau - (ci.time_delay - cj.time_delay)
    env = np.exp(-0.5 * PI**2 * (u**2 @ vhat))
    psi = PI * ((u @ mhat) - np.sum(ci.phase_delay - cj.phase_delay))
    g = wbar * amp * env * np.cos(psi)
    gsin = wbar * amp * env * np.sin(psi)

    ge = g[..., np.newaxis]
    gse = gsin[..., np.newaxis]
    half_dmu_s = 0.5 * dmu / s
    quarter = 0.25 * dmu**2 / s**2
    ui = u

    def side(v_own, v_other, sign):
        dmu_part = -sign * ge * half_dmu_s - gse * (PI * ui) * (v_other / s)
        dvhat = 2.0 * v_other**2 / s**2
        dmhat = -sign * v_other * dmu / s**2
        dlogv = v_own * (
            ge * (0.5 * (0.5 / v_own - 1.0 / s) + quarter)
            + ge * (-0.5 * PI**2 * ui**2) * dvhat
            - gse * (PI * ui) * dmhat
        )
        dtheta = sign * (ge * PI**2 * vhat * ui + gse * PI * mhat)
        dphi = sign * PI * np.broadcast_to(gse, ui.shape)
        return {
            "log_weight": 0.5 * g,
            "mean": dmu_part,
            "log_variance": dlogv,
            "time_delay": dtheta,
            "phase_delay": dphi,
        }

    return g, side(vi, vj, +1.0), side(vj, vi, -1.0)


def _grads_gcsm(spec, w, tau, ids, offsets, grads):
    pr = spec.params
    q, m = spec.q, spec.m
    coupled = spec.family == GCSM_CC
    factors = pr.coreg.factors if coupled else (pr.factor,)
    tri = np.tril_indices(m)
    contractions = np.zeros((q, q, m, m))
    if not coupled:
        wb_shared = w * (pr.factor @ pr.factor.T)[np.ix_(ids, ids)]

    for i in range(q):
        for j in range(q):
            g, di, dj = _gcsm_pair_terms(pr.components[i], pr.components[j], tau)
            if coupled:
                wb = w * pr.coreg.coupling(i, j)[np.ix_(ids, ids)]
            else:
                wb = wb_shared
            for kind in ("log_weight", "mean", "log_variance", "time_delay", "phase_delay"):
                grads[(kind, i)] = grads.get((kind, i), 0.0) + _contract(wb, di[kind])
                grads[(kind, j)] = grads.get((kind, j), 0.0) + _contract(wb, dj[kind])
            contractions[i, j] = _block_reduce(w * g, offsets)

    if coupled:
        for k in range(q):
            acc = np.zeros((m, m))
            for j in range(q):
                acc += contractions[k, j] @ factors[j]
            for i in range(q):
                acc += contractions[i, k].T @ factors[i]
            grads[("factor", k)] = (0.5 * acc)[tri]
    else:
        t = contractions.sum(axis=(0, 1))
        grads[("factor", 0)] = _sym_factor_grad(t, pr.factor)[tri]


def _grads_sm_lmc(spec, w, tau, ids, offsets, grads):
    pr = spec.params
    tri = np.tril_indices(spec.m)
    for i, comp in enumerate(pr.components):
        env = np.exp(-2.0 * PI**2 * (tau**2 @ comp.variance))
        arg = 2.0 * PI * (tau @ comp.mean_freq)
        g = comp.weight * env * np.cos(arg)
        gsin = comp.weight * env * np.sin(arg)
        wb = w * pr.coreg.coupling(i, i)[np.ix_(ids, ids)]
        grads[("log_weight", i)] = _contract(wb, g)
        grads[("mean", i)] = _contract(wb, -gsin[..., np.newaxis] * 2.0 * PI * tau)
        grads[("log_variance", i)] = _contract(
            wb, g[..., np.newaxis] * (-2.0 * PI**2 * tau**2 * comp.variance)
        )
        t = _block_reduce(w * g, offsets)
        grads[("factor", i)] = _sym_factor_grad(t, pr.coreg.factors[i])[tri]


def _grads_baseline(spec, w, tau, ids, offsets, grads):
    pr = spec.params
    scaled = tau / pr.base.length_scale
    r2p = scaled**2
    r = np.sqrt(np.sum(r2p, axis=-1))
    s2 = pr.base.signal_scale**2
    if spec.family == SE_LMC:
        k = s2 * np.exp(-0.5 * r**2)
        dlen = k[..., np.newaxis] * r2p
    else:
        order = pr.base.matern_order
        with np.errstate(invalid="ignore", divide="ignore"):
            if order == 0.5:
                k = s2 * np.exp(-r)
                dlen = np.where(r > 0, k / np.where(r > 0, r, 1.0), 0.0)[..., np.newaxis] * r2p
            elif order == 1.5:
                k = s2 * (1.0 + np.sqrt(3.0) * r) * np.exp(-np.sqrt(3.0) * r)
                dlen = (s2 * 3.0 * np.exp(-np.sqrt(3.0) * r))[..., np.newaxis] * r2p
            else:
                c = np.sqrt(5.0) * r
                k = s2 * (1.0 + c + c**2 / 3.0) * np.exp(-c)
                dlen = (s2 * (5.0 / 3.0) * (1.0 + c) * np.exp(-c))[..., np.newaxis] * r2p
    wb = w * (pr.factor @ pr.factor.T)[np.ix_(ids, ids)]
    grads[("log_signal",)] = 2.0 * _contract(wb, k)
    grads[("log_length",)] = _contract(wb, dlen)
    t = _block_reduce(w * k, offsets)
    grads[("factor", 0)] = _sym_factor_grad(t, pr.factor)[np.tril_indices(spec.m)]


def _grads_csm(spec, w, xs, offsets, grads):
    pr = spec.params
    q, m = spec.q, spec.m
    for i in range(q):
        dlog_var = 0.0
        dmean = 0.0
        dlogw = np.zeros(m)
        dphase = np.zeros(m)
        for a in range(m):
            for b in range(m):
                taub = xs[a][:, :1] - xs[b][:, :1].T
                wb = w[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]]
                ampl = np.sqrt(pr.weights[i, a] * pr.weights[i, b])
                env = np.exp(-2.0 * PI**2 * taub**2 * pr.variance[i])
                arg = 2.0 * PI * taub * pr.mean_freq[i] + pr.phases[i, a] - pr.phases[i, b]
                g = ampl * env * np.cos(arg)
                gsin = ampl * env * np.sin(arg)
                total_g = 0.5 * np.sum(wb * g)
                dlog_var += 0.5 * np.sum(wb * g * (-2.0 * PI**2 * taub**2)) * pr.variance[i]
                dmean += 0.5 * np.sum(wb * (-gsin) * 2.0 * PI * taub)
                dlogw[a] += 0.5 * total_g
                dlogw[b] += 0.5 * total_g
                total_sin = 0.5 * np.sum(wb * (-gsin))
                dphase[a] += total_sin
                dphase[b] -= total_sin
        grads[("log_variance", i)] = np.array([dlog_var])
        grads[("mean", i)] = np.array([dmean])
        grads[("log_weights", i)] = dlogw
        if i > 0:
            grads[("phases", i)] = dphase


def _mosm_pair_terms(pr, qi, a, b, taub):
    va, vb = pr.variance[qi, a], pr.variance[qi, b]
    s = va + vb
    vhat = 2.0 * va * vb / s
    dmu = pr.mean[qi, a] - pr.mean[qi, b]
    mhat = (va * pr.mean[qi, b] + vb * pr.mean[qi, a]) / s
    p = va.shape[0]
    rho = float(
        (2.0 * PI) ** (p / 2.0) * np.sqrt(np.prod(vhat)) * np.exp(-0.25 * np.sum(dmu**2 / s))
    )
    wa, wb_mag = pr.magnitude[qi, a], pr.magnitude[qi, b]
    u = taub + (pr.time_delay[qi, a] - pr.time_delay[qi, b])
    env = np.exp(-0.5 * (u**2 @ vhat))
    psi = (u @ mhat) + pr.phase[qi, a] - pr.phase[qi, b]
    cosp, sinp = np.cos(psi), np.sin(psi)
    g = wa * wb_mag * rho * env * cosp
    gsin = wa * wb_mag * rho * env * sinp

    ge = g[..., np.newaxis]
    gse = gsin[..., np.newaxis]
    half_dmu_s = 0.5 * dmu / s
    quarter = 0.25 * dmu**2 / s**2

    def side(v_own, v_other, w_other, sign):
        dvhat = 2.0 * v_other**2 / s**2
        dmhat = -sign * v_other * dmu / s**2
        return {
            "magnitude": w_other * rho * env * cosp,
            "mean": -sign * ge * half_dmu_s - gse * u * (v_other / s),
            "log_variance": v_own
            * (
                ge * (0.5 * dvhat / vhat + quarter)
                + ge * (-0.5 * u**2) * dvhat
                - gse * u * dmhat
            ),
            "time_delay": sign * (-ge * vhat * u - gse * mhat),
            "phase": -sign * gsin,
        }

    return g, side(va, vb, wb_mag, +1.0), side(vb, va, wa, -1.0)


def _grads_mosm(spec, w, xs, offsets, grads):
    pr = spec.params
    q, m = spec.q, spec.m
    for key_kind in ("magnitude", "mean", "log_variance", "time_delay", "phase"):
        for i in range(q):
            for r in range(m):
                size = 1 if key_kind in ("magnitude", "phase") else spec.p
                grads[(key_kind, i, r)] = np.zeros(size)
    for a in range(m):
        for b in range(m):
            taub = xs[a][:, np.newaxis, :] - xs[b][np.newaxis, :, :]
            wb = w[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]]
            for i in range(q):
                _, da, db = _mosm_pair_terms(pr, i, a, b, taub)
                for kind in ("magnitude", "mean", "log_variance", "time_delay", "phase"):
                    grads[(kind, i, a)] += _contract(wb, da[kind])
                    grads[(kind, i, b)] += _contract(wb, db[kind])


# ---------------------------------------------------------------------------
# entry points


def nlml_gradient(spec: KernelSpec, noise, dataset, noise_mode: str = "shared") -> np.ndarray:
    """Analytic gradient of the marginal likelihood in packed coordinates."""
    if spec.params is None:
        raise ValueError("gradient needs a spec with parameters")
    xs, y, sizes = _stacked(dataset, spec.p)
    k = assemble(spec, xs)
    nv = noise_vector(noise, noise_mode, sizes)
    chol, _ = chol_with_jitter(k + np.diag(nv))
    alpha = linalg.cho_solve((chol, True), y)
    kinv = linalg.cho_solve((chol, True), np.eye(k.shape[0]))
    w = kinv - np.outer(alpha, alpha)

    offsets = np.concatenate([[0], np.cumsum(sizes)])
    ids = np.repeat(np.arange(spec.m), sizes)
    grads: dict = {}

    if spec.family in (GCSM_C, GCSM_CC):
        x_all = np.concatenate(xs, axis=0)
        tau = x_all[:, np.newaxis, :] - x_all[np.newaxis, :, :]
        _grads_gcsm(spec, w, tau, ids, offsets, grads)
    elif spec.family == SM_LMC:
        x_all = np.concatenate(xs, axis=0)
        tau = x_all[:, np.newaxis, :] - x_all[np.newaxis, :, :]
        _grads_sm_lmc(spec, w, tau, ids, offsets, grads)
    elif spec.family in (SE_LMC, MATERN_LMC):
        x_all = np.concatenate(xs, axis=0)
        tau = x_all[:, np.newaxis, :] - x_all[np.newaxis, :, :]
        _grads_baseline(spec, w, tau, ids, offsets, grads)
    elif spec.family == CSM:
        _grads_csm(spec, w, xs, offsets, grads)
    elif spec.family == MOSM:
        _grads_mosm(spec, w, xs, offsets, grads)
    else:
        raise ValueError(f"unknown kernel family {spec.family!r}")

    noise_arr = np.atleast_1d(np.asarray(noise, dtype=float))
    diag_w = np.diag(w)
    if noise_mode == "per_task":
        grads[("log_noise",)] = np.array([
            0.5 * noise_arr[t] * np.sum(diag_w[offsets[t]:offsets[t + 1]]) for t in range(spec.m)
        ])
    else:
        grads[("log_noise",)] = np.array([0.5 * noise_arr[0] * np.sum(diag_w)])

    pieces = []
    for key, size, _ in pv.layout(spec, noise_mode):
        val = np.atleast_1d(np.asarray(grads[key], dtype=float))
        if val.shape[0] != size:
            raise DimensionMismatchError(f"gradient slot {key} has size {val.shape[0]}, expected {size}")
        pieces.append(val)
    return np.concatenate(pieces)


def fd_gradient(spec: KernelSpec, noise, dataset, noise_mode: str = "shared") -> np.ndarray:
    """Central-difference gradient on the packed vector (the slow oracle)."""
    from .gp import nlml

    vec = pv.pack(spec, noise, noise_mode)
    out = np.empty_like(vec)
    for h in range(vec.shape[0]):
        step = FD_STEP_SCALE * (1.0 + abs(vec[h]))
        hi, lo = vec.copy(), vec.copy()
        hi[h] += step
        lo[h] -= step
        spec_hi, noise_hi = pv.unpack(spec, hi, noise_mode)
        spec_lo, noise_lo = pv.unpack(spec, lo, noise_mode)
        out[h] = (nlml(spec_hi, noise_hi, dataset, noise_mode) - nlml(spec_lo, noise_lo, dataset, noise_mode)) / (2.0 * step)
    return out


def gradient(spec: KernelSpec, noise, dataset, mode: str = "analytic", noise_mode: str = "shared") -> np.ndarray:
    """Gradient of nlml w.r.t. the packed parameter vector."""
    if mode == "analytic":
        return nlml_gradient(spec, noise, dataset, noise_mode)
    if mode == "numeric":
        return fd_gradient(spec, noise, dataset, noise_mode)
    raise ValueError(f"gradient mode must be 'analytic' or 'numeric', got {mode!r}")
