"""Galerkin drift and diffusion operators for the truncated system.

Two interchangeable evaluations of the quadratic term are provided.  The
tensor route contracts the precomputed coupling coefficients

    b_{ikj} = < (e_i . grad) e_k , e_j >_0

over the enumerated basis (closed-form trigonometric integrals, O(n^4) per
apply) and is the correctness oracle.  The pseudo-spectral route forms the
advection products on a dealiased collocation grid (O(M^2 log M)) and must
agree with the tensor route to full precision; it is the path the time
stepper uses.

All Galerkin outputs are the orthogonal projection onto the span of the
truncated basis: representing the result in basis coefficients *is* the
projection (divergence-free part, modes inside the index square).  Mode
content pushed outside the square by an advecting field is discarded, matching
the weak formulation tested against the truncated space.

The fixed Ito-correction viscosity of the stochastic system is exposed as
``ITO_VISCOSITY``; it is not a tunable parameter because every exact energy
identity in the test battery relies on the cancellation it produces.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

from .basis import (
    Basis,
    BasisMode,
    SpectralField,
    derivative_spectra,
    gather_coeffs,
    get_basis,
    grid_to_halfspectrum,
    halfspectrum_to_grid,
    leray_project,
    place_halfspectrum,
)

#: coefficient of the Laplacian in the Ito-form drift (the Stratonovich
#: conversion of unit-rate transport noise); fixed, not a parameter.
ITO_VISCOSITY = 0.5


class TruncationMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# closed-form advection expansion
# ---------------------------------------------------------------------------
#
# For p, q != 0 with unit directions d_p, d_q and alpha = d_p . q:
#
#   (c_p . grad) c_q = -(alpha/2) d_q [ sin((p+q).t) - sin((p-q).t) ]
#   (c_p . grad) s_q = +(alpha/2) d_q [ cos((p+q).t) + cos((p-q).t) ]
#   (s_p . grad) c_q = +(alpha/2) d_q [ cos((p+q).t) - cos((p-q).t) ]
#   (s_p . grad) s_q = +(alpha/2) d_q [ sin((p+q).t) + sin((p-q).t) ]
#
# The constant advectors act as plain partial derivatives (p = 0, cosine
# factor 1); constant targets are annihilated.  Folding r -> canonical(r)
# flips the sign of sine content only.

_SHIFT_SIGNS = {
    # (adv kind, target kind) -> (output trig, amp sign at p+q, amp sign at p-q)
    ("c", "c"): ("s", -0.5, +0.5),
    ("c", "s"): ("c", +0.5, +0.5),
    ("s", "c"): ("c", +0.5, -0.5),
    ("s", "s"): ("s", +0.5, +0.5),
}


@lru_cache(maxsize=32)
def _fold_table(n: int):
    """Dense canonical-row lookup over the square ``{-n..n}``."""
    b = get_basis(n)
    size = 2 * n + 1
    idx = -np.ones((size, size), dtype=np.int64)
    for k1 in range(-n, n + 1):
        for k2 in range(-n, n + 1):
            idx[k1 + n, k2 + n] = b.mode_id((k1, k2))[0]
    return idx


def _advector_descriptor(basis: Basis, kind: str, i: int):
    """(direction vector, wavevector, effective trig kind) of one advector."""
    if i == 0:
        d = np.array([1.0, 0.0]) if kind == "c" else np.array([0.0, 1.0])
        return d, np.array([0, 0]), "c"
    return basis.dvec[i], basis.modes[i], kind


@dataclass
class AdvectionTensor:
    """Sparse coupling coefficients ``b_{ikj}`` in COO layout.

    Flat element indices run over ``[cosine modes | sine modes]`` of the
    canonical enumeration (length ``2 N``).  ``b`` is skew in its last two
    slots, which is what removes the quadratic term from every energy budget.
    """

    n: int
    i_idx: np.ndarray
    k_idx: np.ndarray
    j_idx: np.ndarray
    vals: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.vals)

    def entry(self, adv: BasisMode, tgt: BasisMode, out: BasisMode) -> float:
        b = get_basis(self.n)
        key = []
        sign = 1.0
        for m in (adv, tgt, out):
            i, cs, ss = b.mode_id(m.k)
            sign *= cs if m.kind == "c" else ss
            key.append(i if m.kind == "c" else b.n_modes + i)
        if not hasattr(self, "_lookup"):
            lookup: dict[tuple[int, int, int], float] = {}
            for i, k, j, v in zip(self.i_idx, self.k_idx, self.j_idx, self.vals):
                lookup[(int(i), int(k), int(j))] = lookup.get((int(i), int(k), int(j)), 0.0) + v
            self._lookup = lookup
        return sign * self._lookup.get(tuple(key), 0.0)


def _mode_expansion(basis: Basis, kind: str, i: int, out_n: int):
    """Vectorized closed-form expansion of ``(e . grad) e_k`` for one advector.

    Returns COO pieces (k_flat, j_flat, value) over targets ``k`` of both
    kinds and outputs inside truncation ``out_n``.  Values are the raw inner
    products against the unnormalized output modes.
    """
    from .basis import CONST_NORMSQ, MODE_NORMSQ

    d_adv, p, eff_kind = _advector_descriptor(basis, kind, i)
    fold_idx = _fold_table(out_n)
    out_basis = get_basis(out_n)
    n_out = out_basis.n_modes

    q = basis.modes[1:]  # targets with nonzero wavevector
    nq = len(q)
    alpha = d_adv[0] * q[:, 0] + d_adv[1] * q[:, 1]
    dq = basis.dvec[1:]

    pieces = []
    for tgt_kind in ("c", "s"):
        trig, s_plus, s_minus = _SHIFT_SIGNS[(eff_kind, tgt_kind)]
        tgt_flat = (np.arange(1, nq + 1)
                    if tgt_kind == "c" else basis.n_modes + np.arange(1, nq + 1))
        for shift_sign, amp_sign in ((+1, s_plus), (-1, s_minus)):
            r = p[None, :] + shift_sign * q  # (nq, 2)
            amp = amp_sign * alpha
            inside = (np.abs(r[:, 0]) <= out_n) & (np.abs(r[:, 1]) <= out_n)
            nz = inside & (amp != 0.0)
            if not np.any(nz):
                continue
            rr = r[nz]
            a = amp[nz]
            dqv = dq[nz]
            tgt_f = tgt_flat[nz]
            ridx = fold_idx[rr[:, 0] + out_n, rr[:, 1] + out_n]
            origin = ridx == 0
            # nonzero output wavevectors: project amp * d_q * trig(r.t)
            if np.any(~origin):
                sel = ~origin
                rj = ridx[sel]
                dm = out_basis.dvec[rj]
                proj = dqv[sel, 0] * dm[:, 0] + dqv[sel, 1] * dm[:, 1]
                if trig == "s":
                    # the scalar sine is odd: sin(r.t) = -sin(rc.t) when r
                    # folds onto rc = -r
                    parity = np.where(
                        (rr[sel, 0] > 0) | ((rr[sel, 0] == 0) & (rr[sel, 1] > 0)), 1.0, -1.0
                    )
                    val = a[sel] * parity * proj * MODE_NORMSQ
                    jf = out_basis.n_modes + rj
                else:
                    val = a[sel] * proj * MODE_NORMSQ
                    jf = rj
                pieces.append((tgt_f[sel], jf, val))
            # r = 0 with cosine trig: a constant vector amp * d_q
            if np.any(origin) and trig == "c":
                sel = origin
                for comp, off in ((0, 0), (1, n_out)):
                    val = a[sel] * dqv[sel, comp] * CONST_NORMSQ
                    jf = np.full(val.shape, off, dtype=np.int64)
                    pieces.append((tgt_f[sel], jf, val))
    return pieces


@lru_cache(maxsize=16)
def build_advection_tensor(n: int) -> AdvectionTensor:
    """All couplings ``b_{ikj}`` over truncation ``n`` (closed-form integrals)."""
    basis = get_basis(n)
    ii, kk, jj, vv = [], [], [], []
    for kind, off in (("c", 0), ("s", basis.n_modes)):
        for i in range(basis.n_modes):
            for k_f, j_f, val in _mode_expansion(basis, kind, i, n):
                ii.append(np.full(val.shape, off + i, dtype=np.int64))
                kk.append(k_f)
                jj.append(j_f)
                vv.append(val)
    if ii:
        return AdvectionTensor(
            n,
            np.concatenate(ii),
            np.concatenate(kk),
            np.concatenate(jj),
            np.concatenate(vv),
        )
    return AdvectionTensor(n, *(np.zeros(0, dtype=np.int64),) * 3, np.zeros(0))


def nonlinear_direct(f: SpectralField, tensor: AdvectionTensor | None = None) -> SpectralField:
    """Galerkin projection of ``(f . grad) f`` by tensor contraction (oracle path)."""
    if tensor is None:
        tensor = build_advection_tensor(f.basis.n)
    if tensor.n != f.basis.n:
        raise TruncationMismatch(
            f"tensor built for n={tensor.n}, field has n={f.basis.n}"
        )
    b = f.basis
    c = f.coeffs.reshape(-1)
    contrib = tensor.vals * c[tensor.i_idx] * c[tensor.k_idx]
    out = np.bincount(tensor.j_idx, weights=contrib, minlength=2 * b.n_modes)
    out = out.reshape(2, b.n_modes) / b.norm_sq
    return SpectralField(b, out)


def middle_slice(basis: Basis, v: SpectralField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """COO quadratic form ``Q[i, j] = < (e_i . grad) v, e_j >_0``.

    Contracting ``sum_ij Q_ij u_i u_j`` evaluates ``< (u . grad) v, u >_0``
    exactly without grids, which the probe diagnostics use per step.
    """
    ii, jj, vv = [], [], []
    for kind, off in (("c", 0), ("s", basis.n_modes)):
        for i in range(basis.n_modes):
            for k_f, j_f, val in _mode_expansion(basis, kind, i, basis.n):
                # keep only target components present in v
                w = v.coeffs.reshape(-1)[k_f]
                nz = w != 0.0
                if np.any(nz):
                    ii.append(np.full(nz.sum(), off + i, dtype=np.int64))
                    jj.append(j_f[nz])
                    vv.append(val[nz] * w[nz])
    if not ii:
        z = np.zeros(0, dtype=np.int64)
        return z, z, np.zeros(0)
    return np.concatenate(ii), np.concatenate(jj), np.concatenate(vv)


# ---------------------------------------------------------------------------
# pseudo-spectral path
# ---------------------------------------------------------------------------


def dealias_resolution(n_target: int, n_adv: int, n_out: int) -> int:
    """Smallest fast grid on which the quadratic product is alias-free.

    Aliasing corrupts output mode ``p`` only through product content at
    ``p +- m e_i``; keeping ``m > n_out + n_target + n_adv`` rules that out.
    """
    need = max(n_out + n_target + n_adv + 1, 2 * n_target + 2, 2 * n_adv + 2, 2 * n_out + 2, 4)
    return _fft.next_fast_len(need, real=True)


def convective_rhs(
    basis: Basis,
    coeffs: np.ndarray,
    adv: tuple[Basis, np.ndarray] | None = None,
    out_basis: Basis | None = None,
    need_self: bool = True,
    m: int | None = None,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Dealiased products ``(u . grad) u`` and optionally ``(w . grad) u``.

    ``coeffs`` may carry leading batch axes ``(..., 2, N)``; ``adv`` supplies
    the advecting field ``w`` (its own basis, matching batch axes).  Both
    outputs are Galerkin-projected onto ``out_basis`` (default: the state
    basis).  One batched inverse and one batched forward transform evaluate
    everything.
    """
    out_basis = out_basis or basis
    n_adv = adv[0].n if adv is not None else basis.n
    mm = m or dealias_resolution(basis.n, n_adv if adv is not None else basis.n, out_basis.n)

    spec = place_halfspectrum(basis, coeffs, mm)
    d1, d2 = derivative_spectra(basis, spec, mm)
    stack = [d1, d2]
    if need_self:
        stack.append(spec)
    if adv is not None:
        stack.append(place_halfspectrum(adv[0], adv[1], mm))
    grids = halfspectrum_to_grid(np.stack(stack, axis=0), mm)
    g_d1, g_d2 = grids[0], grids[1]

    prods = []
    if need_self:
        u = grids[2]
        conv = u[..., 0:1, :, :] * g_d1 + u[..., 1:2, :, :] * g_d2
        prods.append(conv)
    if adv is not None:
        w = grids[-1]
        transp = w[..., 0:1, :, :] * g_d1 + w[..., 1:2, :, :] * g_d2
        prods.append(transp)
    spec_out = grid_to_halfspectrum(np.stack(prods, axis=0))
    outs = gather_coeffs(out_basis, spec_out, mm)
    if need_self and adv is not None:
        return outs[0], outs[1]
    if need_self:
        return outs[0], None
    return None, outs[0]


def nonlinear_pseudospectral(f: SpectralField, out_basis: Basis | None = None) -> SpectralField:
    """Galerkin projection of ``(f . grad) f`` via the dealiased grid product."""
    conv, _ = convective_rhs(f.basis, f.coeffs, out_basis=out_basis)
    return SpectralField(out_basis or f.basis, conv)


def _coerce_advector(advector) -> SpectralField:
    if isinstance(advector, SpectralField):
        return advector
    if isinstance(advector, BasisMode):
        n = max(abs(advector.k[0]), abs(advector.k[1]))
        return SpectralField.from_modes(get_basis(n), [(advector, 1.0)])
    arr = np.asarray(advector, dtype=np.float64)
    if arr.shape == (2,):  # constant vector advector
        b = get_basis(0)
        f = SpectralField.zero(b)
        f.coeffs[0, 0], f.coeffs[1, 0] = arr
        return f
    raise TypeError("advector must be a SpectralField, BasisMode, or constant 2-vector")


def transport_apply(
    f: SpectralField, advector, out_basis: Basis | None = None
) -> SpectralField:
    """Galerkin projection of ``(a . grad) f`` for a divergence-free advector.

    Constant advectors reduce to exact mode-wise derivatives; general ones go
    through the dealiased product.  Content shifted outside the output
    truncation is discarded (projection onto the truncated span).
    """
    w = _coerce_advector(advector)
    out_basis = out_basis or f.basis
    if w.basis.n == 0:  # constant advection: a1 d1 f + a2 d2 f, exact
        a1, a2 = w.coeffs[0, 0], w.coeffs[1, 0]
        k1 = f.basis.modes[:, 0].astype(np.float64)
        k2 = f.basis.modes[:, 1].astype(np.float64)
        kappa = a1 * k1 + a2 * k2
        a, b = f.coeffs[0], f.coeffs[1]
        res = SpectralField(f.basis, np.stack([kappa * b, -kappa * a]))
        return res if out_basis.n == f.basis.n else leray_project(res, out_basis)
    _, tr = convective_rhs(
        f.basis, f.coeffs, adv=(w.basis, w.coeffs), out_basis=out_basis, need_self=False
    )
    return SpectralField(out_basis, tr)


# ---------------------------------------------------------------------------
# drift assembly
# ---------------------------------------------------------------------------


def stokes_apply(f: SpectralField) -> SpectralField:
    """Spectral Stokes operator: multiply each mode by ``|k|^2``."""
    return SpectralField(f.basis, f.coeffs * f.basis.ksq)


def strat_drift(f: SpectralField) -> SpectralField:
    """Stratonovich-form drift: the inviscid ``-B(f)``."""
    return -1.0 * nonlinear_pseudospectral(f)


def ito_drift(f: SpectralField) -> SpectralField:
    """Ito-form drift ``-(1/2) A f - B(f)`` (fixed half-Laplacian correction)."""
    conv, _ = convective_rhs(f.basis, f.coeffs)
    return SpectralField(f.basis, -ITO_VISCOSITY * f.basis.ksq * f.coeffs - conv)
