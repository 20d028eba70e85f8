"""Numba kernels for the pixel-parallel classification pipeline.

The per-pixel math mirrors ``preprocess`` and ``features`` exactly: smooth,
upper convex hull, continuum removal, signed curvature, then a postfix rule
program.  Every pixel is independent and no floating-point mode flags are
used, so results are bit-identical for any thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

# feature codes / comparator codes / program opcodes shared with pipeline._flatten
FEAT_CV, FEAT_CRRV, FEAT_RV = 0, 1, 2
CMP_LT, CMP_LE, CMP_GT, CMP_GE = 0, 1, 2, 3
OP_ATOM, OP_AND, OP_OR = 0, 1, 2


@njit(cache=True)
def _smooth_into(values, coeffs, start, length, out):
    nb = values.size
    for b in range(nb):
        c = values[b]
        acc = c  # residual form: constant spectra pass through bit-exactly
        s = start[b]
        for k in range(length[b]):
            acc += coeffs[b, k] * (values[s + k] - c)
        out[b] = acc


@njit(cache=True)
def _upper_hull_into(v, stack, hull):
    nb = v.size
    m = 0
    for i in range(nb):
        while m >= 2:
            x0 = stack[m - 2]
            x1 = stack[m - 1]
            cross = (x1 - x0) * (v[i] - v[x0]) - (v[x1] - v[x0]) * (i - x0)
            if cross >= 0.0:
                m -= 1
            else:
                break
        stack[m] = i
        m += 1
    for k in range(m - 1):
        i0 = stack[k]
        i1 = stack[k + 1]
        hull[i0] = v[i0]
        for b in range(i0 + 1, i1):
            t = (b - i0) / (i1 - i0)
            h = v[i0] + (v[i1] - v[i0]) * t
            if h < v[b]:  # interpolation rounding must not dip below the spectrum
                h = v[b]
            hull[b] = h
    hull[stack[m - 1]] = v[stack[m - 1]]


@njit(cache=True)
def _curvature_into(cr, x_scale, kappa):
    nb = cr.size
    xs2 = x_scale * x_scale
    for b in range(nb):
        if b == 0:
            fd = (cr[1] - cr[0]) / x_scale
            sd = ((cr[2] - 2.0 * cr[1]) + cr[0]) / xs2
        elif b == nb - 1:
            fd = (cr[nb - 1] - cr[nb - 2]) / x_scale
            sd = ((cr[nb - 1] - 2.0 * cr[nb - 2]) + cr[nb - 3]) / xs2
        else:
            fd = (cr[b + 1] - cr[b - 1]) / 2.0 / x_scale
            sd = ((cr[b + 1] - 2.0 * cr[b]) + cr[b - 1]) / xs2
        kappa[b] = sd / (1.0 + fd * fd) ** 1.5


@njit(cache=True, parallel=True)
def classify_pixels(data2d, valid, coeffs, start, length,
                    ratio_mode, x_scale,
                    prog_op, prog_arg, rule_start, rule_end,
                    atom_feat, atom_band, atom_cmp, atom_thr,
                    max_stack, labels):
    npix, nb = data2d.shape
    nrules = rule_start.size
    for p in prange(npix):
        if not valid[p]:
            labels[p] = 0
            continue

        vals = np.empty(nb)
        for b in range(nb):
            vals[b] = data2d[p, b]

        sm = np.empty(nb)
        _smooth_into(vals, coeffs, start, length, sm)

        stack = np.empty(nb, np.int64)
        hull = np.empty(nb)
        _upper_hull_into(sm, stack, hull)

        cr = np.empty(nb)
        bad = False
        if ratio_mode:
            for b in range(nb):
                if hull[b] <= 0.0:
                    bad = True
                    break
                cr[b] = sm[b] / hull[b]
        else:
            for b in range(nb):
                cr[b] = hull[b] - sm[b]
        if bad:
            labels[p] = 0
            continue

        kappa = np.empty(nb)
        _curvature_into(cr, x_scale, kappa)

        bstack = np.empty(max_stack, np.bool_)
        label = 0
        for r in range(nrules):
            sp = 0
            for t in range(rule_start[r], rule_end[r]):
                op = prog_op[t]
                if op == OP_ATOM:
                    a = prog_arg[t]
                    f = atom_feat[a]
                    if f == FEAT_CV:
                        x = kappa[atom_band[a]]
                    elif f == FEAT_CRRV:
                        x = cr[atom_band[a]]
                    else:
                        x = vals[atom_band[a]]
                    c = atom_cmp[a]
                    th = atom_thr[a]
                    if c == CMP_LT:
                        res = x < th
                    elif c == CMP_LE:
                        res = x <= th
                    elif c == CMP_GT:
                        res = x > th
                    else:
                        res = x >= th
                    bstack[sp] = res
                    sp += 1
                elif op == OP_AND:
                    sp -= 1
                    bstack[sp - 1] = bstack[sp - 1] and bstack[sp]
                else:
                    sp -= 1
                    bstack[sp - 1] = bstack[sp - 1] or bstack[sp]
            if bstack[0]:
                label = r + 1
                break
        labels[p] = label
