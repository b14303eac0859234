"""Jitted inner loop of the team simulation.

Evaluates, for every robot at once: the plant dynamics row, the known-model
feedforward row, and one dynamics column per adapting parameter, then the
sliding variables, control torque and joint accelerations.  Pure loops over
tiny dimensions; the numpy kernel in coopadapt.dynamics is the reference
implementation this must match (see the engine equivalence tests).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _solve(a, b, x):
    """Gaussian elimination with partial pivoting; returns False if singular."""
    n = a.shape[0]
    m = np.empty((n, n + 1))
    for i in range(n):
        for j in range(n):
            m[i, j] = a[i, j]
        m[i, n] = b[i]
    for col in range(n):
        piv = col
        best = abs(m[col, col])
        for r in range(col + 1, n):
            if abs(m[r, col]) > best:
                best = abs(m[r, col])
                piv = r
        if best < 1e-300:
            return False
        if piv != col:
            for j in range(n + 1):
                tmp = m[col, j]
                m[col, j] = m[piv, j]
                m[piv, j] = tmp
        inv = 1.0 / m[col, col]
        for r in range(col + 1, n):
            f = m[r, col] * inv
            if f != 0.0:
                for j in range(col, n + 1):
                    m[r, j] -= f * m[col, j]
    for i in range(n - 1, -1, -1):
        acc = m[i, n]
        for j in range(i + 1, n):
            acc -= m[i, j] * x[j]
        x[i] = acc / m[i, i]
    return True


@njit(cache=True)
def team_eval(lengths, offsets, gx, gy, A, wff, q, qd, refq, refqd, refqdd,
              lam, kd_diag, closed_loop, want_extras,
              out_qdd, out_s, out_cols, out_tau, out_h0,
              out_mom, out_ctqd, out_g, out_ke, out_pe):
    """One dynamics evaluation for the whole team.

    A[r, p] holds per-link parameter rows: row 0 the plant, the rest the
    control/adaptation columns, combined by the feedforward weights wff
    (row 0 ignored).  Returns 0 on success, 1 + robot index on a singular
    plant mass matrix.
    """
    R, P, n, _ = A.shape
    th = np.empty(n)
    cth = np.empty(n)
    sth = np.empty(n)
    cumNx = np.empty(n + 1)
    cumNy = np.empty(n + 1)
    cumEx = np.empty(n + 1)
    cumEy = np.empty(n + 1)
    Jx = np.empty((n, n))
    Jy = np.empty((n, n))
    dJx = np.empty((n, n, n))
    dJy = np.empty((n, n, n))
    whx = np.empty(n)
    why = np.empty(n)
    dwhx = np.empty((n, n))
    dwhy = np.empty((n, n))
    H = np.empty((P, n, n))
    dH = np.empty((P, n, n, n))
    g = np.empty((P, n))
    C = np.empty((P, n, n))
    qr_d = np.empty(n)
    qr_dd = np.empty(n)
    rhs = np.empty(n)
    x = np.empty(n)

    for r in range(R):
        acc = 0.0
        for i in range(n):
            acc += q[r, i] + offsets[r, i]
            th[i] = acc
            cth[i] = math.cos(acc)
            sth[i] = math.sin(acc)
        cumNx[0] = 0.0
        cumNy[0] = 0.0
        cumEx[0] = 0.0
        cumEy[0] = 0.0
        for i in range(n):
            cumNx[i + 1] = cumNx[i] - lengths[r, i] * sth[i]
            cumNy[i + 1] = cumNy[i] + lengths[r, i] * cth[i]
            cumEx[i + 1] = cumEx[i] + lengths[r, i] * cth[i]
            cumEy[i + 1] = cumEy[i] + lengths[r, i] * sth[i]
        for b in range(n):
            for j in range(n):
                if j < b:
                    Jx[b, j] = cumNx[b] - cumNx[j]
                    Jy[b, j] = cumNy[b] - cumNy[j]
                else:
                    Jx[b, j] = 0.0
                    Jy[b, j] = 0.0
                for m_ in range(n):
                    mx = j if j > m_ else m_
                    if mx < b:
                        dJx[b, m_, j] = -(cumEx[b] - cumEx[mx])
                        dJy[b, m_, j] = -(cumEy[b] - cumEy[mx])
                    else:
                        dJx[b, m_, j] = 0.0
                        dJy[b, m_, j] = 0.0

        for p in range(P):
            for i in range(n):
                g[p, i] = 0.0
                for j in range(n):
                    H[p, i, j] = 0.0
                    for k in range(n):
                        dH[p, k, i, j] = 0.0

        for b in range(n):
            nbx = -sth[b]
            nby = cth[b]
            ebx = cth[b]
            eby = sth[b]
            for i in range(n):
                whx[i] = Jx[b, i] * nbx + Jy[b, i] * nby
                why[i] = -(Jx[b, i] * ebx + Jy[b, i] * eby)
                for k in range(n):
                    sk = 1.0 if k <= b else 0.0
                    dwhx[k, i] = dJx[b, k, i] * nbx + dJy[b, k, i] * nby + why[i] * sk
                    dwhy[k, i] = -(dJx[b, k, i] * ebx + dJy[b, k, i] * eby) - whx[i] * sk
            gdotn = gx * nbx + gy * nby
            gdote = gx * ebx + gy * eby
            for p in range(P):
                am = A[r, p, b, 0]
                ahx = A[r, p, b, 1]
                ahy = A[r, p, b, 2]
                aizz = A[r, p, b, 3]
                if am == 0.0 and ahx == 0.0 and ahy == 0.0 and aizz == 0.0:
                    continue
                for i in range(n):
                    si = 1.0 if i <= b else 0.0
                    g[p, i] += -am * (gx * Jx[b, i] + gy * Jy[b, i]) - ahx * gdotn * si + ahy * gdote * si
                    for j in range(n):
                        sj = 1.0 if j <= b else 0.0
                        H[p, i, j] += (
                            am * (Jx[b, i] * Jx[b, j] + Jy[b, i] * Jy[b, j])
                            + ahx * (whx[i] * sj + si * whx[j])
                            + ahy * (why[i] * sj + si * why[j])
                            + aizz * si * sj
                        )
                        for k in range(n):
                            dH[p, k, i, j] += (
                                am * (dJx[b, k, i] * Jx[b, j] + dJy[b, k, i] * Jy[b, j]
                                      + Jx[b, i] * dJx[b, k, j] + Jy[b, i] * dJy[b, k, j])
                                + ahx * (dwhx[k, i] * sj + si * dwhx[k, j])
                                + ahy * (dwhy[k, i] * sj + si * dwhy[k, j])
                            )

        for p in range(P):
            for i in range(n):
                for j in range(n):
                    acc2 = 0.0
                    for k in range(n):
                        acc2 += (dH[p, k, i, j] + dH[p, j, i, k] - dH[p, i, j, k]) * qd[r, k]
                    C[p, i, j] = 0.5 * acc2

        for i in range(n):
            qt = q[r, i] - refq[r, i]
            qtd = qd[r, i] - refqd[r, i]
            out_s[r, i] = qtd + lam[i] * qt
            qr_d[i] = refqd[r, i] - lam[i] * qt
            qr_dd[i] = refqdd[r, i] - lam[i] * qtd

        for p in range(1, P):
            for i in range(n):
                acc3 = g[p, i]
                for j in range(n):
                    acc3 += H[p, i, j] * qr_dd[j] + C[p, i, j] * qr_d[j]
                out_cols[r, p, i] = acc3

        for i in range(n):
            if closed_loop:
                acc4 = -kd_diag[i] * out_s[r, i]
                for p in range(1, P):
                    w = wff[r, p]
                    if w != 0.0:
                        acc4 += w * out_cols[r, p, i]
                out_tau[r, i] = acc4
            else:
                out_tau[r, i] = 0.0

        for i in range(n):
            acc5 = out_tau[r, i] - g[0, i]
            for j in range(n):
                acc5 -= C[0, i, j] * qd[r, j]
            rhs[i] = acc5
        if not _solve(H[0], rhs, x):
            return 1 + r
        for i in range(n):
            out_qdd[r, i] = x[i]

        if want_extras:
            for i in range(n):
                for j in range(n):
                    out_h0[r, i, j] = H[0, i, j]
            pe = 0.0
            for b in range(n):
                pe -= (
                    A[r, 0, b, 0] * (gx * cumEx[b] + gy * cumEy[b])
                    + A[r, 0, b, 1] * (gx * cth[b] + gy * sth[b])
                    + A[r, 0, b, 2] * (-gx * sth[b] + gy * cth[b])
                )
            out_pe[r] = pe
            for p in range(P):
                kin = 0.0
                for i in range(n):
                    acc6 = 0.0
                    acc7 = 0.0
                    for j in range(n):
                        acc6 += H[p, i, j] * qd[r, j]
                        acc7 += C[p, j, i] * qd[r, j]
                    out_mom[r, p, i] = acc6
                    out_ctqd[r, p, i] = acc7
                    out_g[r, p, i] = g[p, i]
                    kin += 0.5 * qd[r, i] * acc6
                out_ke[r, p] = kin
    return 0
