"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import numpy as np


def nsoliton_closed_form(zetas, q_ds, t, dps: int = 40):
    """Reflectionless potential from the linear-algebra (Gram matrix) formula.

    q(t) = -2j sum_k conj(E_k) w_k with (I + M conj(M)) w = 1,
    E_k = Q_k exp(2j zeta_k t) and M_mk = E_k / (conj(zeta_m) - zeta_k).
    The system is badly conditioned away from the pulses, so it is solved in
    ``dps``-digit arithmetic.
    """
    import mpmath as mp

    with mp.workdps(dps):
        zs = [mp.mpc(complex(z)) for z in zetas]
        qs = [mp.mpc(complex(q)) for q in q_ds]
        n = len(zs)
        out = np.empty(len(t), dtype=complex)
        for i, ti in enumerate(t):
            ti = mp.mpf(float(ti))
            E = [q * mp.exp(2j * z * ti) for z, q in zip(zs, qs)]
            M = mp.matrix(n, n)
            for m in range(n):
                for k in range(n):
                    M[m, k] = E[k] / (mp.conj(zs[m]) - zs[k])
            Mc = mp.matrix(n, n)
            for r in range(n):
                for c in range(n):
                    Mc[r, c] = mp.conj(M[r, c])
            w = mp.lu_solve(mp.eye(n) + M * Mc, mp.matrix([1] * n))
            out[i] = complex(-2j * sum(mp.conj(E[k]) * w[k] for k in range(n)))
    return out


def zs_brute_force(q, t, lam, substeps=8):
    """a(lam), b(lam) by classical RK4 on the scattering system.

    ``q`` is either a callable evaluated exactly at the sub-step nodes or an
    array of samples on ``t`` that is linearly interpolated.
    """
    lam = complex(lam)
    dt = t[1] - t[0]
    h = dt / substeps
    tt = np.arange(t[0], t[-1] + 0.25 * h, 0.5 * h)  # half-step nodes
    if callable(q):
        qq = np.asarray(q(tt), dtype=complex)
    else:
        qq = np.interp(tt, t, q.real) + 1j * np.interp(tt, t, q.imag)

    def f(v, qi):
        return np.array([-1j * lam * v[0] + qi * v[1], -np.conj(qi) * v[0] + 1j * lam * v[1]])

    v = np.array([np.exp(-1j * lam * tt[0]), 0j])
    for i in range(0, len(tt) - 2, 2):
        q0, qm, q1 = qq[i], qq[i + 1], qq[i + 2]
        k1 = f(v, q0)
        k2 = f(v + 0.5 * h * k1, qm)
        k3 = f(v + 0.5 * h * k2, qm)
        k4 = f(v + h * k3, q1)
        v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    tend = tt[-1]
    return v[0] * np.exp(1j * lam * tend), v[1] * np.exp(-1j * lam * tend)


def moment_closure():
    """Exact moments of the Ito system for (ups_R, ups_I) and their integrals.

    dx = sqrt(eps2 (b0 + y) / 6) dW1, dy = eps2/2 dz + sqrt(eps2 (b0 + y) / 2) dW2,
    dgR = x dz, dgI = y dz, dgRI = x y dz, all started at zero. Polynomial
    moments close, so E[f](z) = sum_k z^k/k! (A^k f)(0) terminates, A being
    the generator. Returns (E, symbols).
    """
    import sympy as sp

    e2, b0, z = sp.symbols("e2 b0 z", positive=True)
    x, y, gR, gI, gRI = sp.symbols("x y gR gI gRI")
    V = (x, y, gR, gI, gRI)
    sR2 = e2 * (b0 + y) / 6
    sI2 = e2 * (b0 + y) / 2

    def gen(f):
        return (sp.Rational(1, 2) * e2 * sp.diff(f, y) + x * sp.diff(f, gR) + y * sp.diff(f, gI)
                + x * y * sp.diff(f, gRI) + sR2 / 2 * sp.diff(f, x, 2) + sI2 / 2 * sp.diff(f, y, 2))

    def E(f):
        term = sp.expand(f)
        out, k = 0, 0
        while term != 0:
            out += z**k / sp.factorial(k) * term.subs({v: 0 for v in V})
            term = sp.expand(gen(term))
            k += 1
        return sp.expand(out)

    syms = dict(e2=e2, b0=b0, z=z, x=x, y=y, gR=gR, gI=gI, gRI=gRI)
    return E, syms
