"""Vectorized evaluation of phi, Birkhoff sums and the special flow.

Batch points are dyadic: ``x = u / 2**32`` with ``u`` a uint64 array, so
that ``{q x}`` is exact for any big-integer ``q`` using only
``(q mod 2**32) * u mod 2**32``.  A point of the orbit ``x + k alpha`` is
carried as the pair ``(u, k)``; the term phases ``{q x} + k theta`` are
formed with a split multiply that keeps ``k * theta_hi`` exact.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .ceiling import CeilingSpec, TWO_PI
from .errors import InvalidInputError, ResonanceError

DYADIC_BITS = 32
DYADIC = 1 << DYADIC_BITS
_MASK = np.uint64(DYADIC - 1)
_SPLIT = 2.0**26
TIE_RTOL = 1e-12


def _split(v: Fraction):
    """v = hi + lo with hi on a 2**-26 grid, sign kept on both parts."""
    sign = -1.0 if v < 0 else 1.0
    a = abs(v)
    hi = math.floor(a * int(_SPLIT)) / _SPLIT
    lo = float(a - Fraction(hi))
    return sign * hi, sign * lo


def _frac_mul(k, hi, lo, period=1.0):
    """k * (hi + lo) reduced to [-period/2, period/2].

    k * hi is exact for |k| < 2**27, so the reduction loses nothing and
    tiny products keep their full relative precision.
    """
    k = np.asarray(k, dtype=np.float64)
    if np.any(np.abs(k) >= 2.0**27):
        raise InvalidInputError("orbit offset too large for the batch engine")
    a = np.fmod(k * hi, period)
    a = a - period * np.round(a / period)
    v = a + k * lo
    return v - period * np.round(v / period)


def dyadic_from_unit(v):
    """Round floats in [0, 1) to dyadic numerators."""
    u = np.floor(np.asarray(v, dtype=np.float64) * DYADIC)
    return np.mod(u, DYADIC).astype(np.uint64)


def dyadic_to_fraction(u):
    return tuple(Fraction(int(c), DYADIC) for c in u)


class BatchEngine:
    """Precomputed term table of a CeilingSpec for array evaluation."""

    def __init__(self, spec: CeilingSpec):
        self.spec = spec
        act = spec.active_terms
        for t in act:
            if t.shift == 0:
                raise ResonanceError(t.j, t.n)
        self.j = np.array([t.j - 1 for t in act], dtype=np.int64)
        self.qmod = np.array([t.q % DYADIC for t in act], dtype=np.uint64)
        self.q = np.array([float(t.q) for t in act])
        self.amp = np.array([t.amplitude for t in act])
        self.theta = np.array([float(t.shift) for t in act])
        splits = [_split(t.shift) for t in act]
        self.theta_hi = np.array([s[0] for s in splits])
        self.theta_lo = np.array([s[1] for s in splits])
        asplit = [_split(a) for a in spec.fv.alphas]
        self.alpha_hi = np.array([s[0] for s in asplit])
        self.alpha_lo = np.array([s[1] for s in asplit])
        self.sin_theta = np.sin(np.pi * self.theta)
        self.A = spec.amplitude_sum

    @property
    def nterms(self):
        return len(self.amp)

    # -- phases ------------------------------------------------------------

    def phases(self, u, k=None):
        """Term phases {q_t (x + k alpha)_j} in [0, 1), shape (n, T)."""
        u = np.asarray(u, dtype=np.uint64)
        prod = (u[:, self.j] * self.qmod[None, :]) & _MASK
        p = prod.astype(np.float64) / DYADIC
        if k is not None:
            k = np.asarray(k)
            off = _frac_mul(k[:, None], self.theta_hi[None, :], self.theta_lo[None, :])
            p = np.mod(p + off, 1.0)
        return p

    def shift_phases(self, P, k):
        """Phases of x + k alpha given the phases P of x."""
        k = np.asarray(k)
        off = _frac_mul(k[:, None], self.theta_hi[None, :], self.theta_lo[None, :])
        return np.mod(P + off, 1.0)

    def coords(self, u, k=None):
        """Float coordinates of x + k alpha in [0, 1), shape (n, 4)."""
        x = np.asarray(u, dtype=np.uint64).astype(np.float64) / DYADIC
        if k is not None:
            k = np.asarray(k)
            off = _frac_mul(k[:, None], self.alpha_hi[None, :], self.alpha_lo[None, :])
            x = np.mod(x + off, 1.0)
        return x

    # -- phi and Birkhoff sums --------------------------------------------

    def phi(self, P):
        return 1.0 + np.cos(TWO_PI * P) @ self.amp

    def phi_partial(self, P, j, order=1):
        sel = self.j == (j - 1)
        w = TWO_PI * self.q[sel]
        ang = TWO_PI * P[:, sel]
        if order == 1:
            return -(np.sin(ang) * (w * self.amp[sel])).sum(axis=1)
        return -(np.cos(ang) * (w * w * self.amp[sel])).sum(axis=1)

    def xfactor(self, m, sel=None):
        """X(m) for every term, shape (n, T); m an integer array."""
        if sel is None:
            sel = slice(None)
        m = np.asarray(m)
        hi = self.theta_hi[sel][None, :]
        lo = self.theta_lo[sel][None, :]
        mm = m[:, None]
        a = _frac_mul(mm - 1, hi, lo, 2.0)
        b = _frac_mul(mm, hi, lo, 2.0)
        X = np.exp(1j * np.pi * a) * (np.sin(np.pi * b) / self.sin_theta[sel][None, :])
        return X

    def birkhoff(self, P, m):
        """S_m phi at the points with phases P, for an integer array m."""
        m = np.asarray(m, dtype=np.int64)
        out = m.astype(np.float64).copy()
        if self.nterms:
            X = self.xfactor(m)
            e = np.exp(1j * TWO_PI * P)
            out += ((X * e).real * self.amp[None, :]).sum(axis=1)
        out[m == 0] = 0.0
        one = m == 1
        if np.any(one):
            out[one] = self.phi(P[one])
        return out

    def birkhoff_partial(self, P, m, j, order=1):
        sel = self.j == (j - 1)
        m = np.asarray(m, dtype=np.int64)
        if not np.any(sel):
            return np.zeros(len(m))
        X = self.xfactor(m, sel)
        e = np.exp(1j * TWO_PI * P[:, sel])
        fac = (1j * TWO_PI * self.q[sel]) ** order * self.amp[sel]
        out = (X * e * fac[None, :]).real.sum(axis=1)
        out[m == 0] = 0.0
        return out

    # -- hitting counts and the flow --------------------------------------

    def hit_counts(self, P, tau):
        """N = max{n : S_n phi(x) <= tau} for each point, plus near-tie flags."""
        tau = np.asarray(tau, dtype=np.float64)
        A = self.A
        up, dn = 1.0 + A, 1.0 - A
        pos = tau >= 0
        lo = np.where(pos, np.floor(tau / up), np.floor(tau / dn)) - 2
        hi = np.where(pos, np.ceil(tau / dn), np.ceil(tau / up)) + 2
        lo = lo.astype(np.int64)
        hi = hi.astype(np.int64)
        # invariant: S_lo <= tau < S_hi
        while True:
            open_ = hi - lo > 1
            if not np.any(open_):
                break
            idx = np.nonzero(open_)[0]
            mid = (lo[idx] + hi[idx]) // 2
            S = self.birkhoff(P[idx], mid)
            below = S <= tau[idx]
            lo[idx[below]] = mid[below]
            hi[idx[~below]] = mid[~below]
        S_lo = self.birkhoff(P, lo)
        S_hi = self.birkhoff(P, lo + 1)
        tol = TIE_RTOL * np.maximum(1.0, np.abs(tau))
        g1 = np.abs(tau - S_lo)
        g2 = np.abs(S_hi - tau)
        ties = ((g1 > 0) & (g1 <= tol)) | ((g2 > 0) & (g2 <= tol))
        return lo, S_lo, ties

    def flow(self, u, k, s, t):
        """Image of the points (x + k alpha, s) under the flow for time t.

        Returns (k', s', ties) with the image base point x + k' alpha.
        """
        k = np.asarray(k, dtype=np.int64)
        P = self.phases(u, k)
        tau = np.asarray(s, dtype=np.float64) + np.asarray(t, dtype=np.float64)
        N, S, ties = self.hit_counts(P, tau)
        return k + N, tau - S, ties
