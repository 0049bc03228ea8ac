"""Independent oracles for the test suite.

The schedule evaluators here recompute the parameter formulas with
50-digit Decimal arithmetic, sharing no code with the package (that is the
point: they catch transcription slips in the float pipeline). The closed
forms cover exp(-s theta) on an interval, which is where every d=1
ground-truth comparison comes from.
"""

from __future__ import annotations

import math
from decimal import ROUND_CEILING, Decimal, getcontext

import numpy as np

from polysamp.geometry import Polytope

getcontext().prec = 50


def dec_schedule(eps: float, L: float, r: float, R: float, d: int) -> dict:
    """Converter parameter schedule, evaluated in high precision.

    Returns tau_raw/delta/delta_log as floats (rounded from 50-digit
    Decimals) plus the integer tau_max.
    """
    eps_d, L_d, r_d, R_d = (Decimal(v) for v in (eps, L, r, R))
    d_d = Decimal(d)
    tau_raw = 5 * d_d * (R_d / r_d).ln() + 5 * L_d * R_d + eps_d
    tau_max = int(tau_raw.to_integral_value(rounding=ROUND_CEILING))
    delta = eps_d / (512 * tau_max * max(d_d, L_d * R_d))
    delta_log = (eps_d / 64).ln() - d_d * (R_d / (delta * r_d)).ln() - L_d * R_d
    return {
        "tau_raw": float(tau_raw),
        "tau_max": tau_max,
        "delta": float(delta),
        "delta_log": float(delta_log),
    }


def dec_mixing(m: int, d: int, L: float, r: float, R: float, delta_log: float, c_mix: float) -> int:
    """Walk length T = max(1, ceil(c_mix poly(m,d) (log w - delta_log)))."""
    L_d, r_d, R_d = Decimal(L), Decimal(r), Decimal(R)
    m_d, d_d = Decimal(m), Decimal(d)
    poly = m_d**2 * d_d**3 + m_d**2 * d_d * (L_d * R_d) ** 2
    logw = d_d * (R_d / r_d).ln() + L_d * R_d
    raw = Decimal(c_mix) * poly * (logw - Decimal(delta_log))
    return max(1, int(raw.to_integral_value(rounding=ROUND_CEILING)))


# ---------------------------------------------------------------------------
# Closed forms for pi proportional to exp(-s theta) on [a, b]
# ---------------------------------------------------------------------------


def exp_interval_masses(s: float, lo: float, hi: float, nbins: int) -> np.ndarray:
    """Exact normalized cell masses of exp(-s theta) over a uniform grid."""
    edges = np.linspace(lo, hi, nbins + 1)
    if s == 0:
        raw = np.diff(edges)
    else:
        raw = (np.exp(-s * edges[:-1]) - np.exp(-s * edges[1:])) / s
    return raw / raw.sum()


def exp_interval_cdf(s: float, a: float, b: float, x: float) -> float:
    """P(theta <= x) under exp(-s theta) restricted to [a, b]."""
    if s == 0:
        return (x - a) / (b - a)
    return (math.exp(-s * a) - math.exp(-s * x)) / (math.exp(-s * a) - math.exp(-s * b))


def exp_interval_mean(s: float, a: float, b: float) -> float:
    """E[theta] under exp(-s theta) on [a, b]."""
    if s == 0:
        return 0.5 * (a + b)
    za = math.exp(-s * a)
    zb = math.exp(-s * b)
    # integral of theta e^{-s theta} = ((a + 1/s) za - (b + 1/s) zb) / s
    num = ((a + 1 / s) * za - (b + 1 / s) * zb) / s
    return num / ((za - zb) / s)


def mech_mean_symmetric(k: float) -> float:
    """E[theta] for exp(-k theta) on [-1, 1]: 1/k - coth(k)."""
    if k == 0:
        return 0.0
    return 1.0 / k - math.cosh(k) / math.sinh(k)


# ---------------------------------------------------------------------------
# Polytope builders
# ---------------------------------------------------------------------------


def box_polytope(half: float, d: int, r: float | None = None, R: float | None = None) -> Polytope:
    """[-half, half]^d with an honest (or caller-supplied) r and R."""
    A = np.vstack([np.eye(d), -np.eye(d)])
    b = np.full(2 * d, half)
    if r is None:
        r = half
    if R is None:
        R = half * math.sqrt(d)
    return Polytope(A, b, np.zeros(d), r, R)


def segment(r: float = 1.0, R: float = 2.0) -> Polytope:
    """K = [-1, 1] with the declared radii used by the worked examples."""
    return Polytope(np.array([[1.0], [-1.0]]), np.ones(2), np.zeros(1), r, R)


def square(R: float = 2.0) -> Polytope:
    """K = [-1, 1]^2, R declared loosely as in the worked examples."""
    return box_polytope(1.0, 2, r=1.0, R=R)


def random_polytope(rng: np.random.Generator, d: int, m_extra: int | None = None) -> Polytope:
    """A bounded random polytope with certified inner and outer balls.

    A box [-W, W]^d keeps it bounded (so R = W sqrt(d) is honest); extra
    random half-spaces are pushed out far enough that a ball of radius r0
    around the origin stays inside. Total facets stay <= 12.
    """
    W = float(rng.uniform(0.5, 2.0))
    r0 = W * float(rng.uniform(0.2, 0.8))
    if m_extra is None:
        m_extra = int(rng.integers(0, 12 - 2 * d + 1))
    rows = [np.eye(d), -np.eye(d)]
    offs = [np.full(d, W), np.full(d, W)]
    if m_extra:
        dirs = rng.standard_normal((m_extra, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        # slack beyond r0 so the inner ball never touches these facets
        push = r0 + rng.uniform(0.05, 1.5, size=m_extra) * W
        rows.append(dirs)
        offs.append(push)
    A = np.vstack(rows)
    b = np.concatenate(offs)
    return Polytope(A, b, np.zeros(d), r0, W * math.sqrt(d))


def uniform_in_polytope(P: Polytope, rng: np.random.Generator, n: int) -> np.ndarray:
    """n uniform points in K by rejection from the bounding box (tests only)."""
    from polysamp.geometry import contains_many
    from polysamp.oracle import box_bounds

    lo, hi = box_bounds(P)
    out = np.empty((n, P.d))
    got = 0
    while got < n:
        X = lo + (hi - lo) * rng.random((4 * n + 64, P.d))
        X = X[contains_many(P, X)]
        take = min(n - got, X.shape[0])
        out[got : got + take] = X[:take]
        got += take
    return out
