"""Approximation constants: average singular values of Gaussian matrices.

alpha(d, r) is E[(1/d) sum_j sigma_j(G)] for a d x r Gaussian G with entry
variance 1/r; alpha(d) = alpha(d, d). The rounding guarantee is alpha^2.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError, InputError, UnsupportedError
from .linalg import RngSeed, check_field, gaussian_matrix, singular_values

MP_LIMIT = 8.0 / (3.0 * math.pi)
_CHUNK_ENTRIES = 1 << 21


@dataclass
class AlphaEstimate:
    value: float
    method: str
    samples: int
    std_error: float
    d: int
    r: int
    field: str
    seed: Optional[int] = None

    def to_json(self) -> dict:
        return asdict(self)


def _mc_values(d: int, r: int, field: str, count: int, seed: RngSeed) -> np.ndarray:
    g = gaussian_matrix(d, r, 1.0 / r, field, seed, batch=count)
    if d == 1:
        return np.linalg.norm(g[:, 0, :], axis=-1)
    return singular_values(g).mean(axis=-1)


def alpha_samples(d: int, r: Optional[int] = None, field: str = "real", samples: int = 100_000,
                  seed=0, jobs: int = 1) -> np.ndarray:
    """Per-sample average singular values, in a job-count independent order."""
    r = d if r is None else r
    check_field(field)
    if d < 1 or r < d:
        raise InputError(f"need 1 <= d <= r, got d={d}, r={r}")
    base = seed if isinstance(seed, RngSeed) else RngSeed(int(seed))
    chunk = max(1, _CHUNK_ENTRIES // (d * r))
    starts = list(range(0, samples, chunk))

    def run(k):
        s = starts[k]
        return _mc_values(d, r, field, min(chunk, samples - s), base.spawn(k))

    if jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(jobs) as ex:
            parts = list(ex.map(run, range(len(starts))))
    else:
        parts = [run(k) for k in range(len(starts))]
    return np.concatenate(parts)


def alpha_mc(d: int, r: Optional[int] = None, field: str = "real", samples: int = 100_000,
             seed=0, jobs: int = 1) -> AlphaEstimate:
    """Monte Carlo estimate with its standard error (sample sd / sqrt(samples))."""
    if samples < 1000:
        raise InputError("alpha_mc needs at least 1000 samples")
    r = d if r is None else r
    vals = alpha_samples(d, r, field, samples, seed, jobs)
    se = float(np.std(vals, ddof=1) / math.sqrt(samples))
    s = seed.seed if isinstance(seed, RngSeed) else int(seed)
    return AlphaEstimate(float(np.mean(vals)), "monte-carlo", samples, se, d, r, field, s)


_SQRT_PI = math.sqrt(math.pi)
_CLOSED = {
    ("real", 1): math.sqrt(2 / math.pi),
    ("real", 2): (2 * math.sqrt(2) - 1) / 4 * _SQRT_PI,
    ("real", 3): (4 * math.sqrt(2) + 3 * math.pi) / (6 * math.sqrt(3 * math.pi)),
    ("complex", 1): _SQRT_PI / 2,
    ("complex", 2): 11 * math.sqrt(math.pi / 2) / 16,
    ("complex", 3): 107 * math.sqrt(math.pi / 3) / 128,
}


def alpha_closed_form(d: int, field: str = "real") -> AlphaEstimate:
    check_field(field)
    try:
        v = _CLOSED[(field, d)]
    except KeyError:
        raise UnsupportedError(f"no closed form stored for d={d}") from None
    return AlphaEstimate(v, "closed-form", 0, 0.0, d, d, field)


def laguerre_values(nmax: int, x: np.ndarray) -> np.ndarray:
    """L_0..L_nmax at ``x`` by the three-term recurrence; shape (nmax+1, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 1.0 - x
    for k in range(1, nmax):
        out[k + 1] = ((2 * k + 1 - x) * out[k] - k * out[k - 1]) / (k + 1)
    return out


def alpha_complex_laguerre(d: int, order: Optional[int] = None) -> AlphaEstimate:
    """alpha_C(d) = d^{-3/2} sum_{n<d} int_0^inf x^{1/2} e^{-x} L_n(x)^2 dx.

    Each integral has a polynomial integrand of degree <= 2d - 2 against the
    weight x^{1/2} e^{-x}, so generalized Gauss-Laguerre with ``order`` >= d
    nodes is exact up to rounding.
    """
    if d < 1:
        raise InputError("d must be >= 1")
    order = 2 * d + 10 if order is None else order
    if order < 2 * d + 10:
        raise InputError(f"order must be >= 2d + 10 = {2 * d + 10}")
    nodes, weights = special.roots_genlaguerre(order, 0.5)
    lag = laguerre_values(d - 1, nodes)
    t = (lag ** 2) @ weights
    return AlphaEstimate(float(t.sum() / d ** 1.5), "laguerre-quadrature", 0, 0.0, d, d, "complex")


def alpha_lower_bounds(d: int, field: str = "real") -> float:
    """Guaranteed lower bound on alpha(d); negative for small d, returned as is."""
    check_field(field)
    if d < 1:
        raise InputError("d must be >= 1")
    if field == "complex":
        return MP_LIMIT - 4.0 / d
    return MP_LIMIT - 3.0 / math.sqrt(d) - 4.0 / d


def alpha_chi_1r(r: int) -> AlphaEstimate:
    """alpha_R(1, r): mean of a chi variable with r degrees of freedom, scaled by 1/sqrt(r)."""
    if r < 1:
        raise InputError("r must be >= 1")
    v = math.exp(0.5 * math.log(2.0 / r) + special.gammaln((r + 1) / 2) - special.gammaln(r / 2))
    return AlphaEstimate(v, "closed-form", 0, 0.0, 1, r, "real")


def stiefel_lower_bound(d: int, r: int) -> float:
    """1 - sqrt(d/r), a lower bound on alpha_R(d, r)."""
    return 1.0 - math.sqrt(d / r)


def mp_limit() -> float:
    return MP_LIMIT


def mp_limit_quadrature() -> float:
    """int_0^4 sqrt(x) mp(x) dx with the Marchenko-Pastur density of ratio 1."""
    def f(x):
        return math.sqrt(x) * math.sqrt(x * (4 - x)) / (2 * math.pi * x)

    val, _ = integrate.quad(f, 0.0, 4.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def phi_rho(rho: float) -> float:
    """Large-d limit of alpha_R(d, rho d): E sqrt(x) under Marchenko-Pastur with ratio 1/rho.

    Substituting x = a + (b - a)(1 - cos t)/2 turns the square-root endpoint
    behaviour of the density into a smooth integrand on [0, pi].
    """
    if rho < 1:
        raise DomainError("rho must be >= 1")
    lam = 1.0 / rho
    a = (1 - math.sqrt(lam)) ** 2
    b = (1 + math.sqrt(lam)) ** 2
    h = (b - a) / 2

    def f(t):
        x = a + h * (1 - math.cos(t))
        if x <= 0:
            return 0.0
        s = math.sin(t)
        return h * h * s * s / (2 * math.pi * lam * math.sqrt(x))

    val, _ = integrate.quad(f, 0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


@dataclass
class AlphaStarProbe:
    d: int
    candidates: np.ndarray      # (k, d) diagonal entries; row 0 is the identity
    values: np.ndarray
    std_errors: np.ndarray
    diff_std_errors: np.ndarray  # paired SE of value - value[identity]
    samples: int
    argmax: int
    argmax_raw: int

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "samples": self.samples,
            "argmax": self.argmax,
            "argmax_raw": self.argmax_raw,
            "candidates": self.candidates.tolist(),
            "values": self.values.tolist(),
            "std_errors": self.std_errors.tolist(),
            "diff_std_errors": self.diff_std_errors.tolist(),
        }


def _as_diagonal(cand, d: int) -> np.ndarray:
    cand = np.asarray(cand, dtype=float)
    if cand.shape == (d, d):
        if np.any(cand - np.diag(np.diag(cand))):
            raise InputError("candidate is not diagonal")
        cand = np.diag(cand)
    if cand.shape != (d,):
        raise InputError(f"candidate must be a length-{d} diagonal, got shape {cand.shape}")
    if np.any(cand < 0):
        raise InputError("candidate has a negative entry")
    if abs(float(cand @ cand) - d) > 1e-10:
        raise InputError(f"candidate has ||D||_F^2 = {cand @ cand!r}, expected {d}")
    return cand


def default_candidates(d: int, n_random: int = 24, seed=0) -> np.ndarray:
    """Identity, random feasible diagonals and boundary-like ones (mass on few entries)."""
    rng = (seed if isinstance(seed, RngSeed) else RngSeed(int(seed))).generator()
    rows = [np.ones(d)]
    if d > 1:
        for conc in np.geomspace(0.3, 30.0, n_random):
            w = rng.dirichlet(np.full(d, conc))
            rows.append(np.sqrt(d * w))
        for k in range(1, d):
            v = np.zeros(d)
            v[:k] = math.sqrt(d / k)
            rows.append(v)
        for eps in (0.05, 0.2):
            w = np.full(d, eps / (d - 1))
            w[0] = 1 - eps
            rows.append(np.sqrt(d * w))
    out = np.array(rows)
    out *= np.sqrt(d / np.sum(out ** 2, axis=1))[:, None]
    return out


def alpha_star_probe(d: int, candidates: Optional[Sequence] = None, samples: int = 100_000,
                     seed=0) -> AlphaStarProbe:
    """E (1/d) sum_k sigma_k(G D) for each candidate diagonal D.

    All candidates share the same Gaussian draws, so differences against the
    identity have small paired standard errors. The reported ``argmax`` is the
    identity unless some candidate beats it by more than 3 paired SEs.
    """
    if candidates is None:
        cands = default_candidates(d, seed=seed)
    else:
        cands = np.array([_as_diagonal(c, d) for c in candidates])
        if not np.allclose(cands[0], 1.0):
            cands = np.vstack([np.ones(d), cands])
    for row in cands:
        _as_diagonal(row, d)
    base = seed if isinstance(seed, RngSeed) else RngSeed(int(seed))
    k = len(cands)
    chunk = max(1, _CHUNK_ENTRIES // (d * d * k))
    vals = np.empty((k, samples))
    for j, s in enumerate(range(0, samples, chunk)):
        cnt = min(chunk, samples - s)
        g = gaussian_matrix(d, d, 1.0 / d, "real", base.spawn(j), batch=cnt)
        scaled = g[None, :, :, :] * cands[:, None, None, :]
        vals[:, s:s + cnt] = singular_values(scaled).mean(axis=-1)
    means = vals.mean(axis=1)
    ses = vals.std(axis=1, ddof=1) / math.sqrt(samples)
    diff = vals - vals[0]
    diff_se = diff.std(axis=1, ddof=1) / math.sqrt(samples)
    raw = int(np.argmax(means))
    best = raw
    if raw != 0 and means[raw] - means[0] <= 3 * diff_se[raw]:
        best = 0
    return AlphaStarProbe(d, cands, means, ses, diff_se, samples, best, raw)


def alpha_reference(d: int, field: str = "real", samples: int = 200_000, seed=0) -> AlphaEstimate:
    """Best available alpha(d): closed form for d <= 3, Laguerre sum for complex, else Monte Carlo."""
    if d <= 3:
        return alpha_closed_form(d, field)
    if field == "complex":
        return alpha_complex_laguerre(d)
    return alpha_mc(d, d, field, samples, seed)
