"""Block-coordinate ascent for the relaxation and for the group problem.

Each block update replaces X_i by the polar factor of
``B_i = sum_{j != i} C_ij X_j``, the exact maximizer of the X_i-dependent
part of the objective (the diagonal term tr(C_ii X_i X_i^*) = tr(C_ii) is
constant on the constraint set). Sweeps are Gauss-Seidel in a fixed cyclic
order unless ``shuffle`` is set.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError
from .linalg import RngSeed, adjoint, gaussian_matrix, is_psd, polar
from .problem import PSD_TOL, BlockPsdMatrix, GroupTuple, StiefelTuple, stacked_objective

log = logging.getLogger(__name__)

INITS = ("random", "identity-pad")
_CERTIFY_MAX = 3000


@dataclass
class SolveConfig:
    max_sweeps: int = 1000
    rel_tol: float = 1e-9
    restarts: int = 3
    init: str = "random"
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))
    shuffle: bool = False
    certify: bool = True

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise InputError("max_sweeps must be >= 1")
        if not self.rel_tol > 0:
            raise InputError("rel_tol must be positive")
        if self.restarts < 1:
            raise InputError("restarts must be >= 1")
        if self.init not in INITS:
            raise InputError(f"init must be one of {INITS}")
        if not isinstance(self.seed, RngSeed):
            self.seed = RngSeed(int(self.seed))

    def to_json(self) -> dict:
        out = asdict(self)
        out["seed"] = {"seed": self.seed.seed, "stream": self.seed.stream}
        return out


@dataclass
class SolveReport:
    objective: float
    trajectory: list
    trajectories: list
    residual: float
    sweeps: int
    best_restart: int
    converged: bool
    stationary_blocks: list
    trace_norm_bound: float
    dual_bound: Optional[float]
    config: dict

    @property
    def gap_proxy(self) -> Optional[float]:
        """Dual bound minus objective; ~0 certifies a global optimum."""
        if self.dual_bound is None:
            return None
        return self.dual_bound - self.objective

    def to_json(self) -> dict:
        out = asdict(self)
        out["gap_proxy"] = self.gap_proxy
        return out


@dataclass
class AscentResult:
    blocks: np.ndarray
    trajectory: list
    sweeps: int
    converged: bool
    stationary: np.ndarray


_GROUP = 16


def _fast_polar(b: np.ndarray) -> np.ndarray:
    if b.shape[0] == 1:
        return b / np.linalg.norm(b)
    u, _, vh = np.linalg.svd(b, full_matrices=False)
    return u @ vh


def _ascend(c: BlockPsdMatrix, blocks: np.ndarray, max_sweeps: int, rel_tol: float,
            rng: Optional[np.random.Generator] = None) -> AscentResult:
    # Blocks are visited in groups: one GEMM gives (C Y) for the whole group,
    # then in-group corrections sum_{j<i} C_ij (X_j^new - X_j^old) restore
    # exact Gauss-Seidel order. This keeps memory traffic per update low.
    x = np.ascontiguousarray(blocks, dtype=np.result_type(blocks.dtype, c.data.dtype)).copy()
    n, d, w = x.shape
    diag = c.diagonal_blocks()
    factored = c.factor is not None and c.factor.shape[1] < c.size
    y = x.reshape(n * d, w)
    if factored:
        fac = np.ascontiguousarray(c.factor)
        z = adjoint(fac) @ y
        value = float(np.sum(np.abs(z) ** 2))
    else:
        value = float(stacked_objective(c, y))
    traj = [value]
    stationary = np.zeros(n, dtype=bool)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for g0 in range(0, n, _GROUP):
            idx = order[g0:g0 + _GROUP]
            rows = (idx[:, None] * d + np.arange(d)[None, :]).ravel()
            pg = fac[rows] @ z if factored else c.data[rows] @ y
            cgg = c.data[np.ix_(rows, rows)]
            delta = np.zeros((len(rows), w), dtype=x.dtype)
            for a, i in enumerate(idx):
                lo, hi = a * d, (a + 1) * d
                cyi = pg[lo:hi]
                if a:
                    cyi = cyi + cgg[lo:hi, :lo] @ delta[:lo]
                b = cyi - diag[i] @ x[i]
                if np.linalg.norm(b) <= 1e-12 * np.linalg.norm(cyi):
                    stationary[i] = True
                    continue
                stationary[i] = False
                new = _fast_polar(b)
                delta[lo:hi] = new - x[i]
                x[i] = new
            if factored:
                z += adjoint(fac[rows]) @ delta
        if factored:
            z = adjoint(fac) @ y
            new_value = float(np.sum(np.abs(z) ** 2))
        else:
            new_value = float(stacked_objective(c, y))
        traj.append(new_value)
        gain = new_value - value
        value = new_value
        if gain < rel_tol * max(abs(value), np.finfo(float).tiny):
            converged = True
            break
    return AscentResult(x, traj, sweeps, converged, stationary)


def _require_psd(c: BlockPsdMatrix):
    if c.factor is not None:
        return
    scale = max(1.0, float(np.max(np.abs(c.data), initial=0.0)))
    ok, lam = is_psd(c.data, tol=PSD_TOL * scale)
    if not ok:
        raise InputError(f"coefficient matrix is not PSD (lambda_min = {lam:.3e})")


def dual_bound(c: BlockPsdMatrix, x: np.ndarray) -> float:
    """Upper bound on the relaxation optimum from a feasible point.

    With Lambda block diagonal, Lambda_i = Herm((C Y)_i X_i^*), every feasible
    Gram matrix G satisfies tr(C G) <= sum_i tr(Lambda_i) + dn * lambda_max(C - Lambda).
    At an optimum Lambda - C is PSD and the bound is tight.
    """
    n, d, w = x.shape
    y = x.reshape(n * d, w)
    cy = (c.data @ y).reshape(n, d, w)
    lam = cy @ adjoint(x)
    lam = (lam + adjoint(lam)) / 2
    big = np.zeros_like(c.data)
    for i in range(n):
        big[i * d:(i + 1) * d, i * d:(i + 1) * d] = lam[i]
    top = float(np.linalg.eigvalsh(c.data - big)[-1])
    return float(np.real(np.trace(lam, axis1=1, axis2=2).sum())) + n * d * top


def initial_point(c: BlockPsdMatrix, width: int, init: str, seed: RngSeed) -> np.ndarray:
    n, d = c.n, c.d
    if init == "identity-pad":
        if width < n * d:
            raise InputError("identity-pad start needs width >= dn")
        eye = np.eye(n * d, width, dtype=c.data.dtype)
        return eye.reshape(n, d, width)
    g = gaussian_matrix(d, width, 1.0, c.field, seed, batch=n)
    return polar(g)


def solve_relaxation(c: BlockPsdMatrix, cfg: Optional[SolveConfig] = None) -> tuple[StiefelTuple, SolveReport]:
    """Maximize sum_ij tr(C_ij^* X_i X_j^*) over X_i in C^{d x dn} with X_i X_i^* = I.

    Restart 0 starts from ``cfg.init``; later restarts start from random
    Stiefel points. The best restart is returned.
    """
    cfg = cfg or SolveConfig()
    _require_psd(c)
    m = c.size
    best = None
    trajectories = []
    for k in range(cfg.restarts):
        init = cfg.init if k == 0 else "random"
        start = initial_point(c, m, init, cfg.seed.spawn(2 * k))
        rng = cfg.seed.spawn(2 * k + 1).generator() if cfg.shuffle else None
        res = _ascend(c, start, cfg.max_sweeps, cfg.rel_tol, rng)
        trajectories.append(res.trajectory)
        if best is None or res.trajectory[-1] > best[1].trajectory[-1]:
            best = (k, res)
        if not res.converged:
            log.warning("restart %d hit max_sweeps=%d before rel_tol", k, cfg.max_sweeps)
    k, res = best
    sol = StiefelTuple(res.blocks)
    bound = dual_bound(c, res.blocks) if cfg.certify and c.size <= _CERTIFY_MAX else None
    report = SolveReport(
        objective=res.trajectory[-1],
        trajectory=res.trajectory,
        trajectories=trajectories,
        residual=sol.residual(),
        sweeps=res.sweeps,
        best_restart=k,
        converged=res.converged,
        stationary_blocks=[int(i) for i in np.flatnonzero(res.stationary)],
        trace_norm_bound=c.trace_norm_bound(),
        dual_bound=bound,
        config=cfg.to_json(),
    )
    return sol, report


def local_ascent_group(c: BlockPsdMatrix, start: GroupTuple, cfg: Optional[SolveConfig] = None) -> tuple[GroupTuple, AscentResult]:
    """Same block update with the width fixed to that of ``start`` (r = d for the group)."""
    cfg = cfg or SolveConfig()
    if start.d != c.d or start.n != c.n:
        raise InputError("start tuple does not match the instance")
    _require_psd(c)
    rng = cfg.seed.spawn(1).generator() if cfg.shuffle else None
    res = _ascend(c, start.blocks, cfg.max_sweeps, cfg.rel_tol, rng)
    return GroupTuple(res.blocks), res
