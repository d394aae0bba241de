"""Posterior CDF of theta by maximum-entropy discretization of W(z) = U - zV.

P(theta <= z | D) = P(W(z) <= 0 | D). For each z the law of W(z) is replaced by
weights p_1..p_S on an equally spaced grid spanning mean +/- c_w sd of W(z),
chosen to maximize entropy subject to matching M_{W(z)} at the evaluation
points t_1..t_L. The weights have the exponential-family form
p_s ∝ exp(lambda' H_s) with H_s = (exp(t_l a_s) - M_l)_l, and lambda solves
sum_s p_s H_s = 0 by (damped) Newton–Raphson.

All batch routines operate row by row: the result for one observation never
depends on which other observations share the call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import EngineConfig, Observation
from .errors import ConvergenceError, ValidationError
from .mgf import MgfEvaluator, log_f0, log_mgf_w, w_moments, w_t_limits

MAX_HALVINGS = 20
STALL_WINDOW = 10
# eigenvalue ratio below which a Newton matrix counts as singular
SINGULAR_RCOND = 1e-14
# largest scaled constraint residual accepted as a match
ACCEPT_RESIDUAL = 1e-6
MAX_DOUBLINGS = 60

FLAG_INFEASIBLE = 1
FLAG_VAR_FLOOR = 2
FLAG_T_SHRUNK = 4
FLAG_DENSITY_FLOOR = 8
FLAG_UNBRACKETED = 16
_FLAG_NAMES = {
    FLAG_INFEASIBLE: "infeasible",
    FLAG_VAR_FLOOR: "var_floor",
    FLAG_T_SHRUNK: "t_shrunk",
    FLAG_DENSITY_FLOOR: "density_floor",
    FLAG_UNBRACKETED: "unbracketed",
}


def flag_names(bits: int) -> str:
    return "|".join(name for bit, name in _FLAG_NAMES.items() if bits & bit)


def build_grid(mean, var, cw: float, S: int) -> np.ndarray:
    """S equally spaced knots on [mean - cw sd, mean + cw sd], endpoints included."""
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.asarray(var, dtype=float))
    lo = mean - cw * sd
    hi = mean + cw * sd
    frac = np.linspace(0.0, 1.0, S)
    knots = lo[..., None] + (hi - lo)[..., None] * frac
    knots[..., -1] = hi
    return knots


class MaxentBatch(NamedTuple):
    probs: np.ndarray
    multipliers: np.ndarray
    residual: np.ndarray
    feasible: np.ndarray
    iterations: np.ndarray
    ridged: np.ndarray


def _weights(lam: np.ndarray, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eta = np.matmul(H, lam[:, :, None])[:, :, 0]
    eta -= eta.max(axis=1, keepdims=True)
    w = np.exp(eta)
    p = w / w.sum(axis=1, keepdims=True)
    g = np.matmul(p[:, None, :], H)[:, 0, :]
    return p, g


def _solve_rows(A: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve A d = g per row for symmetric PSD A; singular rows get a ridge of 1e-10 trace / L."""
    L = A.shape[-1]
    w, V = np.linalg.eigh(A)
    ridged = ~(w[:, 0] > SINGULAR_RCOND * np.abs(w[:, -1]))
    ridge = np.where(ridged, 1e-10 * np.trace(A, axis1=1, axis2=2) / L, 0.0)
    wr = w + ridge[:, None]
    coef = np.matmul(np.swapaxes(V, 1, 2), g[:, :, None])[:, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.matmul(V, (coef / wr)[:, :, None])[:, :, 0]
    return d, ridged


def maxent_solve_batch(
    knots: np.ndarray, t: np.ndarray, M: np.ndarray, tol: float, max_iter: int, ridge: float = 0.0
) -> MaxentBatch:
    """Maximum-entropy weights on ``knots`` (m, S) matching M (m, L) at t (m, L).

    Each constraint is divided by max(1, |M_l|), so residuals are relative.
    With ``ridge`` = gamma > 0 the solve is the relaxed problem
    max entropy - |residual|^2 / (2 gamma), whose dual adds gamma |lambda|^2 / 2;
    it stays well posed when no distribution on the grid matches the targets.
    gamma = 0 is the exact problem.
    """
    knots = np.asarray(knots, dtype=float)
    m, S = knots.shape
    t = np.asarray(t, dtype=float).reshape(m, -1)
    M = np.asarray(M, dtype=float).reshape(m, -1)
    L = t.shape[1]
    if L == 0:
        return MaxentBatch(
            np.full((m, S), 1.0 / S),
            np.zeros((m, 0)),
            np.zeros(m),
            np.ones(m, dtype=bool),
            np.zeros(m, dtype=int),
            np.zeros(m, dtype=bool),
        )
    scale = np.maximum(1.0, np.abs(M)) * np.abs(t)
    H = (np.exp(t[:, None, :] * knots[:, :, None]) - M[:, None, :]) / scale[:, None, :]
    eye = ridge * np.eye(L)
    lam = np.zeros((m, L))
    p, g = _weights(lam, H)
    # g is the constraint residual; the dual gradient adds ridge * lam
    rnorm = np.linalg.norm(g, axis=1)
    iters = np.zeros(m, dtype=int)
    ridged = np.zeros(m, dtype=bool)
    checkpoint = rnorm.copy()
    active = np.flatnonzero(np.abs(g).max(axis=1) > tol)
    for it in range(max_iter):
        if active.size == 0:
            break
        Ha, pa, grad = H[active], p[active], g[active] + ridge * lam[active]
        A = np.matmul(np.swapaxes(Ha * pa[:, :, None], 1, 2), Ha) + eye
        d, rg = _solve_rows(A, grad)
        ridged[active] |= rg
        iters[active] += 1
        good = np.all(np.isfinite(d), axis=1)
        step = np.ones(active.size)
        pending = good.copy()
        new_lam = lam[active].copy()
        new_p, new_g = pa.copy(), g[active].copy()
        new_rn = rnorm[active].copy()
        for _h in range(MAX_HALVINGS + 1):
            rows = np.flatnonzero(pending)
            if rows.size == 0:
                break
            cand = lam[active[rows]] - step[rows, None] * d[rows]
            cp, cg = _weights(cand, Ha[rows])
            crn = np.linalg.norm(cg + ridge * cand, axis=1)
            accept = crn <= rnorm[active[rows]]
            acc = rows[accept]
            new_lam[acc], new_p[acc], new_g[acc], new_rn[acc] = cand[accept], cp[accept], cg[accept], crn[accept]
            pending[acc] = False
            step[rows[~accept]] *= 0.5
        moved = good & ~pending
        stalled = ~moved
        step_norm = np.where(moved, step * np.linalg.norm(d, axis=1), 0.0)
        lam[active], p[active], g[active], rnorm[active] = new_lam, new_p, new_g, new_rn
        stat = np.abs(g[active] + ridge * lam[active]).max(axis=1)
        done = stalled | (stat <= tol) | (step_norm <= tol)
        if (it + 1) % STALL_WINDOW == 0:
            # infeasible exact targets make Newton crawl; quit once the residual stops halving
            done |= rnorm[active] > 0.5 * checkpoint[active]
            checkpoint[active] = rnorm[active]
        active = active[~done]
    res = np.abs(g).max(axis=1)
    return MaxentBatch(p, lam, res, res <= tol, iters, ridged)


@dataclass(frozen=True, eq=False)
class DiscretePosterior:
    knots: np.ndarray
    probs: np.ndarray
    multipliers: np.ndarray
    constraint_residual: float
    feasible: bool = True
    iterations: int = 0

    def cdf_at_zero(self) -> float:
        return float(self.probs[self.knots <= 0].sum())


def maxent_solve(knots: Sequence[float], targets: Sequence[tuple[float, float]], cfg: EngineConfig | None = None) -> DiscretePosterior:
    cfg = cfg or EngineConfig()
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 1 or knots.size < 2:
        raise ValidationError("maxent_solve needs at least 2 knots")
    t = np.array([tl for tl, _ in targets], dtype=float)
    M = np.array([ml for _, ml in targets], dtype=float)
    out = maxent_solve_batch(knots[None, :], t[None, :], M[None, :], cfg.newton_tol, cfg.newton_max_iter)
    return DiscretePosterior(
        knots,
        out.probs[0],
        out.multipliers[0],
        float(out.residual[0]),
        bool(out.feasible[0]),
        int(out.iterations[0]),
    )


def scaled_points(base: np.ndarray, neg: np.ndarray, pos: np.ndarray, fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Rescale the evaluation points per row by one factor c <= 1 so every |t| is at most
    ``fraction`` of the domain limit on its side."""
    base = np.asarray(base, dtype=float)
    lim = np.where(base[None, :] > 0, pos[:, None], neg[:, None])
    ratio = fraction * lim / np.abs(base)[None, :]
    c = np.minimum(1.0, ratio.min(axis=1))
    return c[:, None] * base[None, :], c < 1.0


class PosteriorCdf:
    """Estimated posterior CDFs F_i(z) = P(theta_i <= z | D) for a batch of observations.

    Each observation keeps its own query history; reported values are the
    running maximum of raw values over the queried z at or below the query,
    which keeps every observation's CDF nondecreasing in z.
    """

    def __init__(self, density, x, s2, k, cfg: EngineConfig | None = None, ids: Sequence[str] | None = None):
        self.cfg = cfg or EngineConfig()
        self.density = density
        self.x = np.atleast_1d(np.asarray(x, dtype=float))
        self.n = self.x.size
        self.s2 = np.broadcast_to(np.asarray(s2, dtype=float), (self.n,)).copy()
        self.k = np.broadcast_to(np.asarray(k, dtype=float), (self.n,)).copy()
        self.ids = tuple(ids) if ids is not None else tuple(str(i) for i in range(self.n))
        self.log_f, self.log_f0 = log_f0(density, self.x, self.s2, self.k, self.cfg.mgf_floor)
        # diagnostic only: the observation sits where the shrinkage rule is tempered
        self.flags = np.where(self.log_f < math.log(self.cfg.rho), FLAG_DENSITY_FLOOR, 0).astype(int)
        self._cap = 8
        self._count = np.zeros(self.n, dtype=int)
        self._hz = np.full((self.n, self._cap), np.nan)
        self._hf = np.full((self.n, self._cap), np.nan)

    @classmethod
    def from_evaluator(cls, ev: MgfEvaluator, cfg: EngineConfig | None = None) -> "PosteriorCdf":
        o = ev.obs
        return cls(ev.density, o.x, o.s2, o.k, (cfg or EngineConfig()).replace(mgf_floor=ev.floor), ids=(o.id,))

    @property
    def cache(self) -> list[dict[float, float]]:
        """Per-observation map z -> repaired F(z) over the query history."""
        out = []
        for i in range(self.n):
            c = self._count[i]
            z, f = self._hz[i, :c], self._hf[i, :c]
            order = np.argsort(z, kind="stable")
            rep = np.clip(np.maximum.accumulate(f[order]), 0.0, 1.0)
            out.append(dict(zip(z[order].tolist(), rep.tolist())))
        return out

    # raw evaluation

    def raw_cdf(self, idx: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Unrepaired estimate of F_i(z_i) for rows ``idx``; updates flags."""
        cfg = self.cfg
        idx = np.asarray(idx, dtype=int)
        z = np.asarray(z, dtype=float)
        x, s2, k = self.x[idx], self.s2[idx], self.k[idx]
        lf, lf0 = self.log_f[idx], self.log_f0[idx]
        mom = w_moments(self.density, x, s2, k, lf, lf0, z)
        self.flags[idx[mom.floored]] |= FLAG_VAR_FLOOR
        knots = build_grid(mom.mean, mom.var, cfg.grid_halfwidth_cw, cfg.grid_size_S)
        out = np.empty(idx.size)
        below = knots[:, 0] > 0
        above = knots[:, -1] <= 0
        out[below] = 0.0
        out[above] = 1.0
        rows = np.flatnonzero(~(below | above))
        if rows.size:
            neg, pos = w_t_limits(x[rows], s2[rows], k[rows], z[rows])
            t, shrunk = scaled_points(np.asarray(cfg.mgf_points), neg, pos, cfg.mgf_domain_fraction)
            if cfg.mgf_spread_cap > 0:
                # keep max |t| * sd(W) bounded so the MGF probes the bulk of W, not a tail
                c = np.minimum(1.0, cfg.mgf_spread_cap / (np.abs(t).max(axis=1) * np.sqrt(mom.var[rows])))
                t = t * c[:, None]
            self.flags[idx[rows[shrunk]]] |= FLAG_T_SHRUNK
            lm = log_mgf_w(self.density, x[rows][:, None], s2[rows][:, None], k[rows][:, None], lf0[rows][:, None], z[rows][:, None], t)
            sol = maxent_solve_batch(knots[rows], t, np.exp(lm), cfg.newton_tol, cfg.newton_max_iter)
            probs = sol.probs
            miss = np.flatnonzero(sol.residual > ACCEPT_RESIDUAL)
            self.flags[idx[rows[miss]]] |= FLAG_INFEASIBLE
            if miss.size and cfg.maxent_ridge > 0:
                # no grid law matches these targets: trade misfit against entropy instead
                relaxed = maxent_solve_batch(
                    knots[rows[miss]], t[miss], np.exp(lm[miss]), cfg.newton_tol, cfg.newton_max_iter, cfg.maxent_ridge
                )
                probs[miss] = relaxed.probs
            out[rows] = (probs * (knots[rows] <= 0)).sum(axis=1)
        return np.clip(out, 0.0, 1.0)

    # cached, repaired evaluation

    def _grow(self, need: int) -> None:
        if need <= self._cap:
            return
        cap = max(need, 2 * self._cap)
        hz = np.full((self.n, cap), np.nan)
        hf = np.full((self.n, cap), np.nan)
        hz[:, : self._cap] = self._hz
        hf[:, : self._cap] = self._hf
        self._hz, self._hf, self._cap = hz, hf, cap

    def cdf(self, z, idx=None) -> np.ndarray:
        """Repaired F_i(z_i) for rows ``idx`` (all rows by default)."""
        idx = np.arange(self.n) if idx is None else np.asarray(idx, dtype=int)
        z = np.broadcast_to(np.asarray(z, dtype=float), idx.shape).copy()
        hz, hf = self._hz[idx], self._hf[idx]
        hit = hz == z[:, None]
        known = hit.any(axis=1)
        raw = np.where(known, np.nanmax(np.where(hit, hf, -np.inf), axis=1, initial=-np.inf), np.nan)
        miss = np.flatnonzero(~known)
        if miss.size:
            raw[miss] = self.raw_cdf(idx[miss], z[miss])
            rows = idx[miss]
            self._grow(int(self._count[rows].max()) + 1)
            self._hz[rows, self._count[rows]] = z[miss]
            self._hf[rows, self._count[rows]] = raw[miss]
            self._count[rows] += 1
        hz, hf = self._hz[idx], self._hf[idx]
        prior = np.where(hz <= z[:, None], hf, -np.inf).max(axis=1)
        return np.clip(np.maximum(raw, prior), 0.0, 1.0)

    def flag_strings(self) -> list[str]:
        return [flag_names(int(b)) for b in self.flags]

    # quantiles

    def quantile(self, q: float, idx=None) -> np.ndarray:
        """Bisection for F_i(z) = q, bracket width <= bisect_tol * s_i at exit."""
        cfg = self.cfg
        idx = np.arange(self.n) if idx is None else np.asarray(idx, dtype=int)
        x, s = self.x[idx], np.sqrt(self.s2[idx])
        w0 = cfg.grid_halfwidth_cw * s * np.sqrt(1 + 1 / self.k[idx])
        lo = x - w0
        hi = x + w0
        fixed = np.zeros(idx.size, dtype=bool)
        for side in ("lo", "hi"):
            rows = np.arange(idx.size)
            for j in range(MAX_DOUBLINGS + 1):
                pt = lo[rows] if side == "lo" else hi[rows]
                F = self.cdf(pt, idx[rows])
                bad = F >= q if side == "lo" else F < q
                rows = rows[bad]
                if rows.size == 0:
                    break
                if j == MAX_DOUBLINGS:
                    if not cfg.clip_unbracketed:
                        raise ConvergenceError(
                            f"bracket expansion exceeded {MAX_DOUBLINGS} doublings",
                            tuple(self.ids[i] for i in idx[rows]),
                        )
                    # the estimated CDF levels off short of q: report the initial edge
                    self.flags[idx[rows]] |= FLAG_UNBRACKETED
                    edge = x[rows] - w0[rows] if side == "lo" else x[rows] + w0[rows]
                    lo[rows] = hi[rows] = edge
                    fixed[rows] = True
                    break
                if side == "lo":
                    lo[rows] = x[rows] - w0[rows] * 2.0 ** (j + 1)
                else:
                    hi[rows] = x[rows] + w0[rows] * 2.0 ** (j + 1)
        tol = cfg.bisect_tol * s
        rows = np.flatnonzero((hi - lo > tol) & ~fixed)
        while rows.size:
            mid = 0.5 * (lo[rows] + hi[rows])
            F = self.cdf(mid, idx[rows])
            left = F < q
            stuck = (mid <= lo[rows]) | (mid >= hi[rows])
            lo[rows[left]] = mid[left]
            hi[rows[~left]] = mid[~left]
            # far-out brackets can be narrower than tol yet have no float between the ends
            rows = rows[(hi[rows] - lo[rows] > tol[rows]) & ~stuck]
        return 0.5 * (lo + hi)

    def interval(self, alpha: float, idx=None) -> tuple[np.ndarray, np.ndarray]:
        if not 0 < alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        lo, hi = self.quantile(alpha / 2, idx), self.quantile(1 - alpha / 2, idx)
        # quantiles of an unbracketed tail sit at the search edge and may cross
        return np.minimum(lo, hi), np.maximum(lo, hi)


def cdf_at(pc: PosteriorCdf, z: float) -> float:
    """Single-observation CDF value (first row of ``pc``)."""
    return float(pc.cdf(np.array([z]), np.array([0]))[0])


def quantile_interval(pc: PosteriorCdf, alpha: float) -> tuple[float, float]:
    lo, hi = pc.interval(alpha, np.array([0]))
    return float(lo[0]), float(hi[0])


def posterior_for(obs: Observation, density, cfg: EngineConfig | None = None) -> PosteriorCdf:
    cfg = cfg or EngineConfig()
    return PosteriorCdf(density, obs.x, obs.s2, obs.k, cfg, ids=(obs.id,))
