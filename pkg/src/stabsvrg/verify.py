"""Post-hoc certification and empirical probes.

Everything here is matrix-free: second-order information comes from central
differences of gradients.  Constants returned by :func:`estimate_constants`
are empirical maxima over sampled points, hence lower bounds on the true
constants.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .rng import Rng, sample_minibatch
from .svrg import EpochContext, GradCounter, SvrgConfig, gradient_estimate, svrg_epoch, svrg_epoch_random_stop

log = logging.getLogger(__name__)

FIRST_ORDER = "first_order"
SECOND_ORDER = "second_order"
NEITHER = "neither"
UNVERIFIED = "unverified"


# finite differences -----------------------------------------------------

def fd_gradient(f, x, h: Optional[float] = None) -> np.ndarray:
    """Central-difference gradient of ``f`` (an objective or a scalar callable).

    Default step ``1e-5 * (1 + ||x||)``.
    """
    fn = f.value if hasattr(f, "value") else f
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * (1.0 + np.linalg.norm(x))
    if h <= 0:
        raise ValueError("h must be positive")
    g = np.empty_like(x)
    e = np.zeros_like(x)
    for j in range(x.size):
        e[j] = h
        g[j] = (fn(x + e) - fn(x - e)) / (2 * h)
        e[j] = 0.0
    return g


def hvp(obj, x, v, h: Optional[float] = None, component: Optional[int] = None) -> np.ndarray:
    """Hessian-vector product by central differences of the gradient.

    Differentiates along the unit vector ``v/||v||`` with step ``h`` (default
    ``1e-4 * (1 + ||x||)``) and rescales, so the result is exact for
    quadratics up to round-off.  ``component`` selects ``f_i`` instead of the
    average.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        raise ValueError("v must be nonzero")
    if h is None:
        h = 1e-4 * (1.0 + np.linalg.norm(x))
    if h <= 0:
        raise ValueError("h must be positive")
    u = v / vn
    if component is None:
        grad = obj.full_gradient
    else:
        def grad(y):
            return obj.component_gradient(component, y)
    return (grad(x + h * u) - grad(x - h * u)) * (vn / (2 * h))


# smallest eigenvalue -----------------------------------------------------

@dataclass
class EigenEstimate:
    estimate: float
    error_bound: float
    converged: bool
    iterations: int
    vector: Optional[np.ndarray] = field(default=None, repr=False)

    def __iter__(self):
        # unpacks as (estimate, error_bound)
        yield self.estimate
        yield self.error_bound


def _lanczos_min(matvec, d, tol, max_iters, rng):
    k_max = min(d, max_iters)
    Q = np.zeros((k_max + 1, d))
    alpha = np.zeros(k_max)
    beta = np.zeros(k_max)
    q = rng.normal(d)
    Q[0] = q / np.linalg.norm(q)
    theta, y, k = 0.0, None, 0
    for j in range(k_max):
        w = matvec(Q[j])
        alpha[j] = Q[j] @ w
        w = w - alpha[j] * Q[j] - (beta[j - 1] * Q[j - 1] if j > 0 else 0.0)
        # full reorthogonalization, twice for stability
        for _ in range(2):
            w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
        beta[j] = np.linalg.norm(w)
        k = j + 1
        T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        vals, vecs = np.linalg.eigh(T)
        theta, y = vals[0], vecs[:, 0]
        ritz_res = abs(beta[j] * y[-1])
        if ritz_res <= tol * max(1.0, abs(theta)) or beta[j] <= 1e-14 * max(1.0, abs(alpha[j])):
            break
        Q[j + 1] = w / beta[j]
    u = Q[:k].T @ y
    return theta, u / np.linalg.norm(u), k


def _power_min(matvec, d, tol, max_iters, rng, sigma):
    u = rng.normal(d)
    u /= np.linalg.norm(u)
    theta = float(u @ matvec(u))
    for it in range(1, max_iters + 1):
        Hu = matvec(u)
        theta = float(u @ Hu)
        if np.linalg.norm(Hu - theta * u) <= tol * max(1.0, abs(theta)):
            return theta, u, it
        w = sigma * u - Hu
        u = w / np.linalg.norm(w)
    return theta, u, max_iters


def lambda_min(
    obj,
    x,
    tol: float = 1e-8,
    max_iters: int = 500,
    rng: Optional[Rng] = None,
    *,
    method: str = "lanczos",
    sigma: Optional[float] = None,
    h: Optional[float] = None,
    matvec: Optional[Callable] = None,
) -> EigenEstimate:
    """Smallest eigenvalue of the Hessian at ``x`` from Hessian-vector products only.

    ``method="power"`` runs power iteration on ``sigma I - H`` with
    ``sigma = 1.1 L`` by default.  ``method="lanczos"`` (default) runs Lanczos
    with full reorthogonalization and is far faster on clustered spectra.
    Either way the returned error bound is the residual norm ``||H u - lam u||``
    of the final unit Ritz vector, which for symmetric ``H`` bounds the
    distance from ``lam`` to the spectrum.  ``converged`` is ``False`` when the
    iteration cap was hit before the tolerance.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = rng if rng is not None else Rng(0)
    x = np.asarray(x, dtype=float)
    d = x.size
    if matvec is None:
        def matvec(v):
            return hvp(obj, x, v, h)
    if method == "lanczos":
        theta, u, its = _lanczos_min(matvec, d, tol, max_iters, rng)
    elif method == "power":
        if sigma is None:
            L = obj.L if obj is not None and obj.L is not None else None
            if L is None:
                L = _norm_estimate(matvec, d, rng)
            sigma = 1.1 * L
        theta, u, its = _power_min(matvec, d, tol, max_iters, rng, sigma)
    else:
        raise ValueError(f"unknown method {method!r}")
    Hu = matvec(u)
    theta = float(u @ Hu)
    resid = float(np.linalg.norm(Hu - theta * u))
    converged = resid <= max(tol * max(1.0, abs(theta)), 1e-7 * max(1.0, abs(theta)))
    if not converged:
        log.warning("lambda_min did not converge in %d iterations (residual %.3g)", its, resid)
    return EigenEstimate(theta, resid, converged, its, u)


def _norm_estimate(matvec, d, rng, iters=30):
    u = rng.normal(d)
    u /= np.linalg.norm(u)
    lam = 0.0
    for _ in range(iters):
        w = matvec(u)
        lam = np.linalg.norm(w)
        if lam == 0:
            return 1.0
        u = w / lam
    return float(lam) * 1.05


# certification -------------------------------------------------------------

@dataclass
class StationarityReport:
    grad_norm: float
    lambda_min_estimate: float
    lambda_min_error_bound: float
    epsilon: float
    rho: float
    verdict: str
    curvature_ok: bool
    converged: bool = True
    in_domain: bool = True
    seed: Optional[int] = None

    @property
    def curvature_threshold(self) -> float:
        return -math.sqrt(self.rho * self.epsilon)

    def to_dict(self) -> dict:
        return asdict(self)


def certify(obj, x, epsilon: float, rho: float, rng: Optional[Rng] = None, **lambda_kwargs) -> StationarityReport:
    """Check ``||grad f(x)|| <= eps`` and ``lambda_min(Hess f(x)) >= -sqrt(rho eps)``.

    The curvature test passes when ``estimate + error_bound`` clears the
    threshold.  Points outside the objective's admissible domain get the
    verdict ``unverified``.
    """
    if not (epsilon > 0 and rho > 0):
        raise ValueError("epsilon and rho must be positive")
    rng = rng if rng is not None else Rng(0)
    x = np.asarray(x, dtype=float)
    gnorm = float(np.linalg.norm(obj.full_gradient(x)))
    eig = lambda_min(obj, x, rng=rng, **lambda_kwargs)
    threshold = -math.sqrt(rho * epsilon)
    curvature_ok = eig.estimate + eig.error_bound >= threshold
    inside = obj.in_domain(x)
    if not inside:
        verdict = UNVERIFIED
    elif gnorm <= epsilon and curvature_ok:
        verdict = SECOND_ORDER
    elif gnorm <= epsilon:
        verdict = FIRST_ORDER
    else:
        verdict = NEITHER
    return StationarityReport(
        gnorm, eig.estimate, eig.error_bound, epsilon, rho, verdict, bool(curvature_ok), eig.converged, inside, rng.seed
    )


# estimator probes ------------------------------------------------------

@dataclass
class VarianceSummary:
    ratios: np.ndarray = field(repr=False)
    percentiles: dict
    mean_sq_error: float
    mean_estimate: np.ndarray = field(repr=False)
    true_gradient: np.ndarray = field(repr=False)
    cov_estimate: np.ndarray = field(repr=False)
    distance: float
    b: int
    L: float
    trials: int

    def bound(self, slack: float = 1.0) -> float:
        """``slack * L^2 / b * ||x - snapshot||^2``."""
        return slack * self.L ** 2 / self.b * self.distance ** 2

    def unbiased(self, alpha: float = 0.01) -> bool:
        """Hotelling-type check that the true gradient lies in the ``1 - alpha`` confidence ellipsoid of the mean."""
        from scipy import stats

        diff = self.mean_estimate - self.true_gradient
        cov = self.cov_estimate / self.trials
        d = diff.size
        if np.allclose(cov, 0):
            return bool(np.allclose(diff, 0, atol=1e-12 * (1 + np.linalg.norm(self.true_gradient))))
        stat = float(diff @ np.linalg.pinv(cov) @ diff)
        rank = np.linalg.matrix_rank(cov)
        return stat <= stats.chi2.ppf(1 - alpha, max(rank, 1)) * (1 + d / self.trials)


def variance_probe(obj, x, snapshot, b: int, trials: int, rng: Rng, L: Optional[float] = None) -> VarianceSummary:
    """Distribution of ``sqrt(b) ||v - grad f(x)|| / (L ||x - snapshot||)`` over independent batches."""
    x = np.asarray(x, dtype=float)
    snapshot = np.asarray(snapshot, dtype=float)
    dist = float(np.linalg.norm(x - snapshot))
    if dist == 0.0:
        raise ValueError("x must differ from snapshot")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    L = L if L is not None else obj.L
    if L is None or L <= 0:
        raise ValueError("a positive L is required")
    ctx = EpochContext(snapshot, obj.full_gradient(snapshot))
    true_g = obj.full_gradient(x)
    counter = GradCounter()
    vs = np.empty((trials, x.size))
    for k in range(trials):
        vs[k] = gradient_estimate(obj, x, ctx, sample_minibatch(obj.n, b, rng), counter)
    err = np.linalg.norm(vs - true_g, axis=1)
    ratios = math.sqrt(b) * err / (L * dist)
    pct = {q: float(np.percentile(ratios, q)) for q in (50, 90, 99)}
    pct[100] = float(ratios.max())
    cov = np.cov(vs, rowvar=False).reshape(x.size, x.size)
    return VarianceSummary(ratios, pct, float(np.mean(err ** 2)), vs.mean(axis=0), true_g, cov, dist, b, float(L), trials)


@dataclass
class CoupledPair:
    """Two starting points for SVRG runs that share every minibatch draw."""

    x0: np.ndarray
    x0_prime: np.ndarray
    anchor: np.ndarray

    @classmethod
    def along(cls, anchor, start, direction, separation: float) -> "CoupledPair":
        """Pair ``(start, start - separation * u)`` with ``u`` the unit vector of ``direction``."""
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        start = np.asarray(start, dtype=float)
        return cls(start.copy(), start - separation * u, np.asarray(anchor, dtype=float).copy())


@dataclass
class CoupledRecord:
    step: int
    batch: np.ndarray
    xi_diff: np.ndarray  # (v_t - grad f(x_t)) - (v'_t - grad f(x'_t))
    w: np.ndarray
    w_snap: np.ndarray
    P: float
    scale: float  # magnitude of the quantities subtracted to form xi_diff

    @property
    def xi_diff_norm(self):
        return float(np.linalg.norm(self.xi_diff))

    @property
    def w_norm(self):
        return float(np.linalg.norm(self.w))

    @property
    def w_snap_norm(self):
        return float(np.linalg.norm(self.w_snap))

    @property
    def w_drift_norm(self):
        return float(np.linalg.norm(self.w - self.w_snap))


def coupled_variance_probe(obj, pair: CoupledPair, steps: int, config: SvrgConfig, rng: Rng, shift=None):
    """Run two SVRG sequences in lockstep on identical batches and record the estimator-error difference.

    Each record holds, for step ``t``: the batch, ``xi_t - xi'_t`` where
    ``xi_t = v_t - grad f(x_t)``, ``w_t = x_t - x'_t``, ``w_{s(t)}`` and
    ``P_t``, the largest distance of ``x_t, x'_t`` and their snapshots to the
    anchor.  A non-finite iterate truncates the record list.
    """
    x = np.array(pair.x0, dtype=float)
    y = np.array(pair.x0_prime, dtype=float)
    anchor = pair.anchor
    counter = GradCounter()
    records = []
    ctx_x = ctx_y = None
    for t in range(steps):
        if t % config.m == 0:
            ctx_x = EpochContext(x.copy(), obj.full_gradient(x), shift)
            ctx_y = EpochContext(y.copy(), obj.full_gradient(y), shift)
        batch = sample_minibatch(obj.n, config.b, rng)
        vx = gradient_estimate(obj, x, ctx_x, batch, counter)
        vy = gradient_estimate(obj, y, ctx_y, batch, counter)
        gx = obj.full_gradient(x) - (shift if shift is not None else 0.0)
        gy = obj.full_gradient(y) - (shift if shift is not None else 0.0)
        xi_diff = (vx - gx) - (vy - gy)
        P = max(
            np.linalg.norm(ctx_x.snapshot - anchor),
            np.linalg.norm(ctx_y.snapshot - anchor),
            np.linalg.norm(x - anchor),
            np.linalg.norm(y - anchor),
        )
        scale = max(np.linalg.norm(vx), np.linalg.norm(gx), np.linalg.norm(vy), np.linalg.norm(gy))
        records.append(CoupledRecord(t, batch, xi_diff, x - y, ctx_x.snapshot - ctx_y.snapshot, float(P), float(scale)))
        x = x - config.eta * vx
        y = y - config.eta * vy
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            break
    return records


def coupled_bound_ratios(records, b: int, L: float, rho_prime: float) -> np.ndarray:
    """``sqrt(b) ||xi - xi'|| / min(L||w - w_s|| + rho' P (||w|| + ||w_s||), L (||w|| + ||w_s||))`` per record.

    Records where the bound is zero are skipped.
    """
    out = []
    for r in records:
        wsum = r.w_norm + r.w_snap_norm
        bound = min(L * r.w_drift_norm + rho_prime * r.P * wsum, L * wsum)
        if bound > 0:
            out.append(math.sqrt(b) * r.xi_diff_norm / bound)
    return np.array(out)


# decrease probes ------------------------------------------------------------

@dataclass
class DecreaseCheck:
    gradient_decrease: bool  # f(x0) - f(x_t) >= sum_{tau<t} eta/2 ||grad f(x_tau)||^2 for all t
    monotone_stop: bool  # f(x_stop) <= f(x0)
    distance_decrease: bool  # ||x_t - x0||^2 <= 4t/(C1 L) (f(x0) - f(x_t)) for all t
    t_stop: int


def epoch_decrease_probe(obj, x0, config: SvrgConfig, rng: Rng, C1: float, L: float, atol: float = 1e-12) -> DecreaseCheck:
    """Check the three per-epoch decrease inequalities on one seeded epoch.

    The full epoch and the random-stop epoch share their minibatch stream, so
    the stopped point lies on the checked path.  ``atol`` absorbs round-off in
    ``f`` near stationarity.
    """
    path = svrg_epoch(obj, x0, config, rng)
    f = np.array([obj.value(p) for p in path])
    gsq = np.array([np.sum(obj.full_gradient(p) ** 2) for p in path])
    drops = f[0] - f[1:]
    slack = atol * max(1.0, abs(f[0]))
    needed = 0.5 * config.eta * np.cumsum(gsq[:-1])
    ok_grad = bool(np.all(drops >= needed - slack))
    t = np.arange(1, len(path))
    dist_sq = np.sum((path[1:] - path[0]) ** 2, axis=1)
    ok_dist = bool(np.all(dist_sq <= 4 * t / (C1 * L) * drops + slack))
    x_stop, t_stop = svrg_epoch_random_stop(obj, x0, config, rng)
    ok_stop = obj.value(x_stop) <= f[0] + slack
    return DecreaseCheck(ok_grad, bool(ok_stop), ok_dist, t_stop)


# empirical constants ---------------------------------------------------------

@dataclass
class ConstantsEstimate:
    L: float
    rho: float
    rho_prime: float
    pairs: int

    def to_dict(self):
        return asdict(self)


def estimate_lipschitz(obj, domain_sampler, pairs: int, rng: Rng) -> float:
    """Max over sampled ``(x, y, i)`` of ``||grad f_i(x) - grad f_i(y)|| / ||x - y||``."""
    best = 0.0
    for _ in range(pairs):
        x, y = domain_sampler(rng), domain_sampler(rng)
        dxy = np.linalg.norm(x - y)
        if dxy == 0:
            continue
        i = int(rng.integers(0, obj.n))
        best = max(best, float(np.linalg.norm(obj.component_gradient(i, x) - obj.component_gradient(i, y)) / dxy))
    return best


def _hessian_gap(obj, x, y, rng, component, power_steps):
    """Max of ``||(H(x) - H(y)) v|| / ||v||`` over power-iteration directions ``v``."""
    d = x.size
    v = rng.normal(d)
    best = 0.0
    for _ in range(power_steps):
        v = v / np.linalg.norm(v)
        w = hvp(obj, x, v, component=component) - hvp(obj, y, v, component=component)
        nw = float(np.linalg.norm(w))
        best = max(best, nw)
        if nw == 0.0:
            break
        v = w
    return best


def estimate_constants(obj, domain_sampler, pairs: int, rng: Rng, power_steps: int = 8) -> ConstantsEstimate:
    """Empirical ``L``, ``rho`` and ``rho'`` from ``pairs`` random point pairs.

    For each pair the Hessian difference is probed along a short
    power-iteration sequence of directions (the difference is symmetric, so
    this climbs towards its operator norm).  All three values are maxima over
    the sampled set and therefore lower bounds on the true constants.
    """
    if pairs < 10:
        raise ValueError("need at least 10 pairs")
    L = estimate_lipschitz(obj, domain_sampler, pairs, rng)
    rho = rho_p = 0.0
    for _ in range(pairs):
        x, y = domain_sampler(rng), domain_sampler(rng)
        dxy = float(np.linalg.norm(x - y))
        if dxy == 0:
            continue
        rho = max(rho, _hessian_gap(obj, x, y, rng, None, power_steps) / dxy)
        i = int(rng.integers(0, obj.n))
        rho_p = max(rho_p, _hessian_gap(obj, x, y, rng, i, power_steps) / dxy)
    return ConstantsEstimate(L, rho, rho_p, pairs)
