"""Independent numerical checks for the six theoretical claims the losses rest on.

Each ``verify_prop_*`` routine builds its own oracles (enumeration, grid
search, perturbation, high-precision arithmetic) and never reads trained
weights; the C3 model fixture is constructed in-suite.  Reports are
deterministic given the seed.

Checked claims, by report id:

* A1 -- the sum KL(target||posterior) + KL(posterior||prior) converges to
        KL(target||prior) as the posterior approaches the smoothed target,
        at the stated rate envelope.
* B2 -- componentwise total-variation is bounded by sqrt(KL/2).
* C3 -- the smoothed labeled bound converges to the plain labeled bound
        within the C1*delta + C2*delta^2/eps envelope, and the labeled
        bound never exceeds the exact log-likelihood on an enumerable toy.
* D4 -- the convex input interpolation is the exact minimizer of the
        lambda-weighted squared-distance / fixed-variance log-likelihood
        objective.
* E5 -- exact log-likelihood minus the factored bound equals the joint KL
        to the true posterior, on fully enumerable toys.
* E6 -- the convex combination of two probability vectors minimizes the
        lambda-weighted KL barycenter objective (grid search + stationarity).

A note on A1/C3: for K >= 3 the perturbation can move mass between two
off-true-class coordinates (both carrying the same smoothed mass), and the
explicit envelope holds with literally zero remainder.  For K = 2 every
sup-norm perturbation must move the true class, which injects a first-order
term ~ delta*log(1/eps) that only the envelope's little-o remainder can
absorb; the suite fits that remainder empirically, requires it to vanish
with delta, and records the fitted exponent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..autodiff import Tensor
from ..data import rng_for
from ..distributions import CategoricalDist, pinsker_bound
from ..nets import ModelParams
from ..objectives import labeled_elbo_pair, optimal_interpolation

__all__ = [
    "PropositionReport",
    "PROP_IDS",
    "verify_prop_a1",
    "verify_prop_b2",
    "verify_prop_c3",
    "verify_prop_d4",
    "verify_prop_e5",
    "verify_prop_e6",
    "run_propositions",
]

PROP_IDS = ("A1", "B2", "C3", "D4", "E5", "E6")

IDENTITY_TOL = 1e-9
EXACT_TOL = 1e-12


@dataclass
class PropositionReport:
    id: str
    passed: bool
    max_violation: float
    samples_checked: int
    tolerance: float
    details: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "id": self.id,
            "passed": bool(self.passed),
            "max_violation": float(self.max_violation),
            "samples_checked": int(self.samples_checked),
            "tolerance": float(self.tolerance),
            "details": list(self.details),
            "extras": self.extras,
        }, indent=2)


# ---------------------------------------------------------------------------
# shared constructions


def _smoothed(y: int, k: int, eps: float) -> np.ndarray:
    out = np.full(k, eps / (k - 1))
    out[y] = 1.0 - eps
    return out


def _kl(a: np.ndarray, b: np.ndarray) -> float:
    return float((a * (np.log(a) - np.log(b))).sum())


def _convergence_gap(phat: np.ndarray, q: np.ndarray, p: np.ndarray) -> float:
    """|KL(phat||q) + KL(q||p) - KL(phat||p)|, all arguments strictly positive."""
    return abs(_kl(phat, q) + _kl(q, p) - _kl(phat, p))


def _rate_envelope(delta: float, eps: float, k: int, m: float) -> float:
    """Explicit terms of the convergence-rate bound (remainder excluded)."""
    return k * m * delta + (k * (k - 1) / eps) * delta ** 2 + k * np.log(1.0 / (1.0 - eps)) * delta


def _perturb_toward(phat: np.ndarray, delta: float, eps: float, y: int,
                    p: np.ndarray) -> np.ndarray:
    """Posterior at sup-distance exactly ``delta`` from the smoothed target.

    Where possible (K >= 3 and delta below the off-class mass) the
    perturbation swaps mass between two off-class coordinates -- the regime
    the rate derivation covers exactly.  Otherwise the true class donates
    the mass to the off-class coordinate with the smallest prior.
    """
    k = phat.shape[0]
    q = phat.copy()
    off = [j for j in range(k) if j != y]
    if k >= 3 and delta < eps / (k - 1):
        jmax = max(off, key=lambda j: p[j])
        jmin = min(off, key=lambda j: p[j])
        if jmax == jmin:
            jmax, jmin = off[0], off[1]
        q[jmax] += delta
        q[jmin] -= delta
    else:
        j = min(off, key=lambda j: p[j])
        q[y] -= delta
        q[j] += delta
    return q


def _fit_power_law(deltas: Sequence[float], residuals: Sequence[float]) -> Optional[tuple]:
    """Least-squares fit residual ~ c * delta^a over the positive residuals."""
    pts = [(d, r) for d, r in zip(deltas, residuals) if r > 0.0]
    if not pts:
        return None
    if len(pts) == 1:
        d, r = pts[0]
        return r / d, 1.0
    xs = np.log([d for d, _ in pts])
    ys = np.log([r for _, r in pts])
    a, b = np.polyfit(xs, ys, 1)
    return float(np.exp(b)), float(a)


def verify_prop_a1(eps_grid: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4),
                   delta_grid: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5),
                   k_grid: Sequence[int] = (2, 4, 10),
                   trials: int = 24, seed: int = 0) -> PropositionReport:
    """Convergence of the label-KL rearrangement with its rate envelope.

    Per (K, eps) series over the delta grid, using a fixed random prior per
    trial: (a) zero gap at delta = 0; (b) the measured gap decreases
    monotonically with delta; (c) for K >= 3 the explicit envelope holds
    with zero remainder; (d) where a remainder exists (K = 2, where the
    perturbation cannot avoid the true class) it stays inside the
    first-order cap delta*(log((K-1)/eps) + 2M + (eps+delta)/(1-eps-delta))
    -- the term the envelope's little-o absorbs -- and its fitted power-law
    exponent is positive (the remainder vanishes with delta); (e) the
    quadratic term of the envelope scales as 1/eps, which diverges for the
    unsmoothed (degenerate) target.
    """
    deltas = sorted(float(d) for d in delta_grid)
    if any(d <= 0 for d in deltas):
        raise ValueError("verify_prop_a1: deltas must be positive")
    details: list = []
    series: dict = {}
    passed = True
    max_violation = -np.inf
    checked = 0

    for k in k_grid:
        for eps in eps_grid:
            if not 0.0 < eps < (k - 1) / k:
                raise ValueError(f"verify_prop_a1: eps {eps} invalid for K={k}")
            rng = rng_for(seed, 40, k, int(-np.log10(eps) * 10))
            gaps = np.zeros((trials, len(deltas)))
            residuals = np.zeros((trials, len(deltas)))
            cap_violation = -np.inf
            zero_ok = True
            for t in range(trials):
                p = rng.dirichlet(np.ones(k))
                p = 0.9 * p + 0.1 / k  # keep the prior off the simplex boundary
                y = int(rng.integers(k))
                phat = _smoothed(y, k, eps)
                m = float(np.abs(np.log(p)).max())
                zero_ok &= _convergence_gap(phat, phat.copy(), p) <= 1e-15
                for j, d in enumerate(deltas):
                    q = _perturb_toward(phat, d, eps, y, p)
                    gap = _convergence_gap(phat, q, p)
                    gaps[t, j] = gap
                    residuals[t, j] = max(0.0, gap - _rate_envelope(d, eps, k, m))
                    # derivable first-order cap on what the little-o must absorb
                    cap = d * (np.log((k - 1) / eps) + 2.0 * m + (eps + d) / (1.0 - eps - d))
                    cap_violation = max(cap_violation, residuals[t, j] - cap)
                    checked += 1
            gap_max = gaps.max(axis=0)
            monotone = bool(np.all(np.diff(gap_max) > 0))  # deltas ascending -> gap ascending
            res_max = residuals.max(axis=0)
            fit = _fit_power_law(deltas, res_max)
            exponent = None if fit is None else fit[1]
            max_violation = max(max_violation, cap_violation)

            series_pass = zero_ok and monotone and cap_violation <= EXACT_TOL
            if k >= 3:
                series_pass &= bool(np.all(res_max <= EXACT_TOL))
            if exponent is not None:
                series_pass &= exponent > 0.0
            passed &= series_pass
            key = f"K{k}_eps{eps:g}"
            series[key] = {
                "deltas": deltas,
                "gap_max": gap_max.tolist(),
                "residual_max": res_max.tolist(),
                "remainder_exponent": exponent,
                "monotone": monotone,
            }
            details.append(
                f"{key}: monotone={monotone} max_residual={res_max.max():.3e} "
                f"remainder_exponent={exponent if exponent is not None else 'none (zero remainder)'} "
                f"pass={series_pass}"
            )

    # quadratic term diverges like 1/eps at fixed delta (degenerate-target failure mode)
    d = 1e-3
    quad = [(k_grid[0] * (k_grid[0] - 1) / e) * d ** 2 for e in sorted(eps_grid, reverse=True)]
    ratios = [quad[i + 1] / quad[i] for i in range(len(quad) - 1)]
    div_ok = all(abs(r - 10.0) < 1e-9 for r in ratios)
    passed &= div_ok
    details.append(f"quadratic term grows 10x per eps decade: {div_ok}")

    return PropositionReport("A1", bool(passed), float(max_violation), checked,
                             EXACT_TOL, details, {"series": series})


def verify_prop_b2(trials: int = 10_000, k_range: tuple = (2, 20),
                   seed: int = 0) -> PropositionReport:
    """Componentwise total variation never exceeds sqrt(KL/2)."""
    rng = rng_for(seed, 41)
    max_violation = -np.inf
    checked = 0
    details: list = []
    for _ in range(trials):
        k = int(rng.integers(k_range[0], k_range[1] + 1))
        p = rng.dirichlet(np.ones(k))
        q = rng.dirichlet(np.ones(k))
        p = np.maximum(p, 1e-12)
        q = np.maximum(q, 1e-12)
        p /= p.sum()
        q /= q.sum()
        diff, bound = pinsker_bound(CategoricalDist(Tensor(q)), CategoricalDist(Tensor(p)))
        max_violation = max(max_violation, diff - bound)
        checked += 1
    # identical pair and a floor-level near-degenerate stress pair
    u = np.full(4, 0.25)
    diff, bound = pinsker_bound(CategoricalDist(Tensor(u)), CategoricalDist(Tensor(u)))
    identical_ok = diff == 0.0 and bound == 0.0
    p = np.array([1.0 - 3e-12, 1e-12, 1e-12, 1e-12])
    q = np.array([0.25, 0.25, 0.25, 0.25])
    diff, bound = pinsker_bound(CategoricalDist(Tensor(q)), CategoricalDist(Tensor(p)))
    stress_ok = diff <= bound
    checked += 2
    passed = max_violation <= EXACT_TOL and identical_ok and stress_ok
    details.append(f"random pairs max(diff - bound) = {max_violation:.3e}")
    details.append(f"identical pair -> (0, 0): {identical_ok}; near-degenerate stress: {stress_ok}")
    return PropositionReport("B2", bool(passed), float(max_violation), checked,
                             EXACT_TOL, details, {})


def _random_toy(rng: np.random.Generator, z_points: int = 16,
                separable: bool = False) -> dict:
    """Fully enumerable joint over (z-grid, y) with positive likelihood values."""
    k = int(rng.integers(2, 5))
    p_z = rng.dirichlet(np.ones(z_points))
    p_y = rng.dirichlet(np.ones(k))
    if separable:
        lik = np.exp(rng.standard_normal((z_points, 1))) * np.exp(rng.standard_normal((1, k)))
    else:
        lik = np.exp(rng.standard_normal((z_points, k)))
    return {"p_z": p_z, "p_y": p_y, "lik": lik, "k": k}


def _toy_log_evidence(toy: dict) -> float:
    joint = toy["p_z"][:, None] * toy["p_y"][None, :] * toy["lik"]
    return float(np.log(joint.sum()))


def _toy_factored_bound(toy: dict, q_z: np.ndarray, q_y: np.ndarray) -> float:
    """E_{q_z q_y} log p(X, z, y) + H(q_z) + H(q_y) (the factored evidence bound)."""
    log_joint = np.log(toy["p_z"][:, None]) + np.log(toy["p_y"][None, :]) + np.log(toy["lik"])
    w = q_z[:, None] * q_y[None, :]
    return float((w * (log_joint - np.log(w))).sum())


def verify_prop_c3(delta_grid: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5),
                   eps: float = 1e-3, seed: int = 0, jensen_toys: int = 100) -> PropositionReport:
    """Smoothed-vs-plain labeled bound convergence on a fixed model fixture,
    plus the lower-bound property against exact enumeration.

    The class head is forced to posteriors at controlled sup-distance delta
    from the smoothed target; the measured difference of the two bounds must
    stay inside C1*delta + C2*delta^2/eps with C1 = K*M + K*log(1/(1-eps))
    and C2 = K*(K-1), with zero measured remainder (K = 4 fixture).
    """
    k, input_dim, z_dim, hidden = 4, 6, 3, 8
    rng = rng_for(seed, 42)
    params = ModelParams.init(input_dim, z_dim, k, hidden, rng)
    x = Tensor(rng.uniform(size=(1, input_dim)))
    y = 1
    labels = np.array([y])
    p_y = np.full(k, 1.0 / k)
    m = float(np.abs(np.log(p_y)).max())
    c1 = k * m + k * np.log(1.0 / (1.0 - eps))
    c2 = k * (k - 1)
    phat = _smoothed(y, k, eps)

    deltas = sorted(float(d) for d in delta_grid)
    details: list = []
    max_violation = -np.inf
    checked = 0

    # delta = 0: the two bounds coincide
    smooth0, plain0 = labeled_elbo_pair(x, labels, params, 0.01, eps, rng_for(seed, 42, 1),
                                        p_y, y_probs_override=phat[None, :])
    zero_gap = abs(smooth0 - plain0)
    zero_ok = zero_gap <= IDENTITY_TOL
    checked += 1

    measured = []
    residuals = []
    for d in deltas:
        q = _perturb_toward(phat, d, eps, y, p_y)
        smooth, plain = labeled_elbo_pair(x, labels, params, 0.01, eps, rng_for(seed, 42, 1),
                                          p_y, y_probs_override=q[None, :])
        gap = abs(smooth - plain)
        envelope = c1 * d + c2 * d * d / eps
        measured.append(gap)
        residuals.append(max(0.0, gap - envelope))
        max_violation = max(max_violation, gap - envelope)
        checked += 1
    envelope_ok = all(r <= EXACT_TOL for r in residuals)
    monotone = bool(np.all(np.diff(measured) > 0))
    details.append(f"delta=0 gap {zero_gap:.2e}; envelope residuals all zero: {envelope_ok}; "
                   f"gap monotone in delta: {monotone}")

    # the labeled bound never exceeds the exact log evidence (enumerable toys)
    toy_rng = rng_for(seed, 43)
    jensen_violation = -np.inf
    for _ in range(jensen_toys):
        toy = _random_toy(toy_rng)
        q_z = toy_rng.dirichlet(np.ones(toy["p_z"].shape[0]))
        y_t = int(toy_rng.integers(toy["k"]))
        phat_t = _smoothed(y_t, toy["k"], eps)
        bound = _toy_factored_bound(toy, q_z, phat_t)
        jensen_violation = max(jensen_violation, bound - _toy_log_evidence(toy))
        checked += 1
    jensen_ok = jensen_violation <= IDENTITY_TOL
    details.append(f"factored bound <= exact log evidence: max excess {jensen_violation:.3e}")

    passed = zero_ok and envelope_ok and monotone and jensen_ok
    max_violation = max(max_violation, jensen_violation)
    return PropositionReport("C3", bool(passed), float(max_violation), checked,
                             IDENTITY_TOL, details,
                             {"deltas": deltas, "measured_gap": measured,
                              "constants": {"C1": c1, "C2": c2, "M": m}})


def verify_prop_d4(pairs: int = 100, lambda_grid: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
                   seed: int = 0, n_perturb: int = 1000, dim: int = 16) -> PropositionReport:
    """The convex input combination minimizes the weighted squared distance,
    equivalently maximizes the weighted fixed-variance Gaussian log-likelihood."""
    rng = rng_for(seed, 44)
    sigma_sq = 1.7  # any positive constant; enters both sides identically
    max_grad = -np.inf
    max_excess = -np.inf
    checked = 0
    for i in range(pairs):
        x0 = rng.uniform(size=dim)
        x1 = rng.uniform(size=dim)
        lams = list(lambda_grid) + [float(rng.uniform())]
        for lam in lams:
            x_mix = (1.0 - lam) * x0 + lam * x1

            def objective(x):
                return (1.0 - lam) * ((x - x0) ** 2).sum() + lam * ((x - x1) ** 2).sum()

            def weighted_loglik(x):
                return -objective(x) / (2.0 * sigma_sq)

            grad = 2.0 * (1.0 - lam) * (x_mix - x0) + 2.0 * lam * (x_mix - x1)
            max_grad = max(max_grad, float(np.abs(grad).max()))
            base = objective(x_mix)
            scales = np.logspace(-3, 0, n_perturb)
            dirs = rng.standard_normal((n_perturb, dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            perturbed = x_mix + scales[:, None] * dirs
            vals = ((1.0 - lam) * ((perturbed - x0) ** 2).sum(axis=1)
                    + lam * ((perturbed - x1) ** 2).sum(axis=1))
            max_excess = max(max_excess, float((base - vals).max()))
            # same statement through the likelihood form
            ll_excess = (-vals / (2.0 * sigma_sq)) - weighted_loglik(x_mix)
            max_excess = max(max_excess, float(ll_excess.max()))
            checked += 1
    lam0 = np.abs(((1.0 - 0.0) * x0 + 0.0 * x1) - x0).max()
    midpoint = np.abs((0.5 * x0 + 0.5 * x1) - (x0 + x1) / 2).max()
    endpoints_ok = lam0 == 0.0 and midpoint == 0.0
    passed = max_grad <= IDENTITY_TOL and max_excess <= EXACT_TOL and endpoints_ok
    details = [
        f"stationarity max |grad| = {max_grad:.3e}",
        f"max objective excess over {n_perturb} perturbations = {max_excess:.3e}",
        f"lambda endpoints reduce to the inputs: {endpoints_ok}",
    ]
    return PropositionReport("D4", bool(passed), float(max(max_grad, max_excess)), checked,
                             IDENTITY_TOL, details, {})


def verify_prop_e5(toys: int = 100, seed: int = 0, z_points: int = 16) -> PropositionReport:
    """Exact margin identity: log evidence - factored bound = KL(q_z q_y || posterior)."""
    rng = rng_for(seed, 45)
    max_violation = -np.inf
    min_margin = np.inf
    checked = 0
    for i in range(toys):
        toy = _random_toy(rng, z_points)
        q_z = rng.dirichlet(np.ones(z_points))
        q_y = rng.dirichlet(np.ones(toy["k"]))
        q_z = np.maximum(q_z, 1e-12)
        q_z /= q_z.sum()
        q_y = np.maximum(q_y, 1e-12)
        q_y /= q_y.sum()
        log_p = _toy_log_evidence(toy)
        elbo = _toy_factored_bound(toy, q_z, q_y)
        margin = log_p - elbo
        joint = toy["p_z"][:, None] * toy["p_y"][None, :] * toy["lik"]
        posterior = joint / joint.sum()
        w = q_z[:, None] * q_y[None, :]
        kl = float((w * (np.log(w) - np.log(posterior))).sum())
        max_violation = max(max_violation, abs(margin - kl))
        min_margin = min(min_margin, margin)
        checked += 1
    # separable toy where the factored family contains the exact posterior
    toy = _random_toy(rng, z_points, separable=True)
    joint = toy["p_z"][:, None] * toy["p_y"][None, :] * toy["lik"]
    posterior = joint / joint.sum()
    exact_margin = _toy_log_evidence(toy) - _toy_factored_bound(
        toy, posterior.sum(axis=1), posterior.sum(axis=0))
    checked += 1
    passed = (max_violation <= IDENTITY_TOL and min_margin >= -EXACT_TOL
              and abs(exact_margin) <= IDENTITY_TOL)
    details = [
        f"max |margin - KL| = {max_violation:.3e}",
        f"min margin = {min_margin:.3e} (>= 0)",
        f"exact-posterior toy margin = {exact_margin:.3e}",
    ]
    return PropositionReport("E5", bool(passed), float(max_violation), checked,
                             IDENTITY_TOL, details, {})


def _default_interpolation(pi0: np.ndarray, pi1: np.ndarray, lam: float) -> np.ndarray:
    """Shipped interpolation routine, unwrapped to plain arrays."""
    out = optimal_interpolation(CategoricalDist(Tensor(pi0)), CategoricalDist(Tensor(pi1)), lam)
    return out.probs.data.copy()


def _simplex_grid_logs(step: float) -> tuple:
    """Strictly interior K=3 simplex grid at the given step, with its logs."""
    n = int(round(1.0 / step))
    i, j = np.meshgrid(np.arange(1, n - 1), np.arange(1, n - 1), indexing="ij")
    mask = (i + j) <= (n - 1)
    a = i[mask] / n
    b = j[mask] / n
    grid = np.stack([a, b, 1.0 - a - b], axis=1)
    return grid, np.log(grid)


def verify_prop_e6(pairs: int = 1000, seed: int = 0, grid_step: float = 1e-3,
                   objective_slack: float = 1e-5,
                   interpolation: Callable = _default_interpolation) -> PropositionReport:
    """The convex combination wins the barycenter objective on a K=3 grid and
    satisfies the stationarity condition exactly.

    ``interpolation`` is injectable so a deliberately wrong rule (for
    example, the lambda-ignoring midpoint) demonstrably fails.
    """
    rng = rng_for(seed, 46)
    _, log_grid = _simplex_grid_logs(grid_step)
    max_violation = -np.inf
    max_kkt = -np.inf
    checked = 0
    endpoint_fail = False
    for i in range(pairs):
        pi0 = rng.dirichlet(np.ones(3))
        pi1 = rng.dirichlet(np.ones(3))
        pi0 = np.maximum(pi0, 1e-9)
        pi0 /= pi0.sum()
        pi1 = np.maximum(pi1, 1e-9)
        pi1 /= pi1.sum()
        lam = float(rng.uniform())
        cand = np.asarray(interpolation(pi0, pi1, lam), dtype=np.float64)
        w = (1.0 - lam) * pi0 + lam * pi1

        const = (1.0 - lam) * float((pi0 * np.log(pi0)).sum()) + lam * float((pi1 * np.log(pi1)).sum())
        f_cand = const - float((w * np.log(cand)).sum())
        f_grid_min = const - float((log_grid @ w).max())
        max_violation = max(max_violation, f_cand - f_grid_min)
        # stationarity of the Lagrangian: the multiplier t = w/pi must be constant (=1)
        max_kkt = max(max_kkt, float(np.abs(1.0 - w / cand).max()))
        checked += 1
        if i < 10:
            at0 = np.asarray(interpolation(pi0, pi1, 0.0))
            at1 = np.asarray(interpolation(pi0, pi1, 1.0))
            endpoint_fail |= bool(np.abs(at0 - pi0).max() > EXACT_TOL
                                  or np.abs(at1 - pi1).max() > EXACT_TOL)
            checked += 2
    passed = max_violation <= objective_slack and max_kkt <= IDENTITY_TOL and not endpoint_fail
    details = [
        f"max (candidate objective - grid minimum) = {max_violation:.3e} (slack {objective_slack})",
        f"max stationarity residual = {max_kkt:.3e}",
        f"lambda endpoints exact: {not endpoint_fail}",
    ]
    return PropositionReport("E6", bool(passed), float(max_violation), checked,
                             objective_slack, details, {})


_VERIFIERS = {
    "A1": verify_prop_a1,
    "B2": verify_prop_b2,
    "C3": verify_prop_c3,
    "D4": verify_prop_d4,
    "E5": verify_prop_e5,
    "E6": verify_prop_e6,
}


def run_propositions(props: Optional[Sequence[str]] = None, seed: int = 0,
                     out_dir=None) -> dict:
    """Run the selected proposition checks; optionally write one JSON per report."""
    selected = list(PROP_IDS) if props is None else [p.upper() for p in props]
    unknown = [p for p in selected if p not in _VERIFIERS]
    if unknown:
        raise ValueError(f"run_propositions: unknown proposition ids {unknown}")
    reports = {}
    for pid in selected:
        reports[pid] = _VERIFIERS[pid](seed=seed)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for pid, report in reports.items():
            (out_dir / f"prop_{pid.lower()}.json").write_text(report.to_json() + "\n",
                                                              encoding="utf-8")
    return reports
