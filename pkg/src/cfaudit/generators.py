"""Post-hoc counterfactual generators.

All generators treat the classifier as a black box: they only call
``predict``/``class_scores`` and never see training data. Every call is
counted; ``CounterfactualResult.evaluations`` is the number of points the
classifier was queried on.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .classifiers import Classifier
from .dataset import L0_TOLERANCE


class NoCounterfactualFound(RuntimeError):
    def __init__(self, message: str, reached: float):
        super().__init__(message)
        self.reached = reached


class CountingClassifier(Classifier):
    """Delegates to ``inner`` and counts the points it is asked about."""

    def __init__(self, inner: Classifier):
        self.inner = inner
        self.n_features = inner.n_features
        self.n_classes = inner.n_classes
        self.calls = 0

    def _scores(self, X):
        self.calls += len(X)
        return np.atleast_2d(self.inner.class_scores(X))


@dataclass(frozen=True, eq=False)
class CounterfactualResult:
    counterfactual: np.ndarray
    source: np.ndarray
    source_label: int
    counterfactual_label: int
    distance_l2: float
    generator: str
    config_hash: str
    evaluations: int
    details: dict = field(default_factory=dict)


def config_hash(cfg) -> str:
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _result(name, cfg, x, e, y0, fc: CountingClassifier, **details) -> CounterfactualResult:
    e = np.asarray(e, dtype=float).copy()
    label = fc.predict(e)
    if label == y0:
        raise AssertionError("generator produced a point of the source class")
    e.setflags(write=False)
    return CounterfactualResult(e, np.array(x, dtype=float), y0, label,
                                float(np.linalg.norm(e - x)), name, config_hash(cfg),
                                fc.calls, details)


def sample_layer(rng: np.random.Generator, center, a0: float, a1: float, n: int) -> np.ndarray:
    """``n`` points uniform in the spherical layer ``a0 <= ||z - center|| <= a1``.

    Directions are normalised Gaussians; the radius is drawn from the
    density proportional to r^(d-1) on [a0, a1].
    """
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    u = rng.random(n)
    ratio = (a0 / a1) ** d
    r = a1 * (ratio + u * (1.0 - ratio)) ** (1.0 / d)
    return center + dirs * r[:, None]


def _ball_diameter(X) -> float:
    X = np.asarray(X, dtype=float)
    sq = np.einsum("ij,ij->i", X, X)
    D2 = sq[:, None] + sq[None, :] - 2 * X @ X.T
    return float(np.sqrt(max(D2.max(), 0.0)))


# ---------------------------------------------------------------- Growing Spheres

@dataclass(frozen=True)
class GsConfig:
    n_per_layer: int = 1000
    eta0: float = 0.1
    layer_width_factor: float = 1.0
    shrink_factor: float = 0.5
    max_radius: float = 10.0
    sparsify: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_per_layer < 1:
            raise ValueError("n_per_layer must be positive")
        if not (self.eta0 > 0 and self.layer_width_factor > 0 and self.max_radius > 0):
            raise ValueError("radii must be positive")
        if not 0 < self.shrink_factor < 1:
            raise ValueError("shrink_factor must lie in (0, 1)")

    @classmethod
    def for_data(cls, X, **overrides) -> "GsConfig":
        """Defaults scaled to a point cloud: eta0 = 10% and max_radius = 2x its diameter."""
        diam = _ball_diameter(X)
        params = {"eta0": 0.1 * diam, "max_radius": 2.0 * diam}
        params.update(overrides)
        return cls(**params)


def growing_spheres(x, f: Classifier, cfg: GsConfig = GsConfig()) -> CounterfactualResult:
    x = np.asarray(x, dtype=float)
    fc = CountingClassifier(f)
    rng = np.random.default_rng(cfg.seed)
    y0 = fc.predict(x)
    n = cfg.n_per_layer

    eta = cfg.eta0
    while np.any(fc.predict(sample_layer(rng, x, 0.0, eta, n)) != y0):
        eta *= cfg.shrink_factor
        if eta < cfg.eta0 * 1e-12:
            raise NoCounterfactualFound("x lies on a decision boundary; shrinking did not clear it", eta)

    a0, width = eta, cfg.layer_width_factor * eta
    while a0 < cfg.max_radius:
        a1 = a0 + width
        Z = sample_layer(rng, x, a0, a1, n)
        enemies = Z[fc.predict(Z) != y0]
        if len(enemies):
            dist = np.linalg.norm(enemies - x, axis=1)
            e = enemies[int(np.argmin(dist))]
            break
        a0 = a1
    else:
        raise NoCounterfactualFound(f"no counterfactual within radius {a0:.6g}", a0)

    if cfg.sparsify:
        e = gs_sparsify(x, e, fc)
    return _result("growing_spheres", cfg, x, e, y0, fc, layer=(a0, a1), eta=eta)


def gs_sparsify(x, e, f: Classifier) -> np.ndarray:
    """Greedily reset coordinates of ``e`` to those of ``x``, smallest change
    first, keeping each reset only if the prediction for ``e`` is unchanged."""
    x = np.asarray(x, dtype=float)
    out = np.array(e, dtype=float)
    label = f.predict(out)
    diff = np.abs(out - x)
    for j in np.argsort(diff, kind="stable"):
        if diff[j] <= L0_TOLERANCE:
            continue
        trial = out.copy()
        trial[j] = x[j]
        if f.predict(trial) == label:
            out = trial
    return out


# ---------------------------------------------------------------- HCLS

@dataclass(frozen=True)
class HclsConfig:
    budget: float = 0.5
    budget_growth: float = 1.5
    max_budget: float = 10.0
    n_candidates: int = 20
    local_steps: int = 30
    step_size: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not (self.budget > 0 and self.step_size > 0):
            raise ValueError("budget and step_size must be positive")
        if not self.budget_growth > 1:
            raise ValueError("budget_growth must exceed 1")
        if self.budget > self.max_budget:
            raise ValueError("budget must not exceed max_budget")
        if self.n_candidates < 1 or self.local_steps < 0:
            raise ValueError("n_candidates must be positive")

    @classmethod
    def for_data(cls, X, **overrides) -> "HclsConfig":
        diam = _ball_diameter(X)
        params = {"budget": 0.1 * diam, "max_budget": 2.0 * diam, "step_size": 0.02 * diam}
        params.update(overrides)
        return cls(**params)


def _project(P, x, radius):
    v = P - x
    nrm = np.linalg.norm(v, axis=1)
    over = nrm > radius
    P = P.copy()
    P[over] = x + v[over] * (radius / nrm[over])[:, None]
    return P


def hcls(x, f: Classifier, cfg: HclsConfig = HclsConfig()) -> CounterfactualResult:
    """Random-restart hill climbing on the best other-class score inside an
    L2 budget ball, enlarging the budget until the label changes."""
    x = np.asarray(x, dtype=float)
    fc = CountingClassifier(f)
    rng = np.random.default_rng(cfg.seed)
    y0 = fc.predict(x)
    d = x.shape[0]
    others = np.array([c for c in range(fc.n_classes) if c != y0])

    def objective(P):
        return fc.class_scores(P)[:, others].max(axis=1)

    budget = cfg.budget
    while True:
        C = sample_layer(rng, x, 0.0, budget, cfg.n_candidates)
        obj = objective(C)
        rows = np.arange(cfg.n_candidates)
        for _ in range(cfg.local_steps):
            P = C.copy()
            P[rows, rng.integers(d, size=cfg.n_candidates)] += (
                rng.choice((-1.0, 1.0), size=cfg.n_candidates) * cfg.step_size
            )
            P = _project(P, x, budget)
            new = objective(P)
            better = new > obj
            C[better] = P[better]
            obj[better] = new[better]
        e = C[int(np.argmax(obj))]
        if fc.predict(e) != y0:
            return _result("hcls", cfg, x, e, y0, fc, budget=budget)
        if budget >= cfg.max_budget:
            raise NoCounterfactualFound(f"no label change within budget {budget:.6g}", budget)
        budget = min(budget * cfg.budget_growth, cfg.max_budget)


# ---------------------------------------------------------------- Wachter-style

@dataclass(frozen=True)
class WachterConfig:
    target_score: float = 0.5
    lambda_schedule: tuple[float, ...] = (0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0)
    n_restarts: int = 5
    max_iters: int = 500
    initial_step: float = 0.25
    step_tolerance: float = 1e-4
    target_class: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lambda_schedule", tuple(float(v) for v in self.lambda_schedule))
        if not 0 < self.target_score <= 1:
            raise ValueError("target_score must lie in (0, 1]")
        sched = self.lambda_schedule
        if not sched or sched[0] <= 0 or any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("lambda_schedule must be positive and strictly increasing")
        if self.n_restarts < 1 or self.max_iters < 1:
            raise ValueError("n_restarts and max_iters must be positive")
        if not (self.initial_step > 0 and self.step_tolerance > 0):
            raise ValueError("step sizes must be positive")

    @classmethod
    def for_data(cls, X, **overrides) -> "WachterConfig":
        diam = _ball_diameter(X)
        params = {"initial_step": 0.05 * diam, "step_tolerance": 1e-5 * diam}
        params.update(overrides)
        return cls(**params)


def _compass_search(objective: Callable, start, step, tol, max_iters):
    """Minimise by axis-aligned moves of size ``step``, halving it whenever no
    move improves, until it falls below ``tol``."""
    e = np.array(start, dtype=float)
    d = e.shape[0]
    cur = objective(e[None, :])[0]
    moves = np.vstack([np.eye(d), -np.eye(d)])
    for _ in range(max_iters):
        if step < tol:
            break
        cand = e + step * moves
        vals = objective(cand)
        k = int(np.argmin(vals))
        if vals[k] < cur:
            e, cur = cand[k], vals[k]
        else:
            step /= 2.0
    return e, cur


def _push_across(fc, x, e, y0, bisections=40, max_extension=8.0):
    """Extend the ray x -> e just past the decision boundary, or return None."""
    v = e - x
    if not np.any(v):
        return None
    lo, t, hi = 1.0, None, None
    delta = 1e-3
    while delta <= max_extension:
        t = 1.0 + delta
        if fc.predict(x + t * v) != y0:
            hi = t
            break
        lo = t
        delta *= 2.0
    if hi is None:
        return None
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if fc.predict(x + mid * v) != y0:
            hi = mid
        else:
            lo = mid
    return x + hi * v


def wachter(x, f: Classifier, cfg: WachterConfig = WachterConfig()) -> CounterfactualResult:
    """Minimise ``lam * (score_t(e) - target)^2 + ||x - e||_1`` for increasing
    ``lam`` until the prediction changes.

    The target class defaults to the best-scoring non-source class at ``x``.
    When an optimum sits on the source side of the boundary it is pushed
    along the ray from ``x`` just far enough to flip the label.
    """
    x = np.asarray(x, dtype=float)
    fc = CountingClassifier(f)
    rng = np.random.default_rng(cfg.seed)
    scores = fc.class_scores(x)
    y0 = int(np.argmax(scores))
    if cfg.target_class is not None:
        target = cfg.target_class
        if target == y0 or not 0 <= target < fc.n_classes:
            raise ValueError("target_class must be a valid class other than f(x)")
    else:
        masked = scores.copy()
        masked[y0] = -np.inf
        target = int(np.argmax(masked))

    warm = x.copy()
    for lam in cfg.lambda_schedule:
        def objective(P, lam=lam):
            s = fc.class_scores(P)[:, target]
            return lam * (s - cfg.target_score) ** 2 + np.abs(P - x).sum(axis=1)

        best, best_val = None, np.inf
        for r in range(cfg.n_restarts):
            # jitter doubles per restart so flat (e.g. vote-count) scores still get explored
            scale = cfg.initial_step * 2.0 ** r
            start = warm if r == 0 else warm + rng.normal(scale=scale, size=x.shape)
            e, val = _compass_search(objective, start, cfg.initial_step,
                                     cfg.step_tolerance, cfg.max_iters)
            if val < best_val:
                best, best_val = e, val
        warm = best
        if fc.predict(best) != y0:
            return _result("wachter", cfg, x, best, y0, fc, lam=lam, target_class=target,
                           pushed=False)
        pushed = _push_across(fc, x, best, y0)
        if pushed is not None:
            return _result("wachter", cfg, x, pushed, y0, fc, lam=lam, target_class=target,
                           pushed=True)
    raise NoCounterfactualFound("no label change after the full lambda schedule",
                                cfg.lambda_schedule[-1])


GENERATORS = {
    "growing_spheres": (GsConfig, growing_spheres),
    "hcls": (HclsConfig, hcls),
    "wachter": (WachterConfig, wachter),
}
