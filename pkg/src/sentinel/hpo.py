"""Two-phase Bayesian hyperparameter optimization.

A Gaussian-process surrogate (squared-exponential ARD kernel, noise term,
hyperparameters refit by maximum likelihood after every observation) models
the classification error over a seven-dimensional search space; expected
improvement picks each next candidate from a seeded pool. Phase 1 searches
all dimensions, phase 2 re-searches only the three most influential ones
(units, layers, window size) with the rest pinned at the phase-1 best.

The GP works in a unit hypercube; integer dimensions round on the way out,
log-real dimensions map exponentially. The objective convention is
minimization of 1 - series accuracy on a validation split carved from the
training data (never the test set).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import norm, qmc

from .errors import AllTrialsFailed, ConfigError, DegenerateSurrogate

JITTER = 1e-8
N_INIT = 8
N_CANDIDATES = 1024
PHASE2_DIMS = ("gru_units", "gru_layers", "window_size")


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str  # "integer" | "real" | "log-real"
    lower: float
    upper: float

    def __post_init__(self):
        if self.kind not in ("integer", "real", "log-real"):
            raise ConfigError(f"unknown dimension kind {self.kind!r}")
        if not self.lower < self.upper:
            raise ConfigError(f"{self.name}: lower must be < upper")
        if self.kind == "integer" and (self.lower != int(self.lower)
                                       or self.upper != int(self.upper)):
            raise ConfigError(f"{self.name}: integer bounds must be integral")
        if self.kind == "log-real" and self.lower <= 0:
            raise ConfigError(f"{self.name}: log-real bounds must be positive")

    def from_unit(self, u: float):
        u = min(max(float(u), 0.0), 1.0)
        if self.kind == "log-real":
            return float(math.exp(math.log(self.lower)
                                  + u * (math.log(self.upper) - math.log(self.lower))))
        value = self.lower + u * (self.upper - self.lower)
        if self.kind == "integer":
            return int(min(max(round(value), self.lower), self.upper))
        return float(value)

    def to_unit(self, value) -> float:
        if self.kind == "log-real":
            return (math.log(value) - math.log(self.lower)) / (
                math.log(self.upper) - math.log(self.lower))
        return (float(value) - self.lower) / (self.upper - self.lower)


@dataclass
class SearchSpace:
    dimensions: list[Dimension]

    def __post_init__(self):
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate dimension names")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def __len__(self) -> int:
        return len(self.dimensions)

    def from_unit(self, u: np.ndarray) -> dict:
        return {d.name: d.from_unit(u[i]) for i, d in enumerate(self.dimensions)}

    def to_unit(self, params: dict) -> np.ndarray:
        return np.array([d.to_unit(params[d.name]) for d in self.dimensions])

    def contains(self, params: dict) -> bool:
        for d in self.dimensions:
            v = params[d.name]
            if not d.lower <= v <= d.upper:
                return False
            if d.kind == "integer" and v != int(v):
                return False
        return True


def default_space() -> SearchSpace:
    """The seven tuned parameters with bounds bracketing every reported value."""
    return SearchSpace([
        Dimension("gru_units", "integer", 32, 256),
        Dimension("gru_layers", "integer", 1, 3),
        Dimension("window_size", "integer", 50, 500),
        Dimension("batch_size", "integer", 8, 64),
        Dimension("learning_rate", "log-real", 1e-3, 1.0),
        Dimension("lr_decay", "real", 0.8, 1.0),
        Dimension("output_threshold", "real", 0.3, 0.9),
    ])


def phase2_space(base: SearchSpace) -> SearchSpace:
    """Restrict to the most influential dimensions: units, layers, window."""
    dims = [d for d in base.dimensions if d.name in PHASE2_DIMS]
    if not dims:
        raise ConfigError("base space has none of the phase-2 dimensions")
    return SearchSpace(dims)


@dataclass
class HpoTrial:
    params: dict
    objective: float
    status: str  # "done" | "failed"


# --- Gaussian-process surrogate --------------------------------------------------


def _kernel(xa: np.ndarray, xb: np.ndarray, log_ell: np.ndarray, log_sf: float) -> np.ndarray:
    ell = np.exp(log_ell)
    d = (xa[:, None, :] - xb[None, :, :]) / ell
    return np.exp(2.0 * log_sf) * np.exp(-0.5 * np.sum(d * d, axis=2))


@dataclass
class Surrogate:
    space: SearchSpace
    seed: int = 0
    x: np.ndarray = None          # (n, d) unit coordinates
    y: np.ndarray = None          # (n,)
    log_ell: np.ndarray = None
    log_sf: float = 0.0
    log_sn: float = math.log(1e-3) / 2  # log of noise *std*
    _chol: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        d = len(self.space)
        if self.x is None:
            self.x = np.zeros((0, d))
        if self.y is None:
            self.y = np.zeros(0)
        if self.log_ell is None:
            self.log_ell = np.full(d, math.log(0.3))

    @property
    def n_observed(self) -> int:
        return len(self.y)

    @property
    def length_scales(self) -> np.ndarray:
        return np.exp(self.log_ell)

    @property
    def signal_var(self) -> float:
        return float(np.exp(2.0 * self.log_sf))

    @property
    def noise_var(self) -> float:
        return float(np.exp(2.0 * self.log_sn))

    @property
    def best_objective(self) -> float:
        if self.n_observed == 0:
            raise DegenerateSurrogate("no observations yet")
        return float(self.y.min())

    def set_kernel(self, length_scales, signal_var: float, noise_var: float) -> None:
        """Pin kernel hyperparameters (skipping MLE) and refactorize."""
        self.log_ell = np.log(np.asarray(length_scales, dtype=float))
        self.log_sf = 0.5 * math.log(signal_var)
        self.log_sn = 0.5 * math.log(noise_var)
        self._factorize()

    def _y_mean(self) -> float:
        return float(self.y.mean()) if self.n_observed else 0.0

    def _factorize(self) -> None:
        if self.n_observed == 0:
            self._chol = self._alpha = None
            return
        k = _kernel(self.x, self.x, self.log_ell, self.log_sf)
        k[np.diag_indices_from(k)] += self.noise_var + JITTER
        try:
            self._chol = np.linalg.cholesky(k)
        except np.linalg.LinAlgError as exc:
            raise DegenerateSurrogate(
                f"kernel matrix not positive definite after jitter: {exc}"
            ) from exc
        resid = self.y - self._y_mean()
        z = np.linalg.solve(self._chol, resid)
        self._alpha = np.linalg.solve(self._chol.T, z)

    def posterior(self, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Latent posterior mean and variance at unit-cube query points."""
        xq = np.atleast_2d(xq)
        if self.n_observed == 0:
            return (np.full(len(xq), 0.0),
                    np.full(len(xq), self.signal_var))
        if self._chol is None:
            self._factorize()
        ks = _kernel(self.x, xq, self.log_ell, self.log_sf)
        mu = self._y_mean() + ks.T @ self._alpha
        v = np.linalg.solve(self._chol, ks)
        var = self.signal_var - np.sum(v * v, axis=0)
        return mu, np.maximum(var, 0.0)


def _negative_log_likelihood(theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    d = x.shape[1]
    log_ell, log_sf, log_sn = theta[:d], theta[d], theta[d + 1]
    k = _kernel(x, x, log_ell, log_sf)
    k[np.diag_indices_from(k)] += math.exp(2.0 * log_sn) + JITTER
    try:
        chol = np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        return 1e25
    resid = y - y.mean()
    z = np.linalg.solve(chol, resid)
    return float(0.5 * z @ z + np.log(np.diag(chol)).sum()
                 + 0.5 * len(y) * math.log(2.0 * math.pi))


def _fit_hyperparameters(surr: Surrogate) -> None:
    """Maximum-likelihood kernel hyperparameters via seeded multi-start."""
    if surr.n_observed < 2:
        surr._factorize()
        return
    d = len(surr.space)
    bounds = ([(math.log(1e-2), math.log(10.0))] * d    # length scales
              + [(math.log(1e-3), math.log(10.0))]      # signal std
              + [(math.log(1e-4), math.log(1.0))])      # noise std
    current = np.concatenate([surr.log_ell, [surr.log_sf, surr.log_sn]])
    rng = np.random.default_rng([surr.seed, surr.n_observed, 1])
    starts = [current,
              np.concatenate([np.full(d, math.log(0.3)),
                              [math.log(max(surr.y.std(), 1e-2)), math.log(1e-2)]])]
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    starts += [lo + rng.uniform(size=d + 2) * (hi - lo) for _ in range(2)]
    best_theta, best_nll = None, np.inf
    for s in starts:
        res = optimize.minimize(_negative_log_likelihood, np.clip(s, lo, hi),
                                args=(surr.x, surr.y), method="L-BFGS-B",
                                bounds=bounds)
        if res.fun < best_nll:
            best_nll, best_theta = res.fun, res.x
    surr.log_ell = best_theta[:d]
    surr.log_sf = float(best_theta[d])
    surr.log_sn = float(best_theta[d + 1])
    surr._factorize()


def observe(surr: Surrogate, params: dict, objective: float) -> Surrogate:
    """Add one (point, objective) pair and refit the GP. Returns the surrogate."""
    u = np.clip(surr.space.to_unit(params), 0.0, 1.0)
    surr.x = np.vstack([surr.x, u[None]])
    surr.y = np.append(surr.y, float(objective))
    _fit_hyperparameters(surr)
    return surr


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best: float) -> np.ndarray:
    """EI for minimization; exactly zero wherever sigma is zero."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    ei = np.zeros_like(mu)
    ok = sigma > 0
    gamma = (best - mu[ok]) / sigma[ok]
    ei[ok] = sigma[ok] * (gamma * norm.cdf(gamma) + norm.pdf(gamma))
    return ei


def _sobol_point(d: int, index: int, seed: int) -> np.ndarray:
    count = 1 << max(4, (index + 1).bit_length())  # power of two >= index+1
    sob = qmc.Sobol(d, scramble=True, seed=seed)
    return sob.random(count)[index]


def suggest_next(surr: Surrogate, space: SearchSpace | None = None,
                 seed: int | None = None, n_init: int = N_INIT) -> dict:
    """Next point to evaluate: quasi-random for the first n_init calls, then
    the best of N_CANDIDATES seeded uniform candidates by expected
    improvement."""
    space = space or surr.space
    seed = surr.seed if seed is None else seed
    n = surr.n_observed
    if n < n_init:
        return space.from_unit(_sobol_point(len(space), n, seed))
    rng = np.random.default_rng([seed, n, 2])
    candidates = rng.uniform(size=(N_CANDIDATES, len(space)))
    mu, var = surr.posterior(candidates)
    ei = expected_improvement(mu, np.sqrt(var), surr.best_objective)
    return space.from_unit(candidates[int(np.argmax(ei))])


def run_phase(space: SearchSpace, budget: int, objective_fn, seed: int,
              n_init: int = N_INIT) -> tuple[list[HpoTrial], HpoTrial]:
    """Sequential suggest -> evaluate -> observe loop.

    A trial whose objective raises or returns a non-finite value is recorded
    as failed and observed at the worst case 1.0 so the surrogate learns to
    avoid the region.
    """
    if budget < n_init:
        raise ConfigError(f"budget {budget} is below n_init {n_init}")
    surr = Surrogate(space, seed=seed)
    trials: list[HpoTrial] = []
    for _ in range(budget):
        params = suggest_next(surr, space, seed, n_init=n_init)
        try:
            value = float(objective_fn(params))
            if not np.isfinite(value):
                raise ValueError(f"non-finite objective {value!r}")
            value = min(max(value, 0.0), 1.0)
            trials.append(HpoTrial(params=params, objective=value, status="done"))
            observe(surr, params, value)
        except Exception:
            trials.append(HpoTrial(params=params, objective=1.0, status="failed"))
            observe(surr, params, 1.0)
    done = [t for t in trials if t.status == "done"]
    if not done:
        raise AllTrialsFailed(f"all {budget} trials failed")
    best = min(done, key=lambda t: t.objective)
    return trials, best


@dataclass
class TwoPhaseResult:
    phase1: list[HpoTrial]
    best1: HpoTrial
    phase2: list[HpoTrial]
    best2: HpoTrial
    best_params: dict
    best_objective: float


def run_two_phase(space: SearchSpace, budget1: int, budget2: int, objective_fn,
                  seed: int, n_init: int = N_INIT) -> TwoPhaseResult:
    """Phase 1 over all dims, then phase 2 over units/layers/window with the
    remaining parameters pinned at the phase-1 best."""
    trials1, best1 = run_phase(space, budget1, objective_fn, seed, n_init=n_init)
    sub = phase2_space(space)
    fixed = {k: v for k, v in best1.params.items() if k not in sub.names}

    def restricted(params: dict) -> float:
        return objective_fn({**fixed, **params})

    trials2, best2 = run_phase(sub, budget2, restricted, seed + 1, n_init=n_init)
    if best2.objective <= best1.objective:
        best_params = {**fixed, **best2.params}
        best_objective = best2.objective
    else:
        best_params = dict(best1.params)
        best_objective = best1.objective
    return TwoPhaseResult(phase1=trials1, best1=best1, phase2=trials2,
                          best2=best2, best_params=best_params,
                          best_objective=best_objective)


# --- partial dependence -----------------------------------------------------------


@dataclass
class PartialDependence:
    dim_names: list[str]
    grids: list[np.ndarray]   # parameter-space grid values per dim
    values: np.ndarray        # (g,) for 1 dim, (g1, g2) for 2 dims


def _dim_grid(dim: Dimension, grid: int) -> tuple[np.ndarray, np.ndarray]:
    if dim.kind == "integer":
        vals = np.unique(np.round(np.linspace(dim.lower, dim.upper, grid)).astype(int))
    elif dim.kind == "log-real":
        vals = np.exp(np.linspace(math.log(dim.lower), math.log(dim.upper), grid))
    else:
        vals = np.linspace(dim.lower, dim.upper, grid)
    units = np.array([dim.to_unit(v) for v in vals])
    return vals, units


def partial_dependence(surr: Surrogate, dims: list[int], grid: int = 20) -> PartialDependence:
    """Average the posterior mean over observed values of the other dims
    while sweeping the chosen one or two dims across a grid."""
    if surr.n_observed < 2:
        raise ConfigError("partial dependence needs at least 2 observations")
    if len(dims) not in (1, 2):
        raise ConfigError("dims must select 1 or 2 dimensions")
    if len(set(dims)) != len(dims):
        raise ConfigError("dims must be distinct")
    space_dims = [surr.space.dimensions[i] for i in dims]
    grids = [_dim_grid(d, grid) for d in space_dims]
    base = surr.x
    if len(dims) == 1:
        vals, units = grids[0]
        out = np.empty(len(vals))
        for gi, gu in enumerate(units):
            xq = base.copy()
            xq[:, dims[0]] = gu
            mu, _ = surr.posterior(xq)
            out[gi] = mu.mean()
        return PartialDependence([space_dims[0].name], [vals], out)
    (va, ua), (vb, ub) = grids
    out = np.empty((len(va), len(vb)))
    for i, gua in enumerate(ua):
        for j, gub in enumerate(ub):
            xq = base.copy()
            xq[:, dims[0]] = gua
            xq[:, dims[1]] = gub
            mu, _ = surr.posterior(xq)
            out[i, j] = mu.mean()
    return PartialDependence([d.name for d in space_dims], [va, vb], out)


# --- persistence ------------------------------------------------------------------


def write_trials_csv(trials: list[HpoTrial], space: SearchSpace, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", *space.names, "objective", "status"])
        for i, t in enumerate(trials):
            row = [i]
            for name in space.names:
                v = t.params[name]
                row.append(repr(v) if isinstance(v, float) else v)
            row.extend([repr(t.objective), t.status])
            w.writerow(row)


def read_trials_csv(path, space: SearchSpace) -> list[HpoTrial]:
    import csv

    trials = []
    with open(path) as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            params = {}
            for d in space.dimensions:
                raw = row[d.name]
                params[d.name] = int(raw) if d.kind == "integer" else float(raw)
            trials.append(HpoTrial(params=params,
                                   objective=float(row["objective"]),
                                   status=row["status"]))
    return trials


def write_pd_csv(pd: PartialDependence, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if len(pd.dim_names) == 1:
            w.writerow([pd.dim_names[0], "mean_objective"])
            for v, m in zip(pd.grids[0], pd.values):
                w.writerow([repr(float(v)), repr(float(m))])
        else:
            w.writerow([*pd.dim_names, "mean_objective"])
            for i, va in enumerate(pd.grids[0]):
                for j, vb in enumerate(pd.grids[1]):
                    w.writerow([repr(float(va)), repr(float(vb)),
                                repr(float(pd.values[i, j]))])
