"""Diagnostics for split-score estimation under randomized row selection.

The boosting engine scores a fixed leaf partition by
``S = sum_l (sum_i g_i)^2 / sum_i h_i``.  Under Bernoulli row selection with
importance weights ``1/p_i`` the selected-rows estimate ``S_hat`` is noisy;
this module provides

* a closed-form second-moment approximation of ``S_hat - S`` obtained by
  linearizing each leaf ratio around its mean,
* a Monte-Carlo estimate of the same quantity through the production leaf
  scoring path,
* an exchangeable-budget comparison of selection strategies, and
* a brute-force oracle for the constrained objective
  ``sum((g_i^2 + lambda h_i^2) / p_i)`` that the minimal-variance
  probabilities are supposed to minimize.

The closed form uses the independent-Bernoulli moments
``Var(x_l) = sum (1-p) g^2 / p``, ``Var(y_l) = sum (1-p) h^2 / p`` and
``Cov(x_l, y_l) = sum (1-p) g h / p`` for the weighted leaf sums; the tests
re-derive these by exhaustive enumeration over selection patterns before
trusting them here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MVSBoostError
from .losses import GradHess
from .sampling import regularized_abs, selection_probabilities, threshold_by_sort
from .tree import leaf_score

_CHUNK_ELEMENTS = 4_000_000


@dataclass
class LabScenario:
    """A fixed population, leaf partition, and per-row keep probabilities."""

    g: np.ndarray
    h: np.ndarray
    leaf_ids: np.ndarray
    probs: np.ndarray
    n_draws: int = 20000
    seed: int = 0
    eps_reg: float = 1e-12

    def validate(self) -> None:
        g = np.asarray(self.g, dtype=np.float64)
        h = np.asarray(self.h, dtype=np.float64)
        leaf_ids = np.asarray(self.leaf_ids)
        probs = np.asarray(self.probs, dtype=np.float64)
        n = g.size
        if n == 0:
            raise MVSBoostError("scenario needs at least one row")
        if not (h.size == n and leaf_ids.size == n and probs.size == n):
            raise MVSBoostError("g, h, leaf_ids and probs must share one length")
        if not (np.isfinite(g).all() and np.isfinite(h).all()):
            raise MVSBoostError("g and h must be finite")
        if (h < 0).any():
            raise MVSBoostError("h must be non-negative")
        if ((probs <= 0) | (probs > 1)).any():
            raise MVSBoostError("probs must lie in (0, 1]")
        if (leaf_ids < 0).any():
            raise MVSBoostError("leaf ids must be non-negative")
        n_leaves = int(leaf_ids.max()) + 1
        present = np.bincount(leaf_ids.astype(np.int64), minlength=n_leaves)
        if (present == 0).any():
            raise MVSBoostError("leaf ids must cover 0..L-1 with no empty leaf")
        if self.n_draws < 1000:
            raise MVSBoostError(
                f"n_draws must be >= 1000 for a usable estimate, got {self.n_draws}"
            )
        if self.eps_reg < 0:
            raise MVSBoostError(f"eps_reg must be >= 0, got {self.eps_reg}")


@dataclass
class LeafDecomposition:
    """Moment pieces of one leaf's contribution to the closed form."""

    leaf: int
    ratio: float        # c_l = sum(g) / sum(h)
    var_x: float        # variance of the weighted gradient sum
    var_y: float        # variance of the weighted hessian sum
    cov_xy: float
    term: float


@dataclass
class EmpiricalDelta:
    """Monte-Carlo second moment of the score error."""

    mean: float
    stderr: float
    n_draws: int
    empty_leaf_draws: int


@dataclass
class StrategyReport:
    """One strategy's variance diagnostics under a shared expected budget."""

    name: str
    lam: float | None
    theoretical: float
    empirical: float
    stderr: float
    empty_leaf_draws: int
    objectives: dict
    probs: np.ndarray = field(repr=False, default=None)


@dataclass
class OracleResult:
    mvs_objective: float
    oracle_objective: float
    n_candidates: int


def _leaf_indices(leaf_ids: np.ndarray) -> list:
    n_leaves = int(np.max(leaf_ids)) + 1
    return [np.flatnonzero(leaf_ids == l) for l in range(n_leaves)]


def theoretical_delta2(scenario: LabScenario):
    """Closed-form approximation of ``E[(S_hat - S)^2]``.

    Linearizing ``x^2 / y`` around the leaf means gives per-leaf error
    ``2 c (x - mu_x) - c^2 (y - mu_y)`` with ``c = sum(g)/sum(h)``, whose
    second moment is ``c^2 (4 Var(x) - 4 c Cov(x, y) + c^2 Var(y))``.
    Returns the total plus the per-leaf decomposition.
    """
    scenario.validate()
    g = np.asarray(scenario.g, dtype=np.float64)
    h = np.asarray(scenario.h, dtype=np.float64)
    probs = np.asarray(scenario.probs, dtype=np.float64)
    ratio_var = (1.0 - probs) / probs

    decomposition = []
    total = 0.0
    for leaf, idx in enumerate(_leaf_indices(scenario.leaf_ids)):
        sum_h = float(h[idx].sum())
        if sum_h == 0.0:
            raise MVSBoostError(
                f"leaf {leaf} has zero hessian mass; its score ratio is undefined"
            )
        c = float(g[idx].sum()) / sum_h
        var_x = float((ratio_var[idx] * g[idx] ** 2).sum())
        var_y = float((ratio_var[idx] * h[idx] ** 2).sum())
        cov_xy = float((ratio_var[idx] * g[idx] * h[idx]).sum())
        term = c * c * (4.0 * var_x - 4.0 * c * cov_xy + c * c * var_y)
        decomposition.append(LeafDecomposition(leaf=leaf, ratio=c, var_x=var_x,
                                               var_y=var_y, cov_xy=cov_xy,
                                               term=term))
        total += term
    return total, decomposition


def empirical_delta2(scenario: LabScenario) -> EmpiricalDelta:
    """Monte-Carlo ``E[(S_hat - S)^2]`` through the production leaf scorer.

    Every draw keeps row ``i`` independently with probability ``p_i`` and
    scores the kept rows with weights ``1/p_i`` using the same
    :func:`~mvsboost.tree.leaf_score` the tree builder uses.  Draws that leave
    a leaf empty are retained (the epsilon guard keeps the score finite) and
    counted in ``empty_leaf_draws``.
    """
    scenario.validate()
    g = np.asarray(scenario.g, dtype=np.float64)
    h = np.asarray(scenario.h, dtype=np.float64)
    probs = np.asarray(scenario.probs, dtype=np.float64)
    leaves = _leaf_indices(scenario.leaf_ids)
    eps = scenario.eps_reg

    weighted_g = g / probs
    weighted_h = h / probs
    true_score = float(sum(leaf_score(g[idx].sum(), h[idx].sum(), eps)
                           for idx in leaves))

    # per-leaf (weighted g, weighted h, row indicator) collapsed to one matmul
    stacked = [np.column_stack([weighted_g[idx], weighted_h[idx],
                                np.ones(idx.size)])
               for idx in leaves]

    rng = np.random.default_rng(scenario.seed)
    n = g.size
    chunk = max(1, min(scenario.n_draws, _CHUNK_ELEMENTS // max(n, 1)))
    done = 0
    sum_d2 = 0.0
    sum_d4 = 0.0
    empty_draws = 0
    while done < scenario.n_draws:
        take = min(chunk, scenario.n_draws - done)
        kept = (rng.random((take, n)) < probs).astype(np.float64)
        score_hat = np.zeros(take, dtype=np.float64)
        any_empty = np.zeros(take, dtype=bool)
        for idx, mat in zip(leaves, stacked):
            sums = kept[:, idx] @ mat
            score_hat += leaf_score(sums[:, 0], sums[:, 1], eps)
            any_empty |= sums[:, 2] == 0
        delta2 = (score_hat - true_score) ** 2
        sum_d2 += float(delta2.sum())
        sum_d4 += float((delta2 ** 2).sum())
        empty_draws += int(any_empty.sum())
        done += take

    mean = sum_d2 / scenario.n_draws
    variance = max(0.0, sum_d4 / scenario.n_draws - mean * mean)
    return EmpiricalDelta(mean=mean,
                          stderr=math.sqrt(variance / scenario.n_draws),
                          n_draws=scenario.n_draws,
                          empty_leaf_draws=empty_draws)


def sampling_objective(g: np.ndarray, h: np.ndarray, lam: float,
                       probs: np.ndarray) -> float:
    """The budgeted-variance objective ``sum((g^2 + lambda h^2) / p)``."""
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    return float(((g * g + lam * h * h) / probs).sum())


def strategy_probabilities(g: np.ndarray, h: np.ndarray, strategy: str,
                           sample_rate: float, lam: float = 0.0) -> np.ndarray:
    """Keep probabilities for the lab's comparable strategies.

    ``uniform`` keeps every row at the sample rate; ``importance`` is
    gradient-proportional with a cap (the lambda = 0 special case); ``mvs``
    applies the regularized magnitude at the given lambda.
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if strategy == "uniform":
        return np.full(g.size, sample_rate, dtype=np.float64)
    if strategy == "importance":
        lam = 0.0
    elif strategy != "mvs":
        raise MVSBoostError(
            f"unknown lab strategy {strategy!r}; use uniform, importance or mvs"
        )
    ghat = regularized_abs(GradHess(g=g, h=h), lam)
    mu = threshold_by_sort(ghat, sample_rate)
    return selection_probabilities(ghat, mu, sample_rate)


def compare_strategies(g: np.ndarray, h: np.ndarray, leaf_ids: np.ndarray,
                       sample_rate: float, lambdas, n_draws: int = 20000,
                       seed: int = 0, eps_reg: float = 1e-12) -> list:
    """Variance diagnostics for uniform, importance, and mvs selection.

    All strategies share the expected kept-row budget ``n * sample_rate``.
    Each report carries the closed-form and Monte-Carlo error moments plus
    the budgeted-variance objective of its probabilities evaluated at every
    lambda in ``lambdas``, so objective optimality is directly comparable.
    """
    lambdas = [float(v) for v in lambdas]
    plans = [("uniform", None), ("importance", None)]
    plans += [("mvs", lam) for lam in lambdas]

    reports = []
    for index, (name, lam) in enumerate(plans):
        probs = strategy_probabilities(g, h, name, sample_rate,
                                       lam if lam is not None else 0.0)
        scenario = LabScenario(g=g, h=h, leaf_ids=leaf_ids, probs=probs,
                               n_draws=n_draws, seed=seed + index,
                               eps_reg=eps_reg)
        theoretical, _ = theoretical_delta2(scenario)
        empirical = empirical_delta2(scenario)
        objectives = {lam_eval: sampling_objective(g, h, lam_eval, probs)
                      for lam_eval in lambdas}
        reports.append(StrategyReport(
            name=name, lam=lam, theoretical=theoretical,
            empirical=empirical.mean, stderr=empirical.stderr,
            empty_leaf_draws=empirical.empty_leaf_draws,
            objectives=objectives, probs=probs,
        ))
    return reports


def _budget_projection(raw: np.ndarray, target: float) -> np.ndarray:
    """Scale-and-clip rows of ``raw`` onto the exact-budget set.

    Independent of the production threshold search on purpose: per row the
    scale is solved by plain bisection on the monotone clipped sum.
    """
    raw = np.asarray(raw, dtype=np.float64)
    lo = np.zeros(raw.shape[0])
    hi = np.ones(raw.shape[0])
    for _ in range(200):
        budget = np.minimum(1.0, raw * hi[:, None]).sum(axis=1)
        short = budget < target
        if not short.any():
            break
        hi[short] *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        budget = np.minimum(1.0, raw * mid[:, None]).sum(axis=1)
        lo = np.where(budget < target, mid, lo)
        hi = np.where(budget < target, hi, mid)
    return np.minimum(1.0, raw * hi[:, None])


def _grid_candidates(n: int, target: float, step: float, cap: int):
    """All probability vectors with entries on a ``step`` grid in (0, 1]
    summing exactly to ``target``; empty when the grid cannot represent it."""
    units_total = target / step
    if abs(units_total - round(units_total)) > 1e-9:
        return np.empty((0, n))
    units_total = int(round(units_total))
    max_units = int(round(1.0 / step))
    out = []

    def extend(prefix, remaining, parts_left):
        if len(out) > cap:
            return
        if parts_left == 1:
            if 1 <= remaining <= max_units:
                out.append(prefix + [remaining])
            return
        low = max(1, remaining - max_units * (parts_left - 1))
        high = min(max_units, remaining - (parts_left - 1))
        for units in range(low, high + 1):
            extend(prefix + [units], remaining - units, parts_left - 1)

    extend([], units_total, n)
    if len(out) > cap:
        return np.empty((0, n))
    return np.asarray(out, dtype=np.float64) * step


def optimality_oracle(g: np.ndarray, h: np.ndarray, lam: float,
                      sample_rate: float, n_random: int = 10000,
                      grid_step: float = 0.05, seed: int = 0) -> OracleResult:
    """Brute-force check that the mvs probabilities minimize the objective.

    The oracle takes the best objective over a candidate set independent of
    the production solver: uniform probabilities, every keep-the-top-j
    capped-uniform plan, random positive vectors projected onto the exact
    budget, and for small grids an exhaustive step-``grid_step`` enumeration.
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n = g.size
    target = n * sample_rate
    numerators = g * g + lam * h * h

    probs = strategy_probabilities(g, h, "mvs", sample_rate, lam)
    mvs_objective = sampling_objective(g, h, lam, probs)

    candidates = []
    if target <= n:
        candidates.append(np.full(n, target / n))
    order = np.argsort(-numerators)
    for j in range(0, int(math.floor(target)) + 1):
        if j > n:
            break
        rest = n - j
        if rest == 0:
            if abs(target - n) < 1e-12:
                candidates.append(np.ones(n))
            continue
        fill = (target - j) / rest
        if 0.0 < fill <= 1.0:
            plan = np.full(n, fill)
            plan[order[:j]] = 1.0
            candidates.append(plan)

    rng = np.random.default_rng(seed)
    raw = rng.uniform(1e-6, 1.0, size=(n_random, n))
    candidates.append(_budget_projection(raw, target))
    if n <= 5:
        grid = _grid_candidates(n, target, grid_step, cap=200_000)
        if grid.size:
            candidates.append(grid)

    matrix = np.vstack([np.atleast_2d(c) for c in candidates])
    objectives = (numerators / matrix).sum(axis=1)
    return OracleResult(mvs_objective=mvs_objective,
                        oracle_objective=float(objectives.min()),
                        n_candidates=matrix.shape[0])


# ---------------------------------------------------------------------------
# scenario files for the command line

SCENARIO_DEFAULTS = {
    "n": "200",
    "n_leaves": "2",
    "g_dist": "normal",
    "g_scale": "1.0",
    "g_signs": "random",
    "h_dist": "ones",
    "sample_rate": "0.5",
    "lambdas": "0.1",
    "n_draws": "20000",
    "seed": "0",
    "eps_reg": "1e-12",
}


def load_scenario(path) -> dict:
    """Parse a flat ``key = value`` scenario file; '#' starts a comment."""
    config = dict(SCENARIO_DEFAULTS)
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise MVSBoostError(f"cannot read scenario file {path}: {exc}") from exc
    for line_no, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise MVSBoostError(
                f"{path}: line {line_no} is not a key = value pair: {line.rstrip()!r}"
            )
        key, value = text.split("=", 1)
        key = key.strip()
        if key not in SCENARIO_DEFAULTS:
            raise MVSBoostError(
                f"{path}: unknown scenario key {key!r} on line {line_no}"
            )
        config[key] = value.strip()
    return config


def build_scenario_inputs(config: dict):
    """Draw the population described by a scenario config.

    Returns ``(g, h, leaf_ids, settings)`` where settings carries the parsed
    numeric fields.  Rows are assigned to leaves round-robin so leaf sizes
    are balanced and reproducible.
    """
    try:
        n = int(config["n"])
        n_leaves = int(config["n_leaves"])
        g_scale = float(config["g_scale"])
        sample_rate = float(config["sample_rate"])
        lambdas = [float(v) for v in str(config["lambdas"]).split(",") if v.strip()]
        n_draws = int(config["n_draws"])
        seed = int(config["seed"])
        eps_reg = float(config["eps_reg"])
    except ValueError as exc:
        raise MVSBoostError(f"bad scenario value: {exc}") from exc
    if n < 1 or n_leaves < 1 or n_leaves > n:
        raise MVSBoostError(f"need 1 <= n_leaves <= n, got n={n}, n_leaves={n_leaves}")

    rng = np.random.default_rng(seed)
    g_dist = config["g_dist"]
    if g_dist == "normal":
        g = rng.normal(0.0, g_scale, n)
    elif g_dist == "lognormal":
        g = rng.lognormal(0.0, g_scale, n)
    elif g_dist == "uniform":
        g = rng.uniform(0.0, g_scale, n) + 1e-3
    else:
        raise MVSBoostError(f"unknown g_dist {g_dist!r}")
    if config["g_signs"] == "random" and g_dist != "normal":
        g = g * rng.choice([-1.0, 1.0], n)
    elif config["g_signs"] not in ("random", "positive"):
        raise MVSBoostError(f"unknown g_signs {config['g_signs']!r}")

    h_dist = config["h_dist"]
    if h_dist == "ones":
        h = np.ones(n)
    elif h_dist == "uniform":
        h = rng.uniform(0.1, 1.0, n)
    elif h_dist == "logistic":
        p = rng.uniform(0.02, 0.98, n)
        h = p * (1.0 - p)
    else:
        raise MVSBoostError(f"unknown h_dist {h_dist!r}")

    leaf_ids = np.arange(n) % n_leaves
    settings = {"sample_rate": sample_rate, "lambdas": lambdas,
                "n_draws": n_draws, "seed": seed, "eps_reg": eps_reg}
    return g, h, leaf_ids, settings
