"""Row-selection strategies for stochastic boosting iterations.

Every strategy returns a :class:`SampleSelection`: the chosen row indices,
one importance weight per chosen row, and the full vector of selection
probabilities that produced them.

The minimal-variance strategy keeps row ``i`` with probability
``p_i = min(1, ghat_i / mu)`` where ``ghat_i = sqrt(g_i^2 + lambda * h_i^2)``
is the regularized gradient magnitude and the threshold ``mu`` is set so the
expected number of kept rows equals ``n * sample_rate``.  Those probabilities
minimize the variance proxy ``sum(ghat_i^2 / p_i)`` over all probability
vectors with the same expected sample size, so large-gradient rows are kept
deterministically and the rest are subsampled proportionally.

Two interchangeable threshold searches are provided: an O(n log n) sort-based
scan and an expected-O(n) quickselect-style partition.  They agree to
floating-point accuracy and both handle ties, duplicates, and degenerate
inputs identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MVSBoostError
from .losses import GradHess

STRATEGIES = ("none", "sgb", "goss", "mvs", "mvs_adaptive")

# rows whose regularized gradient is exactly zero carry no information, but a
# hard zero probability would make importance weights undefined; keep them
# selectable-in-principle at a vanishing rate instead
ZERO_PROBABILITY_FLOOR = 1e-12


@dataclass
class SamplingConfig:
    """Configuration shared by all row-sampling strategies.

    ``sample_rate`` is the expected fraction of rows kept per iteration for
    the rate-driven strategies (sgb, mvs, mvs_adaptive).  GOSS instead derives
    its kept fraction from ``goss_top_rate + goss_other_rate``.
    """

    strategy: str = "mvs"
    sample_rate: float = 0.8
    mvs_lambda: float = 0.1
    goss_top_rate: float = 0.2
    goss_other_rate: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise MVSBoostError(
                f"unknown sampling strategy {self.strategy!r}; expected one "
                f"of {STRATEGIES}"
            )
        if not 0.0 < self.sample_rate <= 1.0:
            raise MVSBoostError(
                f"sample_rate must lie in (0, 1], got {self.sample_rate}"
            )
        if self.mvs_lambda < 0.0:
            raise MVSBoostError(
                f"mvs_lambda must be >= 0, got {self.mvs_lambda}"
            )
        if self.strategy == "goss":
            if not 0.0 < self.goss_top_rate < 1.0:
                raise MVSBoostError(
                    f"goss_top_rate must lie in (0, 1), got {self.goss_top_rate}"
                )
            if not 0.0 < self.goss_other_rate < 1.0:
                raise MVSBoostError(
                    f"goss_other_rate must lie in (0, 1), "
                    f"got {self.goss_other_rate}"
                )
            if self.goss_top_rate + self.goss_other_rate > 1.0:
                raise MVSBoostError(
                    "goss_top_rate + goss_other_rate must not exceed 1, got "
                    f"{self.goss_top_rate} + {self.goss_other_rate}"
                )
        if self.seed < 0:
            raise MVSBoostError(f"seed must be non-negative, got {self.seed}")


@dataclass
class SampleSelection:
    """Outcome of one sampling round.

    Attributes
    ----------
    indices : ndarray, int64, strictly increasing
        Row ids kept this round.
    weights : ndarray, float64, aligned with ``indices``
        Importance weights restoring unbiased weighted sums.
    probs : ndarray, float64, length n
        Per-row selection probability actually used for every row.
    mu : float or None
        Threshold used by the minimal-variance strategy, if any.
    lam : float or None
        Regularization weight used by the minimal-variance strategy, if any.
    """

    indices: np.ndarray
    weights: np.ndarray
    probs: np.ndarray
    mu: float | None = None
    lam: float | None = None

    @property
    def n_selected(self) -> int:
        return int(self.indices.size)


@dataclass
class ComparisonCounter:
    """Counts element comparisons for algorithmic-cost experiments.

    Partition passes are counted as performed (two comparisons per scanned
    element).  Sort-based counts are modeled as ``n * ceil(log2 n) + n``
    because the underlying vectorized sort cannot be instrumented directly.
    """

    count: int = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def regularized_abs(gh: GradHess, lam: float) -> np.ndarray:
    """Regularized gradient magnitude ``sqrt(g^2 + lambda * h^2)``.

    Uses ``hypot`` so extreme gradient scales neither overflow nor underflow.
    """
    if lam < 0.0:
        raise MVSBoostError(f"lambda must be >= 0, got {lam}")
    return np.hypot(np.asarray(gh.g, dtype=np.float64),
                    math.sqrt(lam) * np.asarray(gh.h, dtype=np.float64))


def adaptive_lambda(gh: GradHess) -> float:
    """Squared root-leaf value ``(sum g / sum h)^2`` of the current iteration.

    Tracks the scale on which leaf values are about to be built, so the
    hessian term in the regularized magnitude stays commensurate with the
    gradient term.  Returns 0 when the hessians sum to zero.
    """
    sum_h = float(np.sum(gh.h))
    if sum_h == 0.0:
        return 0.0
    return float(np.sum(gh.g) / sum_h) ** 2


def _check_threshold_args(ghat: np.ndarray, sample_rate: float) -> np.ndarray:
    ghat = np.asarray(ghat, dtype=np.float64)
    if ghat.ndim != 1 or ghat.size == 0:
        raise MVSBoostError("ghat must be a non-empty 1-d array")
    if (ghat < 0).any() or not np.isfinite(ghat).all():
        raise MVSBoostError("ghat entries must be finite and non-negative")
    if not 0.0 < sample_rate <= 1.0:
        raise MVSBoostError(
            f"sample_rate must lie in (0, 1], got {sample_rate}"
        )
    return ghat


def threshold_by_sort(ghat: np.ndarray, sample_rate: float,
                      counter: ComparisonCounter | None = None) -> float:
    """Threshold ``mu`` with ``sum(min(1, ghat/mu)) = n * sample_rate``.

    Sorts descending once, then scans candidate clip counts ``k`` in closed
    form: if exactly the ``k`` largest values are clipped to probability 1,
    the budget forces ``mu = suffix_sum(k) / (n * sample_rate - k)``, which is
    consistent iff it falls between the values at the segment boundary.  The
    budget is continuous and strictly decreasing in ``mu``, so exactly one
    segment admits a solution and no iterative solve is needed.

    Degenerate inputs: an all-zero ``ghat`` returns ``inf`` (callers fall back
    to uniform selection at the requested rate), and a budget of at least the
    number of positive entries returns the smallest positive value so every
    informative row is kept deterministically.

    O(n log n) time, O(n) extra space.
    """
    ghat = _check_threshold_args(ghat, sample_rate)
    n = ghat.size
    if counter is not None:
        counter.add(n * max(1, math.ceil(math.log2(n))) + n)

    n_positive = int((ghat > 0).sum())
    if n_positive == 0:
        return math.inf
    target = n * sample_rate
    desc = np.sort(ghat)[::-1]
    if target >= n_positive:
        return float(desc[n_positive - 1])

    # suffix[k] = sum of the values that stay proportional when the k largest
    # are clipped to probability 1
    suffix = np.concatenate([np.cumsum(desc[::-1])[::-1], [0.0]])
    k = np.arange(n, dtype=np.float64)
    denom = target - k
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(denom > 0, suffix[:-1] / np.where(denom > 0, denom, 1.0),
                      np.inf)
    upper = np.concatenate([[np.inf], desc[:-1]])
    lower = desc

    for slack in (0.0, 1e-9):
        lo = lower * (1.0 - slack)
        hi = upper * (1.0 + slack)
        feasible = (denom > 0) & (mu >= lo) & (mu <= hi)
        idx = int(np.argmax(feasible))
        if feasible[idx]:
            return float(mu[idx])
    raise MVSBoostError("threshold search found no consistent segment")


def threshold_by_partition(ghat: np.ndarray, sample_rate: float,
                           rng: np.random.Generator,
                           counter: ComparisonCounter | None = None) -> float:
    """Same threshold as :func:`threshold_by_sort` without sorting.

    Quickselect-style search: pick a random pivot value ``c``, evaluate the
    budget ``sum(min(1, ghat/c))`` from a three-way partition, and recurse
    into the side that still brackets the solution, carrying the sum of
    discarded smaller values (``sum_small``) and the count of discarded
    larger values (``n_large``).  When a side empties, the threshold follows
    in closed form from the carried aggregates.  Ties are absorbed with their
    multiplicity, so duplicated and all-equal inputs stay exact.

    Expected O(n) time; the pivot sequence is drawn from ``rng`` so a run is
    reproducible from one seed.
    """
    ghat = _check_threshold_args(ghat, sample_rate)
    n = ghat.size
    if counter is not None:
        counter.add(n)

    values = ghat[ghat > 0]
    if values.size == 0:
        return math.inf
    target = n * sample_rate
    if target >= values.size:
        return float(values.min())

    sum_small = 0.0
    n_large = 0
    while True:
        if counter is not None:
            counter.add(2 * values.size)
        pivot = float(values[rng.integers(values.size)])
        small = values[values < pivot]
        large = values[values > pivot]
        n_equal = values.size - small.size - large.size
        sum_below = float(small.sum())
        budget = ((sum_small + sum_below) / pivot
                  + large.size + n_large + n_equal)
        if budget == target:
            return pivot
        if budget > target:
            # threshold lies above the pivot: pivot ties and everything
            # smaller become proportional mass
            sum_small += sum_below + n_equal * pivot
            if large.size == 0:
                return sum_small / (target - n_large)
            values = large
        else:
            # threshold lies below the pivot: pivot ties and everything
            # larger are clipped to probability 1
            n_large += large.size + n_equal
            if small.size == 0:
                return sum_small / (target - n_large)
            values = small


def selection_probabilities(ghat: np.ndarray, mu: float,
                            sample_rate: float) -> np.ndarray:
    """Per-row keep probabilities ``min(1, ghat/mu)`` for a solved threshold.

    An infinite ``mu`` is the all-zero-gradient sentinel and falls back to
    uniform probabilities at the requested rate.  Probabilities are floored
    at a vanishing constant so importance weights stay finite even for rows
    with zero (or denormally small) gradient magnitude; this shifts the
    expected sample size by at most ``n * 1e-12``.
    """
    ghat = np.asarray(ghat, dtype=np.float64)
    if math.isinf(mu):
        return np.full(ghat.shape, sample_rate, dtype=np.float64)
    if mu <= 0:
        raise MVSBoostError(f"threshold must be positive, got {mu}")
    return np.maximum(np.minimum(1.0, ghat / mu), ZERO_PROBABILITY_FLOOR)


def mvs_select(gh: GradHess, cfg: SamplingConfig,
               rng: np.random.Generator, emit=None) -> SampleSelection:
    """Minimal-variance row selection with importance weights ``1/p``.

    With ``strategy == "mvs_adaptive"`` the regularization weight is recomputed
    from the current derivatives via :func:`adaptive_lambda`; otherwise
    ``cfg.mvs_lambda`` is used as-is.  Bernoulli keep/drop draws are taken
    from ``rng`` in row order, after the pivot draws of the threshold search.
    """
    lam = (adaptive_lambda(gh) if cfg.strategy == "mvs_adaptive"
           else cfg.mvs_lambda)
    ghat = regularized_abs(gh, lam)
    if emit is not None:
        emit("regularized_gradients", {"lam": lam})
    mu = threshold_by_partition(ghat, cfg.sample_rate, rng)
    if emit is not None:
        emit("threshold", {"mu": mu})
    probs = selection_probabilities(ghat, mu, cfg.sample_rate)
    if emit is not None:
        emit("probabilities", {})
    weights_full = 1.0 / probs
    if emit is not None:
        emit("weights", {})
    keep = rng.random(ghat.size) < probs
    indices = np.flatnonzero(keep)
    selection = SampleSelection(indices=indices,
                                weights=weights_full[indices],
                                probs=probs, mu=float(mu), lam=float(lam))
    if emit is not None:
        emit("select", {"n_selected": selection.n_selected})
    return selection


def _ceil_count(rate: float, n: int) -> int:
    # guard against float fuzz pushing an exact product over the next integer
    return min(n, max(0, math.ceil(rate * n - 1e-9)))


def goss_select(gh: GradHess, cfg: SamplingConfig,
                rng: np.random.Generator, emit=None) -> SampleSelection:
    """Gradient-based one-side sampling.

    Keeps the ``ceil(top_rate * n)`` rows with the largest ``|g|`` at weight 1
    (ties broken by lower row index) plus a uniform draw of
    ``ceil(other_rate * n)`` rows from the remainder, reweighted by the
    constant ``(1 - top_rate) / other_rate``.
    """
    g = np.asarray(gh.g, dtype=np.float64)
    n = g.size
    n_top = _ceil_count(cfg.goss_top_rate, n)
    n_other = _ceil_count(cfg.goss_other_rate, n)

    order = np.argsort(-np.abs(g), kind="stable")
    top = order[:n_top]
    rest = order[n_top:]
    n_other = min(n_other, rest.size)
    if n_other > 0:
        chosen = rng.choice(rest, size=n_other, replace=False)
    else:
        chosen = np.empty(0, dtype=np.int64)

    other_weight = (1.0 - cfg.goss_top_rate) / cfg.goss_other_rate
    weights_full = np.zeros(n, dtype=np.float64)
    weights_full[top] = 1.0
    weights_full[chosen] = other_weight

    probs = np.zeros(n, dtype=np.float64)
    probs[top] = 1.0
    if rest.size > 0:
        probs[rest] = n_other / rest.size

    indices = np.sort(np.concatenate([top, chosen]))
    selection = SampleSelection(indices=indices,
                                weights=weights_full[indices], probs=probs)
    if emit is not None:
        emit("select", {"n_selected": selection.n_selected})
    return selection


def sgb_select(n: int, cfg: SamplingConfig,
               rng: np.random.Generator, emit=None) -> SampleSelection:
    """Plain stochastic subsampling: ``round(rate * n)`` distinct rows.

    All selected rows share the constant weight ``1 / rate``; a constant
    factor does not move leaf values, and it keeps weighted sums unbiased.
    """
    n_keep = int(math.floor(cfg.sample_rate * n + 0.5))
    indices = np.sort(rng.choice(n, size=n_keep, replace=False))
    probs = np.full(n, n_keep / n, dtype=np.float64)
    selection = SampleSelection(indices=indices.astype(np.int64),
                                weights=np.full(n_keep, 1.0 / cfg.sample_rate),
                                probs=probs)
    if emit is not None:
        emit("select", {"n_selected": selection.n_selected})
    return selection


def select_rows(gh: GradHess, cfg: SamplingConfig,
                rng: np.random.Generator, emit=None) -> SampleSelection:
    """Dispatch to the configured strategy over ``len(gh.g)`` rows."""
    cfg.validate()
    n = int(np.asarray(gh.g).size)
    if cfg.strategy == "none":
        selection = SampleSelection(indices=np.arange(n, dtype=np.int64),
                                    weights=np.ones(n, dtype=np.float64),
                                    probs=np.ones(n, dtype=np.float64))
        if emit is not None:
            emit("select", {"n_selected": n})
        return selection
    if cfg.strategy == "sgb":
        return sgb_select(n, cfg, rng, emit=emit)
    if cfg.strategy == "goss":
        return goss_select(gh, cfg, rng, emit=emit)
    return mvs_select(gh, cfg, rng, emit=emit)
