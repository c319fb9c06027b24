"""Population statistics: error EDFs, empirical bootstrap, random search efficiency, trend fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class EDF:
    """Fraction of errors strictly below ``e``."""

    errors: np.ndarray  # sorted

    @classmethod
    def from_errors(cls, errors: Sequence[float]) -> "EDF":
        e = np.sort(np.asarray(errors, dtype=np.float64))
        if e.size == 0:
            raise ValueError("EDF needs at least one error")
        return cls(e)

    def __call__(self, e):
        return np.searchsorted(self.errors, e, side="left") / self.errors.size

    @property
    def n(self) -> int:
        return int(self.errors.size)

    @property
    def min(self) -> float:
        return float(self.errors[0])

    @property
    def mean(self) -> float:
        return float(self.errors.mean())

    def steps(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct error values and F just above each (the plotted step heights)."""
        x = np.unique(self.errors)
        return x, np.searchsorted(self.errors, x, side="right") / self.n


def edf(errors: Sequence[float]) -> EDF:
    return EDF.from_errors(errors)


@dataclass(frozen=True)
class BootstrapResult:
    ci_low: float
    ci_high: float
    median: float
    reps: int
    frac: float


def bootstrap_best(
    pairs: Sequence[tuple[float, float]],
    frac: float = 0.25,
    reps: int = 10_000,
    ci: float = 0.95,
    seed: int = 0,
) -> BootstrapResult:
    """Empirical bootstrap of the statistic ``x`` of the best (min-error) model.

    Each repeat resamples ceil(frac * n) pairs with replacement and keeps the x of
    the lowest-error pair. Pairs are sorted by (x, e) first so the result does not
    depend on input order.
    """
    arr = np.asarray(sorted((float(x), float(e)) for x, e in pairs))
    n = len(arr)
    if n < 2:
        raise ValueError("bootstrap needs at least two pairs")
    m = max(1, math.ceil(frac * n))
    rng = np.random.default_rng(seed)
    best = np.empty(reps)
    x, e = arr[:, 0], arr[:, 1]
    chunk = max(1, 2_000_000 // m)
    for start in range(0, reps, chunk):
        stop = min(reps, start + chunk)
        idx = rng.integers(0, n, size=(stop - start, m))
        # ties in error go to the lowest sorted position, i.e. the smallest x
        idx.sort(axis=1)
        pick = idx[np.arange(stop - start), np.argmin(e[idx], axis=1)]
        best[start:stop] = x[pick]
    tail = (1 - ci) / 2
    lo, hi = np.quantile(best, [tail, 1 - tail])
    return BootstrapResult(float(lo), float(hi), float(np.median(best)), reps, frac)


def expected_best(errors: Sequence[float], n: int) -> float:
    """Exact E[min of n errors drawn without replacement].

    The k-th smallest of N is the minimum with probability C(N-k, n-1) / C(N, n),
    evaluated by the ratio recurrence P(k+1) = P(k) * (N-k-n+1) / (N-k).
    """
    e = np.sort(np.asarray(errors, dtype=np.float64))
    big = len(e)
    if not 1 <= n <= big:
        raise ValueError(f"budget {n} outside [1, {big}]")
    p = n / big
    total = 0.0
    for k in range(1, big - n + 2):
        total += p * e[k - 1]
        p *= (big - k - n + 1) / (big - k) if big > k else 0.0
    return float(total)


def random_search_efficiency(
    errors: Sequence[float],
    budgets: Sequence[int],
    trials: int = 10_000,
    seed: int = 0,
) -> dict[int, float]:
    """Monte Carlo E[best error] for random search with each budget.

    Every trial is one random ordering of the population; the best of the first
    n models is its running minimum, so estimates are non-increasing in n.
    """
    e = np.asarray(errors, dtype=np.float64)
    N = e.size
    budgets = [int(b) for b in budgets]
    for b in budgets:
        if not 1 <= b <= N:
            raise ValueError(f"budget {b} outside [1, {N}]")
    top = max(budgets)
    totals = np.zeros(top)
    chunk = max(1, 4_000_000 // N)
    done = 0
    for child in np.random.SeedSequence(seed).spawn(math.ceil(trials / chunk)):
        rng = np.random.default_rng(child)
        t = min(chunk, trials - done)
        order = np.argsort(rng.random((t, N)), axis=1)[:, :top]
        totals += np.minimum.accumulate(e[order], axis=1).sum(axis=0)
        done += t
    # averaging can round a hair below the true minimum; the full budget is exact
    means = np.maximum(totals / trials, e.min())
    if top == N:
        means[-1] = e.min()
    return {b: float(means[b - 1]) for b in budgets}


TREND_MODELS = ("linear", "sqrt", "linear+sqrt")


@dataclass(frozen=True)
class TrendFit:
    model: str
    coefficients: dict
    residual: float
    n_points: int

    def predict(self, flops):
        f = np.asarray(flops, dtype=np.float64)
        return (
            self.coefficients.get("a", 0.0) * f
            + self.coefficients.get("b", 0.0) * np.sqrt(f)
            + self.coefficients.get("c", 0.0)
        )


def frontier(
    flops: Sequence[float], errors: Sequence[float], per_decade: int = 8
) -> np.ndarray:
    """Indices of the lowest-error sample in each log-spaced flop bin."""
    f = np.asarray(flops, dtype=np.float64)
    e = np.asarray(errors, dtype=np.float64)
    bins = np.floor(np.log10(f) * per_decade).astype(int)
    out = []
    for b in np.unique(bins):
        members = np.flatnonzero(bins == b)
        out.append(members[np.argmin(e[members])])
    return np.asarray(out, dtype=int)


def trend_fit(
    flops: Sequence[float],
    y: Sequence[float],
    model: str = "linear",
    intercept: bool = False,
    frontier_errors: Optional[Sequence[float]] = None,
) -> TrendFit:
    """Least squares of y against a*f, b*sqrt(f) and optionally c.

    Passing ``frontier_errors`` restricts the fit to the best sample per flop bin.
    """
    if model not in TREND_MODELS:
        raise ValueError(f"unknown trend model {model!r}")
    f = np.asarray(flops, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if frontier_errors is not None:
        keep = frontier(f, frontier_errors)
        f, yv = f[keep], yv[keep]
    names, cols = [], []
    if model in ("linear", "linear+sqrt"):
        names.append("a")
        cols.append(f)
    if model in ("sqrt", "linear+sqrt"):
        names.append("b")
        cols.append(np.sqrt(f))
    if intercept:
        names.append("c")
        cols.append(np.ones_like(f))
    A = np.stack(cols, axis=1)
    if len(f) < A.shape[1]:
        raise np.linalg.LinAlgError(f"{len(f)} points cannot fit {A.shape[1]} coefficients")
    scale = np.abs(A).max(axis=0)
    scale[scale == 0] = 1.0
    coef, _, rank, _ = np.linalg.lstsq(A / scale, yv, rcond=None)
    if rank < A.shape[1]:
        raise np.linalg.LinAlgError("trend fit is rank deficient")
    coef = coef / scale
    resid = yv - A @ coef
    return TrendFit(
        model,
        {k: float(v) for k, v in zip(names, coef)},
        float(np.sqrt(np.mean(resid**2))),
        len(f),
    )


def flop_bins(lo: float, hi: float, n: int) -> list[tuple[float, float]]:
    edges = np.geomspace(lo, hi, n + 1)
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


def param_trends(
    samples: Sequence,
    extract: Callable,
    bins: Sequence[tuple[float, float]],
    frac: float = 0.25,
    reps: int = 10_000,
    seed: int = 0,
) -> list[tuple[tuple[float, float], BootstrapResult]]:
    """Bootstrap the best value of ``extract(sample)`` within each flop bin.

    ``samples`` need ``.flops`` and ``.error``; bins are closed on the last edge.
    """
    out = []
    for k, (lo, hi) in enumerate(bins):
        last = k == len(bins) - 1
        members = [
            s for s in samples if lo <= s.flops < hi or (last and s.flops == hi)
        ]
        if len(members) < 2:
            raise ValueError(f"flop bin [{lo:.3g}, {hi:.3g}] has {len(members)} samples")
        pairs = [(extract(s), s.error) for s in members]
        out.append(((lo, hi), bootstrap_best(pairs, frac, reps, ci=0.95, seed=seed + k)))
    return out


def dominance(
    edfs: Sequence[EDF], grid: Optional[np.ndarray] = None, central: float = 0.9
) -> list[bool]:
    """For consecutive pairs (better, worse): is F_better >= F_worse on the central range?

    The range is the central ``central`` fraction of the pooled errors.
    """
    pooled = np.concatenate([d.errors for d in edfs])
    tail = (1 - central) / 2
    lo, hi = np.quantile(pooled, [tail, 1 - tail])
    if grid is None:
        grid = np.linspace(lo, hi, 201)
    return [bool(np.all(a(grid) >= b(grid))) for a, b in zip(edfs[:-1], edfs[1:])]
