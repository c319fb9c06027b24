"""Quantized linear block widths and the grid-search fit that measures e_fit.

Widths grow linearly, ``u_j = w0 + wa * j``, then snap to the geometric ladder
``w0 * wm**k`` by rounding the exponent ``s_j = log_wm(u_j / w0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from netspaces.netspec import AnyNetSpec, RegNetParams, StageSpec, compat_spec


@dataclass(frozen=True)
class BlockWidthProfile:
    u: tuple[float, ...]
    s: tuple[float, ...]
    w: tuple[float, ...]

    @property
    def exponents(self) -> tuple[int, ...]:
        return tuple(int(k) for k in _round_half_away(np.asarray(self.s)))


@dataclass(frozen=True)
class LinearFit:
    w0: float
    wa: float
    wm: float
    e_fit: float


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _quantized(w0, wa, wm, j):
    """Broadcasting core shared by the generator and the fit, so both see identical floats."""
    u = w0 + wa * j
    s = np.log(u / w0) / np.log(wm)
    k = _round_half_away(s)
    return u, s, w0 * np.power(wm, k)


def gen_block_widths(d: int, w0: float, wa: float, wm: float) -> BlockWidthProfile:
    if d < 1:
        raise ValueError("depth must be at least 1")
    if w0 <= 0 or wa < 0:
        raise ValueError("need w0 > 0 and wa >= 0")
    if wm <= 1:
        raise ValueError("width multiplier must exceed 1")
    j = np.arange(d, dtype=np.float64)
    u, s, w = _quantized(np.float64(w0), np.float64(wa), np.float64(wm), j)
    return BlockWidthProfile(tuple(u.tolist()), tuple(s.tolist()), tuple(w.tolist()))


def _round_to(x: float, q: int) -> int:
    # nearest multiple of q, halves upward
    return math.floor(x / q + 0.5) * q


def to_stages(
    widths: BlockWidthProfile | Sequence[float],
    round_to: int = 8,
    num_stages: Optional[int] = 4,
) -> Optional[list[tuple[int, int]]]:
    """Collapse per-block widths into ``(width, depth)`` stages.

    Widths are rounded to multiples of ``round_to`` first; runs that become equal
    merge. Returns None when ``num_stages`` is set and the stage count differs.
    """
    w = widths.w if isinstance(widths, BlockWidthProfile) else widths
    stages: list[list[int]] = []
    for x in w:
        x = _round_to(x, round_to) if round_to > 1 else int(round(x))
        if stages and stages[-1][0] == x:
            stages[-1][1] += 1
        else:
            stages.append([x, 1])
    if num_stages is not None and len(stages) != num_stages:
        return None
    return [(a, b) for a, b in stages]


def regnet_to_spec(
    params: RegNetParams,
    num_stages: Optional[int] = 4,
    stem_width: int = 32,
    num_classes: int = 1000,
    round_to: int = 8,
) -> Optional[AnyNetSpec]:
    """Materialize a RegNet generator as a group-compatible AnyNetSpec (None if rejected)."""
    prof = gen_block_widths(params.d, params.w0, params.wa, params.wm)
    stages = to_stages(prof, round_to=round_to, num_stages=num_stages)
    if stages is None:
        return None
    spec = AnyNetSpec(
        params.block_type,
        tuple(StageSpec(d, w, params.b, params.g) for w, d in stages),
        resolution=params.resolution,
        stem_width=stem_width,
        num_classes=num_classes,
    )
    return compat_spec(spec)


def efit(candidate: tuple[float, float, float], observed: Sequence[float]) -> float:
    """Mean absolute log-ratio of predicted to observed per-block widths."""
    obs = np.asarray(observed, dtype=np.float64)
    if obs.size == 0 or np.any(obs <= 0):
        raise ValueError("observed widths must be non-empty and positive")
    w0, wa, wm = candidate
    pred = gen_block_widths(len(obs), w0, wa, wm).w
    return float(np.mean(np.abs(np.log(np.asarray(pred) / obs))))


@dataclass(frozen=True)
class FitGrid:
    """Candidate generators searched by :func:`fit_linear`.

    Iteration order is w0-major, then wa, then wm; ties go to the first minimum.
    """

    w0: tuple[float, ...]
    wa: tuple[float, ...]
    wm: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.w0) * len(self.wa) * len(self.wm)


def wa_grid() -> tuple[float, ...]:
    return tuple(float(x) for x in list(range(1, 32)) + list(range(32, 257, 4)))


def wm_grid(lo: float = 1.05, hi: float = 3.0, step: float = 0.05) -> tuple[float, ...]:
    n = int(round((hi - lo) / step))
    return tuple(round(lo + step * i, 2) for i in range(n + 1))


DEFAULT_GRID = FitGrid(
    w0=tuple(float(x) for x in range(8, 257, 8)),
    wa=wa_grid(),
    wm=wm_grid(),
)


def fit_linear(observed: Sequence[float], grid: FitGrid = DEFAULT_GRID) -> LinearFit:
    """Grid search over (w0, wa, wm) minimizing e_fit, with d fixed to len(observed)."""
    obs = tuple(float(x) for x in observed)
    if not obs:
        raise ValueError("observed widths must be non-empty")
    return _fit_cached(obs, grid)


@lru_cache(maxsize=4096)
def _fit_cached(obs: tuple[float, ...], grid: FitGrid) -> LinearFit:
    d = len(obs)
    log_o = np.log(np.asarray(obs))
    j = np.arange(d, dtype=np.float64)[:, None, None]
    wa = np.asarray(grid.wa)[None, :, None]
    log_wm = np.log(np.asarray(grid.wm))[None, None, :]
    w0s = np.asarray(grid.w0)
    # block 0 always predicts w0 and no block predicts below w0, which bounds
    # e_fit from below for a whole w0 slice
    gap = np.log(w0s)[:, None] - log_o[None, :]
    bound = (np.abs(gap[:, 0]) + np.clip(gap[:, 1:], 0, None).sum(axis=1)) / d
    best = np.inf
    scores = {}
    for i in np.argsort(bound, kind="stable"):
        if bound[i] > best + _TIE_TOL:
            break
        w0 = w0s[i]
        t = np.log((w0 + wa * j) / w0) / log_wm
        t += 0.5
        np.floor(t, out=t)
        t *= log_wm
        t += np.log(w0) - log_o[:, None, None]
        np.abs(t, out=t)
        err = t.mean(axis=0)
        scores[i] = err
        best = min(best, float(err.min()))
    # the log-space score can differ from the exact one by rounding error, so
    # re-score the near-minimal candidates exactly and keep the first minimum
    result = None
    for i in sorted(scores):
        for a, m in zip(*np.nonzero(scores[i] <= best + _TIE_TOL)):
            cand = (grid.w0[i], grid.wa[a], grid.wm[m])
            e = efit(cand, obs)
            if result is None or e < result.e_fit:
                result = LinearFit(*cand, e_fit=e)
    return result


_TIE_TOL = 1e-9


def spec_efit(spec: AnyNetSpec, grid: FitGrid = DEFAULT_GRID) -> LinearFit:
    return fit_linear(spec.block_widths(), grid)
