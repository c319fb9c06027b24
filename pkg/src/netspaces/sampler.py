"""Random sampling of model populations from design spaces.

Every parameter is drawn log-uniformly over its discrete domain: a uniform
exponent snapped to the nearest admissible value, which is equivalent to a
categorical draw with the cell probabilities from :func:`log_uniform_pmf`.
Ordering constraints (``increasing_w``, ``increasing_d``) are sampled exactly
from the base distribution restricted to non-decreasing tuples; every other
constraint and the flop window use whole-spec rejection.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache, partial
from typing import Optional, Sequence

import numpy as np

from netspaces.complexity import network_metrics, stem_metrics
from netspaces.netspec import (
    AnyNetSpec,
    DesignSpaceDef,
    RegNetParams,
    StageSpec,
    check_constraints,
    compat_spec,
    validate,
)
from netspaces.quantlin import regnet_to_spec, wa_grid

MASK64 = (1 << 64) - 1
REGNET_LEVELS = 64


class InfeasibleDesignSpace(RuntimeError):
    pass


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Child seed for sample ``index``: splitmix64(splitmix64(master) ^ index)."""
    return splitmix64(splitmix64(master_seed & MASK64) ^ (index & MASK64))


def log_uniform_pmf(values: Sequence[float]) -> np.ndarray:
    """Probability that exp(U[ln min, ln max]) snaps (nearest value) to each value."""
    v = np.asarray(sorted(values), dtype=np.float64)
    if len(v) == 1:
        return np.ones(1)
    edges = np.concatenate([[v[0]], (v[1:] + v[:-1]) / 2, [v[-1]]])
    p = np.diff(np.log(edges))
    return p / p.sum()


def _categorical(rng: np.random.Generator, cdf: np.ndarray, size=None):
    """Inverse-CDF draw of value indices."""
    u = rng.random(size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def sample_nondecreasing(
    rng: np.random.Generator, values: Sequence[float], probs: np.ndarray, n: int
) -> list:
    """Draw ``n`` i.i.d. values conditioned on being non-decreasing.

    ``mass[k][v]`` is the total probability of non-decreasing (k+1)-tuples ending
    at or below value index v; the tuple is then drawn back to front.
    """
    p = np.asarray(probs, dtype=np.float64)
    mass = [np.cumsum(p)]
    for _ in range(n - 1):
        mass.append(np.cumsum(p * mass[-1]))
    out = []
    hi = len(p)
    for k in range(n - 1, -1, -1):
        weight = p[:hi] * (mass[k - 1][:hi] if k > 0 else 1.0)
        i = int(rng.choice(hi, p=weight / weight.sum()))
        out.append(values[i])
        hi = i + 1
    return out[::-1]


def _grid(lo: float, hi: float, step: float) -> list:
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [lo + step * i for i in range(n + 1)]


@lru_cache(maxsize=64)
def _anynet_domains(dspace: DesignSpaceDef):
    depths = list(range(dspace.depth[0], dspace.depth[1] + 1))
    widths = [int(w) for w in _grid(dspace.width[0], dspace.width[1], dspace.width_step)]
    pd, pw = log_uniform_pmf(depths), log_uniform_pmf(widths)
    return (depths, pd, np.cumsum(pd)), (widths, pw, np.cumsum(pw))


def _draw_anynet(dspace: DesignSpaceDef, rng: np.random.Generator):
    n = dspace.num_stages
    cons = set(dspace.constraints)
    depths, widths = _anynet_domains(dspace)

    def pick(domain, ordered):
        values, pmf, cdf = domain
        if ordered:
            return sample_nondecreasing(rng, values, pmf, n)
        idx = _categorical(rng, cdf, n)
        return [values[i] for i in idx]

    def choose(values, shared):
        if shared:
            return [values[int(rng.integers(len(values)))]] * n
        return [values[int(i)] for i in rng.integers(len(values), size=n)]

    ds = pick(depths, "increasing_d" in cons)
    ws = pick(widths, "increasing_w" in cons)
    if dspace.b_fixed is not None:
        bs = [dspace.b_fixed] * n
    else:
        bs = choose(list(dspace.bottlenecks), "shared_b" in cons)
    gs = choose(list(dspace.group_widths), "shared_g" in cons)
    stages = tuple(StageSpec(int(d), int(w), b, int(g)) for d, w, b, g in zip(ds, ws, bs, gs))
    spec = AnyNetSpec(
        dspace.block_type,
        stages,
        resolution=dspace.resolution,
        stem_width=dspace.stem_width,
        num_classes=dspace.num_classes,
    )
    return None, compat_spec(spec)


@lru_cache(maxsize=64)
def regnet_domains(dspace: DesignSpaceDef) -> dict:
    """Discrete value sets the RegNet sampler draws from."""
    d_lo, d_hi = dspace.depth
    if dspace.depth_window is not None:
        d_lo, d_hi = max(d_lo, dspace.depth_window[0]), min(d_hi, dspace.depth_window[1])
    wm_lo = dspace.wm[0] if dspace.wm_floor is None else max(dspace.wm[0], dspace.wm_floor)
    wm = [round(x, 2) for x in _grid(1.05, 3.0, 0.05) if wm_lo - 1e-9 <= x <= dspace.wm[1] + 1e-9]
    out = {
        "d": list(range(d_lo, d_hi + 1)),
        "w0": [float(x) for x in range(8, 257, 8) if dspace.w0[0] <= x <= dspace.w0[1]],
        "wa": [x for x in wa_grid() if dspace.wa[0] <= x <= dspace.wa[1]],
        "wm": wm,
        "b": [dspace.b_fixed] if dspace.b_fixed is not None else list(dspace.bottlenecks),
        "g": list(dspace.group_widths),
    }
    for k in ("w0", "wa", "wm"):
        out[f"{k}_cdf"] = np.cumsum(log_uniform_pmf(out[k]))
    return out


def _draw_regnet(dspace: DesignSpaceDef, rng: np.random.Generator, domains: dict):
    # depth is uniform over integers; widths and the multiplier are log-uniform
    d = domains["d"][int(rng.integers(len(domains["d"])))]
    vals = {}
    for k in ("w0", "wa", "wm"):
        vals[k] = domains[k][int(_categorical(rng, domains[f"{k}_cdf"]))]
    b = domains["b"][int(rng.integers(len(domains["b"])))]
    g = domains["g"][int(rng.integers(len(domains["g"])))]
    params = RegNetParams(
        d=int(d),
        w0=vals["w0"],
        wa=vals["wa"],
        wm=vals["wm"],
        b=b,
        g=int(g),
        block_type=dspace.block_type,
        resolution=dspace.resolution,
    )
    spec = regnet_to_spec(
        params,
        num_stages=dspace.num_stages,
        stem_width=dspace.stem_width,
        num_classes=dspace.num_classes,
    )
    return params, spec


def _draw_until(
    dspace: DesignSpaceDef,
    rng: np.random.Generator,
    window: Optional[tuple[float, float]],
    max_attempts: int,
):
    limits = dspace.limits()
    domains = regnet_domains(dspace) if dspace.kind == "regnet" else None
    for _ in range(max_attempts):
        if dspace.kind == "regnet":
            params, spec = _draw_regnet(dspace, rng, domains)
        else:
            params, spec = _draw_anynet(dspace, rng)
        if spec is None or validate(spec, limits):
            continue
        if window is not None:
            flops = network_metrics(spec).flops
            if not window[0] <= flops <= window[1]:
                continue
        if not check_constraints(spec, dspace, params).passed:
            continue
        return params, spec
    raise InfeasibleDesignSpace(
        f"design space {dspace.name!r}: no admissible sample in {max_attempts} attempts"
    )


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_anynet(dspace: DesignSpaceDef, seed, window=None) -> AnyNetSpec:
    if dspace.kind != "anynet":
        raise ValueError(f"{dspace.name!r} is not an AnyNet design space")
    return _draw_until(dspace, _rng(seed), window, dspace.max_attempts)[1]


def sample_regnet(dspace: DesignSpaceDef, seed, window=None) -> tuple[RegNetParams, AnyNetSpec]:
    if dspace.kind != "regnet":
        raise ValueError(f"{dspace.name!r} is not a RegNet design space")
    return _draw_until(dspace, _rng(seed), window, dspace.max_attempts)


@dataclass(frozen=True)
class SamplerConfig:
    design_space: DesignSpaceDef
    flop_window: Optional[tuple[float, float]] = None
    population_size: int = 500
    master_seed: int = 0
    max_attempts_per_sample: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population size must be at least 1")
        w = self.window
        if w is not None and not w[0] < w[1]:
            raise ValueError(f"flop window {w} must satisfy lo < hi")

    @property
    def window(self) -> Optional[tuple[float, float]]:
        return self.flop_window if self.flop_window is not None else self.design_space.flop_window

    @property
    def attempts(self) -> int:
        if self.max_attempts_per_sample is not None:
            return self.max_attempts_per_sample
        return self.design_space.max_attempts

    def to_dict(self) -> dict:
        return {
            "design_space": self.design_space.to_dict(),
            "flop_window": list(self.window) if self.window is not None else None,
            "population_size": self.population_size,
            "master_seed": self.master_seed,
            "max_attempts_per_sample": self.attempts,
        }


def _sample_index(cfg: SamplerConfig, index: int):
    rng = np.random.default_rng(derive_seed(cfg.master_seed, index))
    return _draw_until(cfg.design_space, rng, cfg.window, cfg.attempts)


def check_feasible(cfg: SamplerConfig) -> None:
    """Cheap bounds that reject impossible flop windows before any sampling."""
    w = cfg.window
    if w is None:
        return
    ds = cfg.design_space
    probe = AnyNetSpec(
        ds.block_type,
        (StageSpec(1, 8, 1, 1),) * ds.num_stages,
        resolution=ds.resolution,
        stem_width=ds.stem_width,
        num_classes=ds.num_classes,
    )
    floor = stem_metrics(probe).flops + 8 * ds.num_classes
    if floor > w[1]:
        raise InfeasibleDesignSpace(
            f"flop window {w} is below the stem and head cost ({floor} flops)"
        )
    if ds.kind == "anynet":
        top = AnyNetSpec(
            ds.block_type,
            (StageSpec(ds.depth[1], ds.width[1], min(ds.bottlenecks), max(ds.group_widths)),)
            * ds.num_stages,
            resolution=ds.resolution,
            stem_width=ds.stem_width,
            num_classes=ds.num_classes,
        )
        ceiling = network_metrics(compat_spec(top)).flops
        if ceiling < w[0]:
            raise InfeasibleDesignSpace(
                f"flop window {w} is above the largest model ({ceiling} flops)"
            )


def sample_population(cfg: SamplerConfig) -> list[tuple[Optional[RegNetParams], AnyNetSpec]]:
    """Sample ``population_size`` models; sample i depends only on (master_seed, i)."""
    check_feasible(cfg)
    job = partial(_sample_index, cfg)
    indices = range(cfg.population_size)
    if cfg.workers <= 1:
        return [job(i) for i in indices]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(job, indices, chunksize=max(1, cfg.population_size // (4 * cfg.workers))))


def design_space_size(dspace: DesignSpaceDef) -> float:
    """Approximate number of configurations, following the design-space summary counts.

    AnyNet: per-stage (depths x widths x b x g) for each unshared parameter, shared
    parameters counted once, and a factor of 1/n! per ordering constraint. RegNet:
    continuous parameters quantized to 64 levels each, times the b and g choices.
    """
    cons = set(dspace.constraints)
    nb = 1 if dspace.b_fixed is not None else len(dspace.bottlenecks)
    ng = len(dspace.group_widths)
    if dspace.kind == "regnet":
        return float(REGNET_LEVELS**4 * nb * ng)
    n = dspace.num_stages
    nd = dspace.depth[1] - dspace.depth[0] + 1
    nw = len(_grid(dspace.width[0], dspace.width[1], dspace.width_step))
    per_stage = nd * nw
    shared = 1
    if "shared_b" in cons or dspace.b_fixed is not None:
        shared *= nb
    else:
        per_stage *= nb
    if "shared_g" in cons:
        shared *= ng
    else:
        per_stage *= ng
    size = float(per_stage) ** n * shared
    for c in ("increasing_w", "increasing_d"):
        if c in cons:
            size /= math.factorial(n)
    return size


ANYNET_CHAIN = ("shared_b", "shared_g", "increasing_w", "increasing_d")
REGNET_BASE = ("shared_b", "shared_g", "increasing_w", "regnet_linear")
REGNET_CONSTRAINED = REGNET_BASE + ("b_fixed", "depth_window", "wm_floor", "param_cap", "act_cap")

# Activation and parameter caps: acts <= 250*sqrt(flops), params <= 0.02*flops. These
# loosely envelope the published top RegNetX models (acts/sqrt(flops) <= ~203,
# params/flops <= ~0.0135).
DEFAULT_ACT_CAP = 250.0
DEFAULT_PARAM_CAP = 0.02


def _anynet(letter: str, k: int) -> DesignSpaceDef:
    return DesignSpaceDef(name=f"anynetx-{letter}", constraints=ANYNET_CHAIN[:k])


def _constrained(name, block_type, depth_window):
    return DesignSpaceDef(
        name=name,
        kind="regnet",
        block_type=block_type,
        constraints=REGNET_CONSTRAINED,
        depth=(1, 63),
        b_fixed=1,
        depth_window=depth_window,
        wm_floor=2.0,
        param_cap=DEFAULT_PARAM_CAP,
        act_cap=DEFAULT_ACT_CAP,
    )


DESIGN_SPACES = {
    d.name: d
    for d in [
        _anynet("a", 0),
        _anynet("b", 1),
        _anynet("c", 2),
        _anynet("d", 3),
        _anynet("e", 4),
        DesignSpaceDef(name="regnetx", kind="regnet", constraints=REGNET_BASE, depth=(1, 63)),
        DesignSpaceDef(
            name="regnety", kind="regnet", block_type="Y", constraints=REGNET_BASE, depth=(1, 63)
        ),
        _constrained("regnetx-constrained-d40", "X", (1, 40)),
        _constrained("regnetx-constrained", "X", (12, 28)),
        _constrained("regnety-constrained", "Y", (12, 28)),
    ]
}


def get_design_space(name: str, **overrides) -> DesignSpaceDef:
    try:
        base = DESIGN_SPACES[name]
    except KeyError:
        raise KeyError(f"unknown design space {name!r}; known: {sorted(DESIGN_SPACES)}") from None
    return replace(base, **overrides) if overrides else base


def read_config(path) -> dict:
    """Parse a JSON or YAML mapping (by file suffix)."""
    import json
    from pathlib import Path

    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        obj = yaml.safe_load(text)
    else:
        obj = json.loads(text)
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: expected a mapping")
    return obj


def design_space_from_mapping(obj: dict) -> DesignSpaceDef:
    """Keys mirror :class:`DesignSpaceDef`; an optional ``base`` names a built-in
    space whose fields the remaining keys override."""
    obj = dict(obj)
    base = obj.pop("base", None)
    if base is None:
        return DesignSpaceDef.from_dict(obj)
    merged = get_design_space(base).to_dict()
    merged.update(obj)
    return DesignSpaceDef.from_dict(merged)


def load_design_space(path) -> DesignSpaceDef:
    """Load a design space from a JSON or YAML file.

    Top-level ``sampler`` and ``surrogate`` sections, used by the command line,
    are ignored here.
    """
    obj = read_config(path)
    obj.pop("sampler", None)
    obj.pop("surrogate", None)
    return design_space_from_mapping(obj)
