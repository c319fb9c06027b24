import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netspaces.complexity import network_metrics
from netspaces.netspec import DesignSpaceDef, check_constraints, validate
from netspaces.quantlin import regnet_to_spec
from netspaces.sampler import (
    DESIGN_SPACES,
    InfeasibleDesignSpace,
    SamplerConfig,
    check_feasible,
    derive_seed,
    design_space_size,
    get_design_space,
    load_design_space,
    log_uniform_pmf,
    regnet_domains,
    sample_anynet,
    sample_nondecreasing,
    sample_population,
    sample_regnet,
    splitmix64,
)

WINDOW = (360e6, 400e6)


def test_splitmix64_reference_value():
    # first output of the reference SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_derive_seed_is_index_sensitive():
    seeds = {derive_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(7, 3) == derive_seed(7, 3)
    assert derive_seed(7, 3) != derive_seed(8, 3)


def test_log_uniform_pmf_matches_snapped_draws():
    values = [1, 2, 3, 5, 8, 13]
    pmf = log_uniform_pmf(values)
    rng = np.random.default_rng(0)
    x = np.exp(rng.uniform(math.log(1), math.log(13), 200_000))
    snapped = np.array([min(values, key=lambda v: (abs(v - xi), v)) for xi in x[:20_000]])
    freq = np.array([(snapped == v).mean() for v in values])
    assert np.abs(freq - pmf).max() < 0.015
    assert pmf.sum() == pytest.approx(1.0)


def test_sample_nondecreasing_matches_rejection():
    values = [1, 2, 3, 4]
    p = np.array([0.4, 0.3, 0.2, 0.1])
    rng = np.random.default_rng(1)
    draws = [tuple(sample_nondecreasing(rng, values, p, 3)) for _ in range(20_000)]
    assert all(a <= b <= c for a, b, c in draws)
    # exact conditional probability of (1,1,1)
    total = sum(
        p[i] * p[j] * p[k] for i in range(4) for j in range(i, 4) for k in range(j, 4)
    )
    expected = p[0] ** 3 / total
    got = draws.count((1, 1, 1)) / len(draws)
    assert got == pytest.approx(expected, abs=4 * math.sqrt(expected * (1 - expected) / len(draws)))


@given(st.integers(0, 2**63 - 1))
def test_anynetxa_within_domains(seed):
    spec = sample_anynet(get_design_space("anynetx-a"), seed)
    assert validate(spec) == []
    assert len(spec.stages) == 4


@given(st.integers(0, 2**63 - 1))
def test_anynetxb_shares_b(seed):
    spec = sample_anynet(get_design_space("anynetx-b"), seed)
    assert len(set(spec.bottlenecks)) == 1


@given(st.sampled_from(sorted(DESIGN_SPACES)), st.integers(0, 2**32))
def test_sampling_is_deterministic(name, seed):
    ds = get_design_space(name)
    if ds.kind == "anynet":
        assert sample_anynet(ds, seed) == sample_anynet(ds, seed)
    else:
        assert sample_regnet(ds, seed) == sample_regnet(ds, seed)


@given(st.sampled_from(sorted(DESIGN_SPACES)), st.integers(0, 2**32))
def test_subset_property(name, seed):
    ds = get_design_space(name)
    params, spec = (None, sample_anynet(ds, seed)) if ds.kind == "anynet" else sample_regnet(ds, seed)
    cons = ds.constraints
    for k in range(len(cons) + 1):
        assert check_constraints(spec, ds, params, cons[:k]).passed
        assert check_constraints(spec, ds, params, cons[k:]).passed


@given(st.integers(0, 2**32))
def test_regnet_spec_reproducible_from_params(seed):
    ds = get_design_space("regnetx")
    params, spec = sample_regnet(ds, seed)
    assert regnet_to_spec(params) == spec
    assert params.d == spec.depth
    assert 1.5 <= params.wm <= 3 and params.d < 64 and 0 < params.w0 < 256 and 0 < params.wa < 256


@given(st.integers(0, 2**32))
def test_constrained_d40(seed):
    params, spec = sample_regnet(get_design_space("regnetx-constrained-d40"), seed)
    assert set(spec.bottlenecks) == {1} and params.b == 1
    assert spec.depth <= 40
    assert params.wm >= 2


@given(st.integers(0, 2**32))
def test_depth_window(seed):
    _, spec = sample_regnet(get_design_space("regnetx-constrained"), seed)
    assert 12 <= spec.depth <= 28


@given(st.integers(0, 2**32))
def test_constrained_caps(seed):
    ds = get_design_space("regnety-constrained")
    _, spec = sample_regnet(ds, seed)
    cx = network_metrics(spec)
    assert cx.params <= ds.param_cap * cx.flops
    assert cx.acts <= ds.act_cap * math.sqrt(cx.flops)


@given(st.integers(0, 2**32))
def test_constrained_never_accepts_what_base_rejects(seed):
    params, spec = sample_regnet(get_design_space("regnetx-constrained"), seed)
    base = get_design_space("regnetx")
    assert validate(spec, base.limits()) == []
    assert check_constraints(spec, base, params).passed


def test_wrong_kind_rejected():
    with pytest.raises(ValueError):
        sample_anynet(get_design_space("regnetx"), 0)
    with pytest.raises(ValueError):
        sample_regnet(get_design_space("anynetx-a"), 0)


def test_population_window_and_ordering():
    cfg = SamplerConfig(get_design_space("anynetx-e"), WINDOW, 100, master_seed=5)
    pop = sample_population(cfg)
    assert len(pop) == 100
    for _, spec in pop:
        assert WINDOW[0] <= network_metrics(spec).flops <= WINDOW[1]
        assert list(spec.widths) == sorted(spec.widths)
        assert list(spec.depths) == sorted(spec.depths)


def test_population_prefix_stability():
    ds = get_design_space("anynetx-c")
    small = sample_population(SamplerConfig(ds, WINDOW, 10, master_seed=3))
    big = sample_population(SamplerConfig(ds, WINDOW, 20, master_seed=3))
    assert big[:10] == small


def test_population_worker_independence():
    cfg = SamplerConfig(get_design_space("regnetx"), WINDOW, 24, master_seed=11)
    serial = sample_population(cfg)
    assert sample_population(SamplerConfig(cfg.design_space, WINDOW, 24, 11, workers=3)) == serial


def test_group_width_frequencies():
    ds = get_design_space("regnetx")
    pop = sample_population(SamplerConfig(ds, None, 10_000, master_seed=2))
    n = len(pop)
    counts = {g: 0 for g in ds.group_widths}
    for params, _ in pop:
        counts[params.g] += 1
    sigma = math.sqrt(n * (1 / 6) * (5 / 6))
    for c in counts.values():
        assert abs(c - n / 6) <= 3 * sigma


def test_infeasible_window():
    cfg = SamplerConfig(get_design_space("anynetx-a"), (1, 2), 5)
    with pytest.raises(InfeasibleDesignSpace):
        sample_population(cfg)
    with pytest.raises(InfeasibleDesignSpace):
        check_feasible(SamplerConfig(get_design_space("anynetx-a"), (1e13, 2e13), 5))


def test_attempt_exhaustion_is_infeasible():
    ds = get_design_space("regnetx", max_attempts=3)
    with pytest.raises(InfeasibleDesignSpace):
        sample_population(SamplerConfig(ds, (4.0e8, 4.0001e8), 1))


@pytest.mark.parametrize("bad", [dict(population_size=0), dict(flop_window=(5, 5))])
def test_sampler_config_invariants(bad):
    with pytest.raises(ValueError):
        SamplerConfig(get_design_space("anynetx-a"), **bad)


@pytest.mark.parametrize(
    "name, formula",
    [
        ("anynetx-a", (16 * 128 * 3 * 6) ** 4),
        ("anynetx-b", (16 * 128 * 6) ** 4 * 3),
        ("anynetx-c", (16 * 128) ** 4 * 3 * 6),
        ("anynetx-d", (16 * 128) ** 4 * 3 * 6 / math.factorial(4)),
        ("anynetx-e", (16 * 128) ** 4 * 3 * 6 / math.factorial(4) ** 2),
        ("regnetx", 64**4 * 6 * 3),
    ],
)
def test_design_space_size_formulas(name, formula):
    assert design_space_size(get_design_space(name)) == pytest.approx(formula, rel=1e-12)


def test_regnet_domains_respect_constraints():
    dom = regnet_domains(get_design_space("regnetx-constrained"))
    assert dom["d"] == list(range(12, 29))
    assert min(dom["wm"]) == 2.0 and max(dom["wm"]) == 3.0
    assert dom["b"] == [1]


def test_load_design_space(tmp_path):
    p = tmp_path / "space.yaml"
    p.write_text("base: anynetx-e\nname: e-wide\nwidth: [16, 2048]\nsampler:\n  population_size: 3\n")
    ds = load_design_space(p)
    assert ds.name == "e-wide" and ds.width == (16, 2048)
    assert ds.constraints == get_design_space("anynetx-e").constraints
    q = tmp_path / "space.json"
    q.write_text(json.dumps(get_design_space("regnetx").to_dict()))
    assert load_design_space(q) == get_design_space("regnetx")
    with pytest.raises(ValueError):
        DesignSpaceDef.from_dict({"name": "x", "bogus": 1})
