"""Acceptance criteria, one check per criterion.

Each ``criterion_N`` returns ``(ok, detail)``. Under pytest every criterion logs a
``CRITERION N: PASS|FAIL`` line shown in the terminal summary; running this file
directly prints the same lines.
"""

import csv
import io
import math
import random
import sys
import tempfile
import time
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np

from netspaces.cli import main as cli_main
from netspaces.complexity import network_metrics, resnet_spec
from netspaces.evalstore import apply_surrogate, loads_population, make_sample, new_population
from netspaces.netspec import RegNetParams, check_constraints
from netspaces.popstats import bootstrap_best, edf, random_search_efficiency
from netspaces.quantlin import DEFAULT_GRID, fit_linear, gen_block_widths, to_stages
from netspaces.sampler import (
    SamplerConfig,
    design_space_size,
    get_design_space,
    sample_population,
)

WINDOW = "360e6:400e6"


def _timed(limit):
    def wrap(fn):
        def run(*a, **kw):
            t0 = time.perf_counter()
            ok, detail = fn(*a, **kw)
            dt = time.perf_counter() - t0
            if dt >= limit:
                ok, detail = False, f"{detail}; took {dt:.1f}s (limit {limit}s)"
            else:
                detail = f"{detail}; {dt:.2f}s"
            return ok, detail

        run.__name__ = fn.__name__
        return run

    return wrap


# -- 1 ------------------------------------------------------------------------


def hand_count_resnet50():
    """(params, flops, acts) by listing every conv of ResNet-50 by hand."""
    layers = [(7, 3, 64, 112)]  # kernel, c_in, c_out, output resolution
    c_in, r = 64, 56
    for i, d in enumerate((3, 4, 6, 3)):
        mid, out = 64 * 2**i, 256 * 2**i
        for j in range(d):
            r_out = r // 2 if i > 0 and j == 0 else r
            layers += [(1, c_in, mid, r), (3, mid, mid, r_out), (1, mid, out, r_out)]
            if j == 0:
                layers.append((1, c_in, out, r_out))
            c_in, r = out, r_out
    params = sum(k * k * a * b for k, a, b, _ in layers) + 2048 * 1000
    flops = sum(k * k * a * b * ro * ro for k, a, b, ro in layers) + 2048 * 1000
    acts = sum(b * ro * ro for _, _, b, ro in layers)
    return params, flops, acts


@_timed(1.0)
def criterion_1():
    m = network_metrics(resnet_spec())
    params, _, _ = hand_count_resnet50()
    df = abs(m.flops / 4.1e9 - 1)
    da = abs(m.acts / 11.1e6 - 1)
    ok = df <= 0.02 and da <= 0.02 and m.params == params
    return ok, (
        f"flops {m.flops / 1e9:.3f}G ({df:.1%} off 4.1G), acts {m.acts / 1e6:.2f}M "
        f"({da:.1%} off 11.1M), params {m.params} vs hand count {params}"
    )


# -- 2 ------------------------------------------------------------------------

EXPECTED_SIZES = {
    "anynetx-a": (1.8e18, (16 * 128 * 3 * 6) ** 4),
    "anynetx-b": (6.8e16, (16 * 128 * 6) ** 4 * 3),
    "anynetx-c": (3.2e14, (16 * 128) ** 4 * 3 * 6),
    "anynetx-d": (1.3e13, (16 * 128) ** 4 * 3 * 6 / math.factorial(4)),
    "anynetx-e": (5.5e11, (16 * 128) ** 4 * 3 * 6 / math.factorial(4) ** 2),
    "regnetx": (3.0e8, 64**4 * 6 * 3),
}


@_timed(1.0)
def criterion_2():
    bad = []
    for name, (target, formula) in EXPECTED_SIZES.items():
        got = design_space_size(get_design_space(name))
        if not math.isclose(got, formula, rel_tol=1e-12):
            bad.append(f"{name} {got:.3g} != formula {formula:.3g}")
        elif abs(got / target - 1) > 0.02:
            bad.append(f"{name} {got:.4g} is {got / target - 1:+.1%} off target {target:.2g}")
    return not bad, "all six sizes within 2%" if not bad else "; ".join(bad)


# -- 3 ------------------------------------------------------------------------


@_timed(30.0)
def criterion_3(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    failures = 0
    done = 0
    while done < n:
        p = RegNetParams(
            d=int(rng.integers(4, 33)),
            w0=float(rng.choice(DEFAULT_GRID.w0)),
            wa=float(rng.choice(DEFAULT_GRID.wa)),
            wm=float(rng.choice(DEFAULT_GRID.wm)),
        )
        prof = gen_block_widths(p.d, p.w0, p.wa, p.wm)
        stages = to_stages(prof)
        if stages is None:
            continue
        fit = fit_linear(prof.w)
        again = gen_block_widths(p.d, fit.w0, fit.wa, fit.wm)
        if fit.e_fit != 0.0 or again.w != prof.w or to_stages(again) != stages:
            failures += 1
        done += 1
    return failures == 0, f"{n} generators, {failures} failed to round-trip"


# -- 4 ------------------------------------------------------------------------


def brute_widths(d, w0, wa, wm):
    """Widths by scanning integer exponents for the closest power in log space."""
    out = []
    for j in range(d):
        u = w0 + wa * j
        s = math.log(u / w0) / math.log(wm)
        k = min(range(0, 64), key=lambda k: (abs(s - k), -k))
        out.append(w0 * wm**k)
    return out


@_timed(1.0)
def criterion_4():
    cases = [((4, 48, 48, 2.0), [48, 96, 192, 192]), ((3, 24, 36, 2.5), [24, 60, 150])]
    bad = []
    for args, want in cases:
        got = list(gen_block_widths(*args).w)
        brute = brute_widths(*args)
        if not (np.allclose(got, want, rtol=1e-12) and np.allclose(brute, want, rtol=1e-12)):
            bad.append(f"{args}: got {got}, brute {brute}, want {want}")
    return not bad, "both hand cases match" if not bad else "; ".join(bad)


# -- 5 ------------------------------------------------------------------------


@_timed(10.0)
def criterion_5(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    bad = 0
    for _ in range(n):
        size = int(rng.integers(1, 200))
        e = rng.uniform(0.2, 0.8, size)
        if rng.random() < 0.3:  # force ties
            e = np.round(e, 2)
        f = edf(e)
        grid = np.sort(np.concatenate([e, rng.uniform(0.1, 0.9, 50)]))
        vals = f(grid)
        eps = 1e-9
        if np.any(np.diff(vals) < 0) or f(e.min()) != 0 or f(e.max() + eps) != 1:
            bad += 1
            continue
        xs, after = f.steps()
        integral = float(np.sum(np.diff(xs) * (1 - after[:-1])))
        worst = max(worst, abs(e.mean() - (e.min() + integral)))
    ok = bad == 0 and worst <= 1e-9
    return ok, f"{n} vectors, {bad} shape failures, max identity gap {worst:.2e}"


# -- 6 ------------------------------------------------------------------------


def brute_bootstrap(pairs, reps=10_000, frac=0.25, seed=0):
    rnd = random.Random(seed)
    m = math.ceil(frac * len(pairs))
    best = []
    for _ in range(reps):
        draw = [pairs[rnd.randrange(len(pairs))] for _ in range(m)]
        best.append(min(draw, key=lambda p: (p[1], p[0]))[0])
    return np.quantile(best, [0.025, 0.975])


@_timed(20.0)
def criterion_6():
    notes = []
    ok = True
    point = bootstrap_best([(5.0, 0.3 + 0.001 * i) for i in range(40)])
    if not point.ci_low == point.ci_high == 5.0:
        ok = False
    notes.append(f"degenerate CI [{point.ci_low:g}, {point.ci_high:g}]")
    x = np.arange(1, 101, dtype=float)
    pairs = list(zip(x, 0.3 + 0.001 * x))
    r = bootstrap_best(pairs)
    lo, hi = brute_bootstrap(pairs)
    if abs(r.ci_low - lo) > 1 or abs(r.ci_high - hi) > 1:
        ok = False
    notes.append(f"CI [{r.ci_low:g}, {r.ci_high:g}] vs brute force [{lo:g}, {hi:g}]")
    p10 = float(np.percentile(x, 10))
    if r.ci_high > p10:
        ok = False
        notes.append(f"upper bound {r.ci_high:g} exceeds 10th percentile {p10:g}")
    return ok, "; ".join(notes)


# -- 7 ------------------------------------------------------------------------


@_timed(60.0)
def criterion_7(workdir):
    ds = get_design_space("anynetx-e")
    out = Path(workdir) / "e.jsonl"
    blobs = {}
    for w in (1, 4, 8):
        args = ["sample", "--space", "anynetx-e", "--n", "500", "--flops", WINDOW]
        code = cli_main(args + ["--seed", "11", "--workers", str(w), "--out", str(out)])
        if code != 0:
            return False, f"sample with {w} workers exited {code}"
        blobs[w] = out.read_bytes()
    identical = blobs[1] == blobs[4] == blobs[8]
    pop = loads_population(blobs[1].decode())
    outside = sum(not 360e6 <= s.flops <= 400e6 for s in pop.samples)
    failing = sum(not check_constraints(s.spec, ds).passed for s in pop.samples)
    ok = identical and outside == 0 and failing == 0 and len(pop.samples) == 500
    return ok, (
        f"{len(pop.samples)} samples, {outside} outside window, {failing} failing A-E predicates, "
        f"1/4/8 workers identical={identical}"
    )


# -- 8 ------------------------------------------------------------------------


@_timed(60.0)
def criterion_8(n=10_000):
    ds = get_design_space("regnetx-constrained")
    drawn = sample_population(SamplerConfig(ds, population_size=n, master_seed=5))
    bad = sum(
        not (p.b == 1 and p.wm >= 2 and 12 <= p.d <= 28 and all(s.b == 1 for s in spec.stages))
        for p, spec in drawn
    )
    return bad == 0 and len(drawn) == n, f"{len(drawn)} samples, {bad} violations"


# -- 9 ------------------------------------------------------------------------


@_timed(20.0)
def criterion_9(trials=10_000):
    ds = get_design_space("anynetx-e")
    drawn = sample_population(SamplerConfig(ds, population_size=200, master_seed=2))
    pop = new_population([make_sample(i, s, p) for i, (p, s) in enumerate(drawn)], ds.name)
    errs = np.asarray(apply_surrogate(pop, noise_seed=1).errors())
    N = errs.size
    budgets = list(range(1, N + 1))
    eff = random_search_efficiency(errs, budgets, trials=trials, seed=0)
    curve = [eff[b] for b in budgets]
    monotone = all(b <= a for a, b in zip(curve, curve[1:]))
    exact_min = eff[N] == errs.min()
    uni = np.arange(1, 2001) / 2001
    trials_u = 20_000
    got = random_search_efficiency(uni, [32], trials=trials_u, seed=1)[32]
    # standard error from the spread of the min of 32 uniforms
    se = math.sqrt(32 / (33**2 * 34)) / math.sqrt(trials_u)
    close = abs(got - 1 / 33) <= 2 * se
    ok = monotone and exact_min and close
    return ok, (
        f"monotone={monotone}, budget N gives min={exact_min}, "
        f"E[min of 32]={got:.5f} vs 1/33={1 / 33:.5f} (2 SE = {2 * se:.5f})"
    )


# -- 10 -----------------------------------------------------------------------


@_timed(120.0)
def criterion_10(workdir):
    work = Path(workdir)
    paths = {}
    for k, name in enumerate(("regnetx", "anynetx-e", "anynetx-a")):
        p = work / f"{name}.jsonl"
        code = cli_main(["sample", "--space", name, "--n", "500", "--flops", WINDOW, "--seed", str(k), "--out", str(p)])
        if code == 0:
            code = cli_main(["surrogate", str(p), "--seed", "0"])
        if code != 0:
            return False, f"{name} pipeline exited {code}"
        paths[name] = p
    out = work / "compare"
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = cli_main(
            ["analyze", str(paths["regnetx"]), "--compare", str(paths["anynetx-e"]), str(paths["anynetx-a"]), "--out", str(out)]
        )
    if code != 0:
        return False, f"analyze exited {code}"
    rows = list(csv.DictReader(l for l in (out / "dominance.csv").read_text().splitlines() if not l.startswith("#")))
    dom = {(r["better"], r["worse"]): r["dominates"] == "True" for r in rows}
    need = [("regnetx", "anynetx-e"), ("anynetx-e", "anynetx-a")]
    ok = all(dom.get(pair, False) for pair in need)
    ordering = next(l for l in buf.getvalue().splitlines() if l.startswith("ordering:"))
    return ok, ordering


# -- pytest -------------------------------------------------------------------


def _record(log, n, result):
    ok, detail = result
    log.append(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def test_criterion_1_resnet50_complexity(acceptance_log):
    _record(acceptance_log, 1, criterion_1())


def test_criterion_2_design_space_sizes(acceptance_log):
    _record(acceptance_log, 2, criterion_2())


def test_criterion_3_quantized_linear_roundtrip(acceptance_log):
    _record(acceptance_log, 3, criterion_3())


def test_criterion_4_width_hand_cases(acceptance_log):
    _record(acceptance_log, 4, criterion_4())


def test_criterion_5_edf_properties(acceptance_log):
    _record(acceptance_log, 5, criterion_5())


def test_criterion_6_bootstrap(acceptance_log):
    _record(acceptance_log, 6, criterion_6())


def test_criterion_7_sampler_contracts(acceptance_log, tmp_path):
    _record(acceptance_log, 7, criterion_7(tmp_path))


def test_criterion_8_constrained_regnet(acceptance_log):
    _record(acceptance_log, 8, criterion_8())


def test_criterion_9_random_search(acceptance_log):
    _record(acceptance_log, 9, criterion_9())


def test_criterion_10_end_to_end(acceptance_log, tmp_path):
    _record(acceptance_log, 10, criterion_10(tmp_path))


def main() -> int:
    failed = 0
    with tempfile.TemporaryDirectory() as tmp:
        checks = [
            criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            lambda: criterion_7(Path(tmp) / "c7"), criterion_8, criterion_9,
            lambda: criterion_10(Path(tmp) / "c10"),
        ]
        for n, check in enumerate(checks, 1):
            if n in (7, 10):
                (Path(tmp) / f"c{n}").mkdir()
            ok, detail = check()
            failed += not ok
            print(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
