"""Command line: sample, complexity, fit, analyze, best, size, export, surrogate, ingest.

Exit codes: 0 success, 2 configuration error, 3 infeasible design space or
flop window, 4 missing input, 5 invalid data (bad files, mixed error sources).
CSV outputs begin with a ``# manifest {...}`` comment line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from netspaces import __version__
from netspaces.complexity import (
    fmt_flops,
    network_metrics,
    resnet_spec,
    runtime_model,
)
from netspaces.evalstore import (
    MixedSourceError,
    Population,
    PopulationFormatError,
    RunManifest,
    SurrogateConfig,
    apply_surrogate,
    export_specs,
    ingest_errors,
    make_sample,
    new_population,
    read_error_records,
    read_population,
    require_single_source,
    write_population,
    dumps_population,
)
from netspaces.netspec import AnyNetSpec, RegNetParams
from netspaces.popstats import (
    EDF,
    BootstrapResult,
    bootstrap_best,
    dominance,
    edf,
    flop_bins,
    random_search_efficiency,
    trend_fit,
)
from netspaces.quantlin import fit_linear, gen_block_widths, regnet_to_spec
from netspaces.sampler import (
    DESIGN_SPACES,
    InfeasibleDesignSpace,
    SamplerConfig,
    design_space_from_mapping,
    design_space_size,
    get_design_space,
    read_config,
    sample_population,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_MISSING = 4
EXIT_DATA = 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


RESNETS = {
    "resnet50": dict(depths=(3, 4, 6, 3)),
    "resnet101": dict(depths=(3, 4, 23, 3)),
    "resnet152": dict(depths=(3, 8, 36, 3)),
    "resnext50": dict(depths=(3, 4, 6, 3), groups=32, bottleneck_width=4),
    "resnext101": dict(depths=(3, 4, 23, 3), groups=32, bottleneck_width=4),
}


def parse_window(text: str) -> tuple[float, float]:
    """``lo:hi`` in raw flops, scientific notation allowed."""
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"flop window must look like 360e6:400e6, got {text!r}")
    if not (math.isfinite(lo) and math.isfinite(hi) and 0 <= lo < hi):
        raise argparse.ArgumentTypeError(f"flop window needs 0 <= lo < hi, got {text!r}")
    return lo, hi


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


# -- io helpers ---------------------------------------------------------------


def _manifest(args, inputs=(), outputs=()) -> RunManifest:
    return RunManifest(
        command=args.command,
        config_path=args.config,
        master_seed=args.seed,
        inputs=tuple(str(p) for p in inputs),
        outputs=tuple(str(p) for p in outputs),
        tool_version=__version__,
    )


def _csv_text(manifest: RunManifest, header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write("# manifest " + json.dumps(manifest.to_dict(), separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else _cell(v) for v in r])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _emit(text: str, path: Optional[Path]) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _load_population(path) -> Population:
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_MISSING, f"population file not found: {p}")
    try:
        return read_population(p)
    except (PopulationFormatError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_DATA, f"{p}: {exc}")


def _config(args) -> dict:
    if not args.config:
        return {}
    p = Path(args.config)
    if not p.exists():
        raise CliError(EXIT_MISSING, f"config file not found: {p}")
    try:
        return read_config(p)
    except (ValueError, OSError) as exc:
        raise CliError(EXIT_CONFIG, f"{p}: {exc}")


def _design_space(args, cfg: dict):
    try:
        if args.space:
            ds = get_design_space(args.space)
            extra = {k: v for k, v in cfg.items() if k not in ("sampler", "surrogate", "base")}
            if extra:
                ds = design_space_from_mapping({**ds.to_dict(), **extra})
            return ds
        body = {k: v for k, v in cfg.items() if k not in ("sampler", "surrogate")}
        if not body:
            raise CliError(EXIT_CONFIG, "need --space or a --config defining a design space")
        return design_space_from_mapping(body)
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, str(exc).strip('"'))


# -- commands -----------------------------------------------------------------


def cmd_sample(args) -> int:
    cfg = _config(args)
    ds = _design_space(args, cfg)
    sec = dict(cfg.get("sampler", {}))
    window = args.flops
    if window is None and sec.get("flop_window"):
        try:
            window = tuple(float(x) for x in sec["flop_window"])
        except (TypeError, ValueError) as exc:
            raise CliError(EXIT_CONFIG, f"bad sampler.flop_window: {exc}")
    seed = args.seed if args.seed is not None else int(sec.get("master_seed", 0))
    n = args.n if args.n is not None else int(sec.get("population_size", 500))
    try:
        sc = SamplerConfig(
            ds,
            flop_window=window,
            population_size=n,
            master_seed=seed,
            max_attempts_per_sample=args.max_attempts or sec.get("max_attempts_per_sample"),
            workers=args.workers or int(sec.get("workers", 1)),
        )
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc))
    try:
        drawn = sample_population(sc)
    except InfeasibleDesignSpace as exc:
        raise CliError(EXIT_INFEASIBLE, f"infeasible: {exc}")
    samples = [make_sample(i, spec, params) for i, (params, spec) in enumerate(drawn)]
    args.seed = seed
    out = Path(args.out) if args.out else None
    pop = new_population(samples, ds.name, sc.to_dict(), seed, _manifest(args, outputs=[out or "-"]))
    _emit(dumps_population(pop), out)
    _log(f"sampled {n} models from {ds.name}" + (f" into {out}" if out else ""))
    return EXIT_OK


def _complexity_row(label, spec: AnyNetSpec, coeffs):
    cx = network_metrics(spec)
    rt = runtime_model(cx.flops, cx.acts, coeffs) if coeffs else None
    return [label, cx.flops, cx.params, cx.acts, rt]


def cmd_complexity(args) -> int:
    coeffs = args.runtime
    rows = []
    inputs = []
    if args.model:
        rows.append(_complexity_row(args.model, resnet_spec(**RESNETS[args.model]), coeffs))
    if args.regnet:
        try:
            kv = dict(item.split("=") for item in args.regnet.split(","))
            params = RegNetParams.from_dict({k.strip(): float(v) for k, v in kv.items()})
        except (ValueError, KeyError) as exc:
            raise CliError(EXIT_CONFIG, f"bad --regnet value: {exc}")
        spec = regnet_to_spec(params, num_stages=None)
        rows.append(_complexity_row(args.regnet, spec, coeffs))
    for path in args.inputs:
        p = Path(path)
        inputs.append(p)
        if not p.exists():
            raise CliError(EXIT_MISSING, f"input not found: {p}")
        first = p.read_text(encoding="utf-8").lstrip()[:200]
        if '"format"' in first.split("\n", 1)[0]:
            for s in _load_population(p).samples:
                rows.append(_complexity_row(s.spec_hash, s.spec, coeffs))
        else:
            try:
                spec = AnyNetSpec.from_dict(json.loads(p.read_text(encoding="utf-8")))
            except (ValueError, KeyError, TypeError) as exc:
                raise CliError(EXIT_DATA, f"{p}: not a spec file ({exc})")
            rows.append(_complexity_row(p.stem, spec, coeffs))
    if not rows:
        raise CliError(EXIT_MISSING, "nothing to measure: pass spec/population files, --model or --regnet")
    out = Path(args.out) if args.out else None
    header = ["model", "flops", "params", "acts", "runtime_est"]
    _emit(_csv_text(_manifest(args, inputs, [out or "-"]), header, rows), out)
    if out is not None:
        for r in rows:
            _log(f"{r[0]}: {fmt_flops(r[1])} {r[2] / 1e6:.2f}M params {r[3] / 1e6:.2f}M acts")
    return EXIT_OK


def _fit_profile(s, from_spec: bool) -> tuple[str, list[float]]:
    """Generator widths for RegNet samples (what the model was defined by), else the spec's."""
    if s.regnet_params is not None and not from_spec:
        p = s.regnet_params
        return "generator", list(gen_block_widths(p.d, p.w0, p.wa, p.wm).w)
    return "spec", s.spec.block_widths()


def cmd_fit(args) -> int:
    pop = _load_population(args.population)
    rows = []
    for s in pop.samples:
        profile, widths = _fit_profile(s, args.from_spec)
        fit = fit_linear(widths)
        rows.append([s.index, s.spec_hash, profile, fit.w0, fit.wa, fit.wm, fit.e_fit, s.error, s.source])
    out = Path(args.out) if args.out else None
    header = ["index", "spec_hash", "profile", "w0", "wa", "wm", "e_fit", "error", "source"]
    _emit(_csv_text(_manifest(args, [args.population], [out or "-"]), header, rows), out)
    pairs = [(r[6], r[7]) for r in rows if r[7] is not None]
    if len(pairs) >= 2:
        try:
            require_single_source(pop)
        except MixedSourceError as exc:
            raise CliError(EXIT_DATA, str(exc))
        bs = bootstrap_best(pairs, seed=args.seed or 0)
        _log(f"e_fit of best models: median {bs.median:.4f}, 95% CI [{bs.ci_low:.4f}, {bs.ci_high:.4f}]")
    return EXIT_OK


# parameters banded by the analyze command
def _extractors(pop: Population) -> dict[str, Callable]:
    ex: dict[str, Callable] = {
        "depth": lambda s: s.spec.depth,
        "b": lambda s: max(s.spec.bottlenecks),
        "g": lambda s: max(s.spec.group_widths),
    }
    n_stages = min(len(s.spec.stages) for s in pop.samples)
    for i in range(n_stages):
        ex[f"d{i + 1}"] = lambda s, i=i: s.spec.stages[i].d
        ex[f"w{i + 1}"] = lambda s, i=i: s.spec.stages[i].w
    if all(s.regnet_params is not None for s in pop.samples):
        for k in ("w0", "wa", "wm"):
            ex[k] = lambda s, k=k: getattr(s.regnet_params, k)
    return ex


def _bootstrap_one(pairs, reps, seed) -> BootstrapResult:
    if len(pairs) == 1:
        x = float(pairs[0][0])
        return BootstrapResult(x, x, x, reps, 0.25)
    return bootstrap_best(pairs, reps=reps, seed=seed)


def _edf_rows(name: str, f: EDF):
    x, after = f.steps()
    return [[name, float(e), float(f(e)), float(a)] for e, a in zip(x, after)]


def _budgets(n: int) -> list[int]:
    out = [1 << k for k in range(int(math.log2(n)) + 1)]
    return out if out[-1] == n else out + [n]


def _analyze_one(args, name: str, pop: Population, out_dir: Path, manifest: RunManifest):
    done = pop.complete()
    f = edf([s.error for s in done])
    _write(out_dir / "edf.csv", manifest, ["space", "error", "F", "F_after"], _edf_rows(name, f))
    _write(
        out_dir / "summary.csv",
        manifest,
        ["space", "source", "n", "pending", "min_error", "mean_error"],
        [[name, done[0].source, f.n, len(pop.pending()), f.min, f.mean]],
    )
    flops = [s.flops for s in done]
    lo, hi = min(flops), max(flops)
    bins = [(lo, hi)] if args.bins == 1 or lo == hi else flop_bins(lo, hi, args.bins)
    rows = []
    for pname, get in _extractors(Population(pop.header, done)).items():
        for k, (blo, bhi) in enumerate(bins):
            last = k == len(bins) - 1
            members = [s for s in done if blo <= s.flops < bhi or (last and s.flops == bhi)]
            if not members:
                continue
            r = _bootstrap_one([(get(s), s.error) for s in members], args.reps, (args.seed or 0) + k)
            rows.append([pname, blo, bhi, len(members), r.ci_low, r.median, r.ci_high])
    _write(
        out_dir / "bootstrap.csv",
        manifest,
        ["parameter", "flops_lo", "flops_hi", "n", "ci_low", "median", "ci_high"],
        rows,
    )
    rows = []
    errors = [s.error for s in done]
    for qty, model in (("params", "linear"), ("acts", "sqrt"), ("acts", "linear+sqrt")):
        y = [getattr(s.complexity, qty) for s in done]
        for front in (False, True):
            try:
                t = trend_fit(flops, y, model, frontier_errors=errors if front else None)
            except np.linalg.LinAlgError as exc:
                _log(f"skipping {qty} {model} trend: {exc}")
                continue
            c = t.coefficients
            rows.append([qty, model, front, c.get("a"), c.get("b"), c.get("c"), t.residual, t.n_points])
    _write(
        out_dir / "trends.csv",
        manifest,
        ["quantity", "model", "frontier", "a", "b", "c", "residual", "n"],
        rows,
    )
    eff = random_search_efficiency(errors, _budgets(len(errors)), trials=args.trials, seed=args.seed or 0)
    _write(out_dir / "efficiency.csv", manifest, ["budget", "expected_best_error"], list(map(list, eff.items())))
    if args.svg:
        (out_dir / "edf.svg").write_text(edf_svg({name: f}), encoding="utf-8")
    return f


def _write(path: Path, manifest: RunManifest, header, rows) -> None:
    _emit(_csv_text(manifest, header, rows), path)


def cmd_analyze(args) -> int:
    paths = [args.population] + list(args.compare or [])
    pops = [_load_population(p) for p in paths]
    names = _unique_names(pops, paths)
    sources = set()
    for name, pop in zip(names, pops):
        if not pop.complete():
            raise CliError(EXIT_MISSING, f"{name}: no samples with errors; run surrogate or ingest first")
        try:
            sources |= {require_single_source(pop, args.allow_mixed)}
        except MixedSourceError as exc:
            raise CliError(EXIT_DATA, f"{name}: {exc}")
    if len(sources) > 1 and not args.allow_mixed:
        raise CliError(EXIT_DATA, f"populations use different error sources {sorted(sources)}")
    out_root = Path(args.out or "analysis")
    manifest = _manifest(args, paths, [out_root])
    edfs = {}
    for name, pop in zip(names, pops):
        out_dir = out_root / name if len(pops) > 1 else out_root
        edfs[name] = _analyze_one(args, name, pop, out_dir, manifest)
    if len(pops) > 1:
        report = compare_report(edfs, manifest, out_root)
        sys.stdout.write(report)
        if args.svg:
            (out_root / "compare.svg").write_text(edf_svg(edfs), encoding="utf-8")
    _log(f"wrote analysis to {out_root}")
    return EXIT_OK


def _unique_names(pops, paths) -> list[str]:
    names = []
    for pop, p in zip(pops, paths):
        base = pop.design_space or Path(p).stem
        name, k = base, 2
        while name in names:
            name, k = f"{base}-{k}", k + 1
        names.append(name)
    return names


def compare_report(edfs: dict[str, EDF], manifest: RunManifest, out_root: Path, central: float = 0.9) -> str:
    """Overlaid EDF table plus pairwise dominance over the pooled central error range."""
    pooled = np.concatenate([f.errors for f in edfs.values()])
    tail = (1 - central) / 2
    lo, hi = np.quantile(pooled, [tail, 1 - tail])
    grid = np.linspace(lo, hi, 201)
    names = list(edfs)
    rows = [[float(e)] + [float(edfs[n](e)) for n in names] for e in grid]
    _write(out_root / "compare_edf.csv", manifest, ["error"] + [f"F_{n}" for n in names], rows)
    pair_rows = []
    for a in names:
        for b in names:
            if a != b:
                pair_rows.append([a, b, dominance([edfs[a], edfs[b]], grid)[0]])
    _write(out_root / "dominance.csv", manifest, ["better", "worse", "dominates"], pair_rows)
    order = sorted(names, key=lambda n: (edfs[n].mean, n))
    chain = order[0]
    for a, b in zip(order, order[1:]):
        chain += (" >= " if dominance([edfs[a], edfs[b]], grid)[0] else " ~ ") + b
    lines = [f"central {central:.0%} error range [{lo:.4f}, {hi:.4f}]"]
    lines += [f"{n}: n={edfs[n].n} min={edfs[n].min:.4f} mean={edfs[n].mean:.4f}" for n in order]
    lines.append(f"ordering: {chain}")
    text = "\n".join(lines) + "\n"
    (out_root / "ordering.txt").write_text(text, encoding="utf-8")
    return text


def edf_svg(edfs: dict[str, EDF], width: int = 480, height: int = 320) -> str:
    """Static step plot of one or more EDFs."""
    allx = np.concatenate([f.errors for f in edfs.values()])
    x0, x1 = float(allx.min()), float(allx.max())
    span = (x1 - x0) or 1.0
    pad = 40
    sx = lambda x: pad + (x - x0) / span * (width - 2 * pad)
    sy = lambda y: height - pad - y * (height - 2 * pad)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{sy(0)}" x2="{width - pad}" y2="{sy(0)}" stroke="black"/>',
        f'<line x1="{pad}" y1="{sy(0)}" x2="{pad}" y2="{sy(1)}" stroke="black"/>',
        f'<text x="{pad}" y="{height - 10}" font-size="11">{x0:.3f}</text>',
        f'<text x="{width - pad - 30}" y="{height - 10}" font-size="11">{x1:.3f}</text>',
    ]
    for k, (name, f) in enumerate(edfs.items()):
        xs, after = f.steps()
        pts = [(sx(x0), sy(0.0))]
        prev = 0.0
        for x, a in zip(xs, after):
            pts += [(sx(x), sy(prev)), (sx(x), sy(a))]
            prev = a
        pts.append((sx(x1), sy(prev)))
        c = colors[k % len(colors)]
        path = " ".join(f"{px:.1f},{py:.1f}" for px, py in pts)
        parts.append(f'<polyline fill="none" stroke="{c}" points="{path}"/>')
        parts.append(f'<text x="{pad + 8}" y="{pad + 14 * (k + 1)}" font-size="11" fill="{c}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_best(args) -> int:
    pop = _load_population(args.population)
    try:
        require_single_source(pop, args.allow_mixed)
    except MixedSourceError as exc:
        raise CliError(EXIT_DATA, str(exc))
    done = sorted(pop.complete(), key=lambda s: (s.error, s.spec_hash))
    if not done:
        raise CliError(EXIT_MISSING, "no samples with errors")
    if args.k > len(done):
        raise CliError(EXIT_CONFIG, f"k={args.k} exceeds the {len(done)} complete samples")
    rows = []
    for rank, s in enumerate(done[: args.k], start=1):
        rp = s.regnet_params
        rows.append(
            [
                rank,
                s.spec_hash,
                s.error,
                s.complexity.flops,
                s.complexity.params,
                s.complexity.acts,
                s.spec.depth,
                max(s.spec.group_widths),
                rp.wm if rp else None,
                rp.wa if rp else None,
                rp.w0 if rp else None,
                "-".join(map(str, s.spec.depths)),
                "-".join(map(str, s.spec.widths)),
            ]
        )
    header = ["rank", "spec_hash", "error", "flops", "params", "acts", "d", "g", "wm", "wa", "w0", "depths", "widths"]
    out = Path(args.out) if args.out else None
    _emit(_csv_text(_manifest(args, [args.population], [out or "-"]), header, rows), out)
    return EXIT_OK


def cmd_size(args) -> int:
    cfg = _config(args)
    if args.all:
        spaces = list(DESIGN_SPACES.values())
    else:
        spaces = [_design_space(args, cfg)]
    rows = [[ds.name, design_space_size(ds), f"{design_space_size(ds):.1e}"] for ds in spaces]
    out = Path(args.out) if args.out else None
    _emit(_csv_text(_manifest(args, outputs=[out or "-"]), ["space", "size", "approx"], rows), out)
    return EXIT_OK


def cmd_export(args) -> int:
    pop = _load_population(args.population)
    out_dir = Path(args.out or "export")
    paths = export_specs(pop, out_dir)
    index = {
        "manifest": _manifest(args, [args.population], [out_dir]).to_dict(),
        "models": [{"index": s.index, "spec_hash": s.spec_hash, "file": p.name} for s, p in zip(pop.samples, paths)],
    }
    (out_dir / "manifest.json").write_text(json.dumps(index, indent=1) + "\n", encoding="utf-8")
    _log(f"exported {len(paths)} specs to {out_dir}")
    return EXIT_OK


def _surrogate_config(cfg: dict) -> SurrogateConfig:
    try:
        return SurrogateConfig.from_dict(cfg.get("surrogate", {}))
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"surrogate config: {exc}")


def cmd_surrogate(args) -> int:
    pop = _load_population(args.population)
    scfg = _surrogate_config(_config(args))
    try:
        pop = apply_surrogate(pop, args.seed or 0, scfg, overwrite=args.overwrite)
    except MixedSourceError as exc:
        raise CliError(EXIT_DATA, str(exc))
    out = Path(args.out) if args.out else Path(args.population)
    pop.header["manifest"] = _manifest(args, [args.population], [out]).to_dict()
    write_population(pop, out)
    _log(f"surrogate errors for {len(pop.samples)} models written to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    pop = _load_population(args.population)
    p = Path(args.errors)
    if not p.exists():
        raise CliError(EXIT_MISSING, f"error file not found: {p}")
    try:
        records = read_error_records(p)
        rep = ingest_errors(pop, records)
    except MixedSourceError as exc:
        raise CliError(EXIT_DATA, str(exc))
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_DATA, f"{p}: {exc}")
    out = Path(args.out) if args.out else Path(args.population)
    rep.population.header["manifest"] = _manifest(args, [args.population, p], [out]).to_dict()
    write_population(rep.population, out)
    _log(f"matched {rep.matched}, pending {rep.pending}, orphans {len(rep.orphans)}, conflicts {len(rep.conflicts)}")
    for h in rep.orphans:
        _log(f"orphan: {h}")
    for c in rep.conflicts:
        _log(f"conflict: {c.spec_hash} kept {c.kept} rejected {c.rejected}")
    return EXIT_OK


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master / noise / bootstrap seed")
    common.add_argument("--config", default=None, help="JSON or YAML config file")
    common.add_argument("--out", default=None, help="output file or directory")

    p = _Parser(prog="netspaces", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", parents=[common], help="sample a population")
    s.add_argument("--space", default=None, help=f"built-in space: {', '.join(DESIGN_SPACES)}")
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--flops", type=parse_window, default=None, help="lo:hi, e.g. 360e6:400e6")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--max-attempts", type=int, default=None)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("complexity", parents=[common], help="flops, params and activations")
    s.add_argument("inputs", nargs="*", help="spec JSON or population files")
    s.add_argument("--model", choices=sorted(RESNETS))
    s.add_argument("--regnet", help="e.g. d=13,w0=24,wa=36,wm=2.5,g=8")
    s.add_argument("--runtime", type=_floats, default=None, help="a,b,c for a*flops + b*acts + c")
    s.set_defaults(func=cmd_complexity)

    s = sub.add_parser("fit", parents=[common], help="per-model quantized linear fit")
    s.add_argument("population")
    s.add_argument("--from-spec", action="store_true", help="fit materialized widths even for RegNet samples")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("analyze", parents=[common], help="EDF, bootstrap bands, trends")
    s.add_argument("population")
    s.add_argument("--compare", nargs="+", default=None, help="more populations to overlay")
    s.add_argument("--bins", type=int, default=1, help="log-spaced flop bins for bootstrap bands")
    s.add_argument("--reps", type=int, default=10_000)
    s.add_argument("--trials", type=int, default=10_000, help="random search trials")
    s.add_argument("--svg", action="store_true", help="also write SVG step plots")
    s.add_argument("--allow-mixed", action="store_true")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("best", parents=[common], help="top-k models by error")
    s.add_argument("population")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--allow-mixed", action="store_true")
    s.set_defaults(func=cmd_best)

    s = sub.add_parser("size", parents=[common], help="design space cardinality")
    s.add_argument("--space", default=None)
    s.add_argument("--all", action="store_true")
    s.set_defaults(func=cmd_size)

    s = sub.add_parser("export", parents=[common], help="one canonical spec JSON per model")
    s.add_argument("population")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("surrogate", parents=[common], help="fill errors with the surrogate")
    s.add_argument("population")
    s.add_argument("--overwrite", action="store_true")
    s.set_defaults(func=cmd_surrogate)

    s = sub.add_parser("ingest", parents=[common], help="join trained errors by spec hash")
    s.add_argument("population")
    s.add_argument("errors", help="JSON lines ErrorRecords or spec_hash,error CSV")
    s.set_defaults(func=cmd_ingest)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        _log(f"error: {exc}")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
