"""Population files, error ingestion and the surrogate error source.

Population file (JSON lines, UTF-8, ``\\n`` endings):

line 1, header::

    {"format": "netspaces-population", "version": 1, "design_space": <name>,
     "master_seed": <int>, "sampler": <SamplerConfig.to_dict()>, "manifest": <RunManifest>}

lines 2.., one record per model::

    {"index": <int>, "spec_hash": <16 hex>, "spec": <canonical spec dict>,
     "regnet_params": <dict or null>, "complexity": {"flops", "params", "acts"},
     "error": <float or null>, "source": "ingested" | "surrogate" | null,
     "epochs": <int or null>}

``spec_hash`` is the first 16 hex digits (64 bits) of SHA-256 over the UTF-8
bytes of ``AnyNetSpec.canonical_json()``: keys in the order block_type,
stem_width, resolution, num_classes, stages (each d, w, b, g), separators ``,``
and ``:``, integral numbers written without a decimal point. A ``stem_type`` key
follows stem_width only for non-default stems.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from netspaces.complexity import ComplexityReport, network_metrics
from netspaces.netspec import AnyNetSpec, RegNetParams, validate, STRUCTURAL_LIMITS
from netspaces.quantlin import DEFAULT_GRID, FitGrid, spec_efit

FORMAT_NAME = "netspaces-population"
FORMAT_VERSION = 1
SOURCES = ("ingested", "surrogate")
TOOL_VERSION = "0.1.0"


class MixedSourceError(ValueError):
    """Raised instead of combining surrogate and ingested errors."""


class PopulationFormatError(ValueError):
    pass


def spec_hash(spec: AnyNetSpec) -> str:
    return hashlib.sha256(spec.canonical_json().encode("utf-8")).hexdigest()[:16]


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: Optional[str] = None
    master_seed: Optional[int] = None
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    tool_version: str = TOOL_VERSION
    python: str = field(default_factory=platform.python_version)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["inputs"] = list(self.inputs)
        out["outputs"] = list(self.outputs)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "RunManifest":
        obj = dict(obj)
        obj["inputs"] = tuple(obj.get("inputs", ()))
        obj["outputs"] = tuple(obj.get("outputs", ()))
        return cls(**obj)


@dataclass(frozen=True)
class PopulationSample:
    index: int
    spec_hash: str
    spec: AnyNetSpec
    complexity: ComplexityReport
    regnet_params: Optional[RegNetParams] = None
    error: Optional[float] = None
    source: Optional[str] = None
    epochs: Optional[int] = None

    def __post_init__(self):
        if self.error is not None:
            if not 0.0 <= self.error <= 1.0:
                raise ValueError(f"error {self.error} outside [0, 1]")
            if self.source not in SOURCES:
                raise ValueError(f"error without a valid source (got {self.source!r})")

    @property
    def flops(self) -> int:
        return self.complexity.flops

    @property
    def complete(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "spec_hash": self.spec_hash,
            "spec": self.spec.to_dict(),
            "regnet_params": self.regnet_params.to_dict() if self.regnet_params else None,
            "complexity": self.complexity.to_dict(),
            "error": self.error,
            "source": self.source,
            "epochs": self.epochs,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PopulationSample":
        rp = obj.get("regnet_params")
        return cls(
            index=int(obj["index"]),
            spec_hash=obj["spec_hash"],
            spec=AnyNetSpec.from_dict(obj["spec"]),
            complexity=ComplexityReport.from_dict(obj["complexity"]),
            regnet_params=RegNetParams.from_dict(rp) if rp else None,
            error=obj.get("error"),
            source=obj.get("source"),
            epochs=obj.get("epochs"),
        )


def make_sample(
    index: int, spec: AnyNetSpec, regnet_params: Optional[RegNetParams] = None
) -> PopulationSample:
    return PopulationSample(index, spec_hash(spec), spec, network_metrics(spec), regnet_params)


@dataclass
class Population:
    header: dict
    samples: list[PopulationSample]

    @property
    def design_space(self) -> str:
        return self.header.get("design_space", "")

    def complete(self) -> list[PopulationSample]:
        return [s for s in self.samples if s.complete]

    def pending(self) -> list[PopulationSample]:
        return [s for s in self.samples if not s.complete]

    def sources(self) -> set[str]:
        return {s.source for s in self.samples if s.complete}

    def errors(self, allow_mixed: bool = False) -> list[float]:
        """Errors of the complete samples; refuses to pool different sources."""
        require_single_source(self, allow_mixed)
        return [s.error for s in self.complete()]

    def by_hash(self) -> dict[str, PopulationSample]:
        return {s.spec_hash: s for s in self.samples}


def require_single_source(pop: Population, allow_mixed: bool = False) -> Optional[str]:
    src = pop.sources()
    if len(src) > 1 and not allow_mixed:
        raise MixedSourceError(
            f"population mixes error sources {sorted(src)}; pass allow_mixed to override"
        )
    return next(iter(src)) if len(src) == 1 else None


def new_population(
    samples: Sequence[PopulationSample],
    design_space: str,
    sampler: Optional[dict] = None,
    master_seed: Optional[int] = None,
    manifest: Optional[RunManifest] = None,
) -> Population:
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "design_space": design_space,
        "master_seed": master_seed,
        "sampler": sampler,
        "manifest": manifest.to_dict() if manifest else None,
    }
    return Population(header, list(samples))


def dumps_population(pop: Population) -> str:
    lines = [_dumps(pop.header)] + [_dumps(s.to_dict()) for s in pop.samples]
    return "\n".join(lines) + "\n"


def write_population(pop: Population, path) -> None:
    Path(path).write_text(dumps_population(pop), encoding="utf-8")


def loads_population(text: str, check: bool = True) -> Population:
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise PopulationFormatError("empty population file")
    header = json.loads(lines[0])
    if header.get("format") != FORMAT_NAME:
        raise PopulationFormatError(f"not a population file (format={header.get('format')!r})")
    if header.get("version") != FORMAT_VERSION:
        raise PopulationFormatError(f"unsupported population version {header.get('version')!r}")
    samples = []
    for n, line in enumerate(lines[1:], start=2):
        try:
            s = PopulationSample.from_dict(json.loads(line))
        except (KeyError, TypeError, ValueError) as exc:
            raise PopulationFormatError(f"line {n}: {exc}") from exc
        if check and s.spec_hash != spec_hash(s.spec):
            raise PopulationFormatError(f"line {n}: spec_hash does not match spec")
        samples.append(s)
    return Population(header, samples)


def read_population(path, check: bool = True) -> Population:
    return loads_population(Path(path).read_text(encoding="utf-8"), check)


def verify_population(pop: Population) -> list[str]:
    """Problems found by recomputing hashes, complexity and (when possible) the specs."""
    from netspaces.netspec import DesignSpaceDef
    from netspaces.sampler import SamplerConfig, _sample_index

    problems = []
    for s in pop.samples:
        if s.spec_hash != spec_hash(s.spec):
            problems.append(f"{s.index}: hash mismatch")
        if network_metrics(s.spec) != replace(s.complexity, runtime_est=None):
            problems.append(f"{s.index}: complexity does not match spec")
    cfg = pop.header.get("sampler")
    if cfg:
        sc = SamplerConfig(
            DesignSpaceDef.from_dict(cfg["design_space"]),
            tuple(cfg["flop_window"]) if cfg.get("flop_window") else None,
            population_size=max(1, len(pop.samples)),
            master_seed=cfg["master_seed"],
            max_attempts_per_sample=cfg.get("max_attempts_per_sample"),
        )
        for s in pop.samples:
            params, spec = _sample_index(sc, s.index)
            if spec != s.spec or params != s.regnet_params:
                problems.append(f"{s.index}: not reproduced by the header seed")
    return problems


@dataclass(frozen=True)
class ErrorRecord:
    spec_hash: str
    error: float
    epochs: Optional[int] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (isinstance(self.error, (int, float)) and 0.0 <= self.error <= 1.0):
            raise ValueError(f"{self.spec_hash}: error {self.error!r} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "spec_hash": self.spec_hash,
            "error": self.error,
            "epochs": self.epochs,
            "metadata": self.metadata,
        }


def parse_error_records(text: str) -> Iterator[ErrorRecord]:
    """Read JSON-lines ErrorRecords or a two-column ``spec_hash,error`` CSV."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        for line in text.splitlines():
            if line.strip():
                obj = json.loads(line)
                yield ErrorRecord(
                    obj["spec_hash"],
                    float(obj["error"]),
                    obj.get("epochs"),
                    obj.get("metadata") or {},
                )
        return
    for row in csv.reader(io.StringIO(text)):
        if not row or row[0].startswith("#"):
            continue
        if len(row) != 2:
            raise ValueError(f"expected 2 CSV columns, got {len(row)}: {row}")
        h, e = (c.strip() for c in row)
        if h == "spec_hash":
            continue
        yield ErrorRecord(h, float(e))


def read_error_records(path) -> list[ErrorRecord]:
    return list(parse_error_records(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Conflict:
    spec_hash: str
    kept: float
    rejected: float


@dataclass
class IngestReport:
    population: Population
    matched: int
    orphans: list[str]
    conflicts: list[Conflict]

    @property
    def pending(self) -> int:
        return len(self.population.pending())


def ingest_errors(pop: Population, records: Iterable[ErrorRecord]) -> IngestReport:
    """Attach errors by spec hash.

    The first record for a hash wins; later records with a different error are
    reported as conflicts, identical repeats are ignored. Unknown hashes are
    orphans. Samples that already carry a surrogate error are never overwritten.
    """
    if "surrogate" in pop.sources():
        raise MixedSourceError("population already holds surrogate errors")
    known = {s.spec_hash for s in pop.samples}
    chosen: dict[str, ErrorRecord] = {}
    orphans, conflicts = [], []
    for rec in records:
        if rec.spec_hash not in known:
            orphans.append(rec.spec_hash)
            continue
        prev = chosen.get(rec.spec_hash)
        if prev is None:
            chosen[rec.spec_hash] = rec
        elif prev.error != rec.error:
            conflicts.append(Conflict(rec.spec_hash, prev.error, rec.error))
    out = []
    for s in pop.samples:
        rec = chosen.get(s.spec_hash)
        if rec is not None and not s.complete:
            s = replace(s, error=float(rec.error), source="ingested", epochs=rec.epochs)
        elif rec is not None and s.error != rec.error:
            conflicts.append(Conflict(s.spec_hash, s.error, rec.error))
        out.append(s)
    matched = sum(1 for s in pop.samples if s.spec_hash in chosen)
    return IngestReport(Population(pop.header, out), matched, orphans, conflicts)


@dataclass(frozen=True)
class SurrogateConfig:
    """Coefficients of the surrogate error.

    error = base - flops_slope * log10(flops / ref_flops)
            + efit_weight * e_fit
            + b_weight * max_i |ln b_i|
            + monotone_weight * (#stage decreases in width + #stage decreases in depth)
            + noise * u,   u uniform in [-1, 1] from a hash of (spec_hash, noise_seed)
    clipped to [clip_lo, clip_hi].

    The b term uses the worst stage so a shared b is never penalized more than
    independently drawn per-stage ratios.
    """

    base: float = 0.37
    flops_slope: float = 0.08
    ref_flops: float = 1e9
    efit_weight: float = 0.2
    b_weight: float = 0.02
    monotone_weight: float = 0.02
    noise: float = 0.01
    clip_lo: float = 0.05
    clip_hi: float = 0.95

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "SurrogateConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown surrogate keys {sorted(unknown)}")
        return cls(**obj)


def _hash_uniform(key: str, seed: int) -> float:
    digest = hashlib.sha256(f"{key}:{seed}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


def _decreases(values: Sequence[float]) -> int:
    return sum(1 for a, b in zip(values, values[1:]) if b < a)


def surrogate_error(
    spec: AnyNetSpec,
    noise_seed: int = 0,
    cfg: SurrogateConfig = SurrogateConfig(),
    grid: FitGrid = DEFAULT_GRID,
) -> float:
    if validate(spec, STRUCTURAL_LIMITS):
        raise ValueError("surrogate needs a structurally valid spec")
    flops = network_metrics(spec).flops
    e = cfg.base - cfg.flops_slope * math.log10(flops / cfg.ref_flops)
    if cfg.efit_weight:
        e += cfg.efit_weight * spec_efit(spec, grid).e_fit
    if cfg.b_weight:
        e += cfg.b_weight * max(abs(math.log(b)) for b in spec.bottlenecks)
    if cfg.monotone_weight:
        e += cfg.monotone_weight * (_decreases(spec.widths) + _decreases(spec.depths))
    if cfg.noise:
        e += cfg.noise * (2.0 * _hash_uniform(spec_hash(spec), noise_seed) - 1.0)
    return float(min(cfg.clip_hi, max(cfg.clip_lo, e)))


def apply_surrogate(
    pop: Population,
    noise_seed: int = 0,
    cfg: SurrogateConfig = SurrogateConfig(),
    overwrite: bool = False,
) -> Population:
    if "ingested" in pop.sources():
        raise MixedSourceError("population already holds ingested errors")
    out = []
    for s in pop.samples:
        if overwrite or not s.complete:
            s = replace(s, error=surrogate_error(s.spec, noise_seed, cfg), source="surrogate")
        out.append(s)
    header = dict(pop.header)
    header["surrogate"] = {"noise_seed": noise_seed, **cfg.to_dict()}
    return Population(header, out)


def export_specs(pop: Population, out_dir) -> list[Path]:
    """One canonical spec JSON per model, named ``<spec_hash>.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for s in pop.samples:
        p = out_dir / f"{s.spec_hash}.json"
        p.write_text(s.spec.canonical_json() + "\n", encoding="utf-8")
        paths.append(p)
    return paths
