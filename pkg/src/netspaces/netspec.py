"""Network structure specifications and the structural rules shared by all design spaces.

A network is a stem, a body of 3-5 stages, and a head. Each stage is a run of
identical blocks; the first block of every stage halves the resolution (except
after a ResNet-style stem, whose max-pool already did so for stage one).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

BLOCK_TYPES = ("X", "R", "V", "VR", "Y")
STEM_TYPES = ("simple", "resnet")


@dataclass(frozen=True)
class StageSpec:
    d: int
    w: int
    b: float = 1
    g: int = 1

    @property
    def inner_width(self) -> int:
        return int(round(self.w / self.b))


@dataclass(frozen=True)
class AnyNetSpec:
    """Fully resolved network structure.

    ``stem_type="simple"`` is a stride-two 3x3 conv. ``"resnet"`` is a stride-two
    7x7 conv followed by a stride-two max-pool, after which the first stage keeps
    its input resolution.
    """

    block_type: str
    stages: tuple[StageSpec, ...]
    resolution: int = 224
    stem_width: int = 32
    num_classes: int = 1000
    stem_type: str = "simple"

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def depths(self) -> tuple[int, ...]:
        return tuple(s.d for s in self.stages)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(s.w for s in self.stages)

    @property
    def bottlenecks(self) -> tuple[float, ...]:
        return tuple(s.b for s in self.stages)

    @property
    def group_widths(self) -> tuple[int, ...]:
        return tuple(s.g for s in self.stages)

    @property
    def depth(self) -> int:
        return sum(self.depths)

    def block_widths(self) -> list[int]:
        """Per-block output widths, stage by stage."""
        return [s.w for s in self.stages for _ in range(s.d)]

    def stem_resolution(self) -> int:
        r = _halve(self.resolution)
        return _halve(r) if self.stem_type == "resnet" else r

    def stage_strides(self) -> tuple[int, ...]:
        first = 1 if self.stem_type == "resnet" else 2
        return (first,) + (2,) * (len(self.stages) - 1)

    def stage_resolutions(self) -> tuple[int, ...]:
        r = self.stem_resolution()
        out = []
        for s in self.stage_strides():
            r = _halve(r) if s == 2 else r
            out.append(r)
        return tuple(out)

    def to_dict(self) -> dict:
        out = {"block_type": self.block_type, "stem_width": self.stem_width}
        # non-default stems only, so simple-stem specs keep their canonical bytes
        if self.stem_type != "simple":
            out["stem_type"] = self.stem_type
        out["resolution"] = self.resolution
        out["num_classes"] = self.num_classes
        out["stages"] = [{"d": s.d, "w": s.w, "b": _num(s.b), "g": s.g} for s in self.stages]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "AnyNetSpec":
        stages = tuple(
            StageSpec(int(s["d"]), int(s["w"]), _num(s.get("b", 1)), int(s.get("g", 1)))
            for s in obj["stages"]
        )
        return cls(
            block_type=obj["block_type"],
            stages=stages,
            resolution=int(obj.get("resolution", 224)),
            stem_width=int(obj.get("stem_width", 32)),
            num_classes=int(obj.get("num_classes", 1000)),
            stem_type=obj.get("stem_type", "simple"),
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


@dataclass(frozen=True)
class RegNetParams:
    d: int
    w0: float
    wa: float
    wm: float
    b: float = 1
    g: int = 8
    block_type: str = "X"
    resolution: int = 224

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "w0": _num(self.w0),
            "wa": _num(self.wa),
            "wm": _num(self.wm),
            "b": _num(self.b),
            "g": self.g,
            "block_type": self.block_type,
            "resolution": self.resolution,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RegNetParams":
        return cls(
            d=int(obj["d"]),
            w0=_num(obj["w0"]),
            wa=_num(obj["wa"]),
            wm=_num(obj["wm"]),
            b=_num(obj.get("b", 1)),
            g=int(obj.get("g", 8)),
            block_type=obj.get("block_type", "X"),
            resolution=int(obj.get("resolution", 224)),
        )


@dataclass(frozen=True)
class StageLimits:
    """Admissible per-stage values. ``None`` disables a bound."""

    max_depth: Optional[int] = 16
    max_width: Optional[int] = 1024
    min_width: int = 8
    width_multiple: int = 8
    bottlenecks: Optional[tuple[float, ...]] = (1, 2, 4)
    group_widths: Optional[tuple[int, ...]] = (1, 2, 4, 8, 16, 32)
    min_stages: int = 3
    max_stages: int = 5


DEFAULT_LIMITS = StageLimits()
# For hand-built reference networks (ResNet-50 etc.) that live outside AnyNetX ranges.
STRUCTURAL_LIMITS = StageLimits(
    max_depth=None, max_width=None, width_multiple=1, bottlenecks=None, group_widths=None
)


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


def validate(spec: AnyNetSpec, limits: StageLimits = DEFAULT_LIMITS) -> list[Violation]:
    """Return every structural violation of ``spec``; an empty list means valid."""
    out = []
    if spec.block_type not in BLOCK_TYPES:
        out.append(Violation("block_type", f"unknown block type {spec.block_type!r}"))
    if spec.stem_type not in STEM_TYPES:
        out.append(Violation("stem_type", f"unknown stem type {spec.stem_type!r}"))
    n = len(spec.stages)
    if not limits.min_stages <= n <= limits.max_stages:
        out.append(
            Violation(
                "stages",
                f"stage count {n} outside [{limits.min_stages}, {limits.max_stages}]",
            )
        )
    for name in ("resolution", "stem_width", "num_classes"):
        if getattr(spec, name) < 1:
            out.append(Violation(name, f"{name} must be positive"))
    for i, s in enumerate(spec.stages):
        where = f"stages[{i}]"
        if s.d < 1:
            out.append(Violation(f"{where}.d", "depth must be at least 1"))
        if limits.max_depth is not None and s.d > limits.max_depth:
            out.append(Violation(f"{where}.d", f"depth exceeds {limits.max_depth}"))
        if s.w < limits.min_width:
            out.append(Violation(f"{where}.w", f"width below {limits.min_width}"))
        if limits.max_width is not None and s.w > limits.max_width:
            out.append(Violation(f"{where}.w", f"width exceeds {limits.max_width}"))
        if s.w % limits.width_multiple:
            out.append(
                Violation(f"{where}.w", f"width not divisible by {limits.width_multiple}")
            )
        if s.b <= 0:
            out.append(Violation(f"{where}.b", "bottleneck ratio must be positive"))
            continue
        if limits.bottlenecks is not None and s.b not in limits.bottlenecks:
            out.append(Violation(f"{where}.b", f"bottleneck ratio {s.b} not allowed"))
        if spec.block_type in ("V", "VR"):
            continue
        w_inner = s.w / s.b
        if abs(w_inner - round(w_inner)) > 1e-9:
            out.append(Violation(f"{where}.b", "bottleneck width is not an integer"))
            continue
        if spec.block_type == "R":
            continue
        w_inner = int(round(w_inner))
        if s.g < 1:
            out.append(Violation(f"{where}.g", "group width must be at least 1"))
            continue
        if s.g > w_inner or w_inner % s.g:
            out.append(
                Violation(f"{where}.g", "bottleneck width not divisible by group width")
            )
        # compat may clamp g down to the bottleneck width
        if (
            limits.group_widths is not None
            and s.g not in limits.group_widths
            and s.g != w_inner
        ):
            out.append(Violation(f"{where}.g", f"group width {s.g} not allowed"))
    return out


def apply_group_compat(w_inner: int, g: int) -> tuple[int, int]:
    """Make a bottleneck width and group width compatible.

    ``g`` is clamped to ``w_inner`` when larger; otherwise ``w_inner`` moves to the
    nearest multiple of ``g`` (ties upward). The relative change is at most 1/3.
    """
    if w_inner < 1 or g < 1:
        raise ValueError("widths must be positive")
    if g > w_inner:
        return w_inner, w_inner
    q, r = divmod(w_inner, g)
    if 2 * r >= g:
        q += 1
    return q * g, g


def compat_stage(stage: StageSpec) -> StageSpec:
    """Apply group compatibility to a stage's bottleneck width and rescale its width."""
    w_inner, g = apply_group_compat(stage.inner_width, stage.g)
    w = int(round(w_inner * stage.b))
    return StageSpec(stage.d, w, stage.b, g)


def compat_spec(spec: AnyNetSpec) -> AnyNetSpec:
    if spec.block_type in ("V", "VR"):
        return spec
    if spec.block_type == "R":
        stages = tuple(StageSpec(s.d, s.w, s.b, s.inner_width) for s in spec.stages)
    else:
        stages = tuple(compat_stage(s) for s in spec.stages)
    return AnyNetSpec(
        spec.block_type,
        stages,
        spec.resolution,
        spec.stem_width,
        spec.num_classes,
        spec.stem_type,
    )


# Predicates over (spec, regnet params, design space). Each returns (passed, detail).


def _shared(values: Sequence) -> bool:
    return all(v == values[0] for v in values)


def _nondecreasing(values: Sequence) -> Optional[int]:
    """Index of the first stage breaking monotonicity, or None."""
    for i in range(1, len(values)):
        if values[i] < values[i - 1]:
            return i
    return None


def _pred_shared_b(spec, params, dspace):
    ok = _shared(spec.bottlenecks)
    return ok, "" if ok else f"bottlenecks {spec.bottlenecks} differ"


def _pred_shared_g(spec, params, dspace):
    # shared up to compat clamping: every g_i equals min(G, bottleneck width_i)
    gs = spec.group_widths
    top = max(gs)
    ok = all(g == min(top, s.inner_width) for g, s in zip(gs, spec.stages))
    return ok, "" if ok else f"group widths {gs} differ"


def _pred_increasing_w(spec, params, dspace):
    i = _nondecreasing(spec.widths)
    return i is None, "" if i is None else f"width decreases at stage {i + 1}"


def _pred_increasing_d(spec, params, dspace):
    i = _nondecreasing(spec.depths)
    return i is None, "" if i is None else f"depth decreases at stage {i + 1}"


def _pred_regnet_linear(spec, params, dspace):
    if params is None:
        return False, "no quantized linear generator attached"
    from netspaces.quantlin import regnet_to_spec

    regen = regnet_to_spec(
        params,
        num_stages=len(spec.stages),
        stem_width=spec.stem_width,
        num_classes=spec.num_classes,
    )
    ok = regen == spec
    return ok, "" if ok else "structure not generated by its parameters"


def _pred_b_fixed(spec, params, dspace):
    target = dspace.b_fixed
    ok = all(b == target for b in spec.bottlenecks)
    return ok, "" if ok else f"bottleneck ratio differs from {target}"


def _pred_depth_window(spec, params, dspace):
    lo, hi = dspace.depth_window
    ok = lo <= spec.depth <= hi
    return ok, "" if ok else f"total depth {spec.depth} outside [{lo}, {hi}]"


def _pred_wm_floor(spec, params, dspace):
    if params is None:
        return False, "no width multiplier available"
    ok = params.wm >= dspace.wm_floor
    return ok, "" if ok else f"wm {params.wm} below {dspace.wm_floor}"


def _pred_param_cap(spec, params, dspace):
    from netspaces.complexity import network_metrics

    cx = network_metrics(spec)
    cap = dspace.param_cap * cx.flops
    ok = cx.params <= cap
    return ok, "" if ok else f"params {cx.params} exceed cap {cap:.0f}"


def _pred_act_cap(spec, params, dspace):
    from netspaces.complexity import network_metrics

    cx = network_metrics(spec)
    cap = dspace.act_cap * math.sqrt(cx.flops)
    ok = cx.acts <= cap
    return ok, "" if ok else f"acts {cx.acts} exceed cap {cap:.0f}"


PREDICATES = {
    "shared_b": _pred_shared_b,
    "shared_g": _pred_shared_g,
    "increasing_w": _pred_increasing_w,
    "increasing_d": _pred_increasing_d,
    "regnet_linear": _pred_regnet_linear,
    "b_fixed": _pred_b_fixed,
    "depth_window": _pred_depth_window,
    "wm_floor": _pred_wm_floor,
    "param_cap": _pred_param_cap,
    "act_cap": _pred_act_cap,
}


@dataclass(frozen=True)
class DesignSpaceDef:
    """Named sampling ranges plus an ordered list of constraint predicates.

    For ``kind="anynet"`` the ``depth`` range is per stage; for ``kind="regnet"``
    it is the total block count ``d``.
    """

    name: str
    kind: str = "anynet"
    constraints: tuple[str, ...] = ()
    block_type: str = "X"
    num_stages: int = 4
    resolution: int = 224
    stem_width: int = 32
    num_classes: int = 1000
    depth: tuple[int, int] = (1, 16)
    width: tuple[int, int] = (8, 1024)
    width_step: int = 8
    bottlenecks: tuple[float, ...] = (1, 2, 4)
    group_widths: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    w0: tuple[int, int] = (8, 248)
    wa: tuple[float, float] = (1, 255)
    wm: tuple[float, float] = (1.5, 3.0)
    b_fixed: Optional[float] = None
    depth_window: Optional[tuple[int, int]] = None
    wm_floor: Optional[float] = None
    param_cap: Optional[float] = None
    act_cap: Optional[float] = None
    flop_window: Optional[tuple[float, float]] = None
    max_attempts: int = 200_000

    def __post_init__(self):
        for c in self.constraints:
            if c not in PREDICATES:
                raise ValueError(f"unknown constraint {c!r}")
        if self.kind not in ("anynet", "regnet"):
            raise ValueError(f"unknown design space kind {self.kind!r}")

    def limits(self) -> StageLimits:
        if self.kind == "anynet":
            return StageLimits(
                max_depth=self.depth[1],
                max_width=self.width[1],
                min_width=self.width[0],
                width_multiple=self.width_step,
                bottlenecks=tuple(self.bottlenecks),
                group_widths=tuple(self.group_widths),
                min_stages=self.num_stages,
                max_stages=self.num_stages,
            )
        return StageLimits(
            max_depth=None,
            max_width=None,
            min_width=8,
            width_multiple=8,
            bottlenecks=tuple(self.bottlenecks),
            group_widths=tuple(self.group_widths),
            min_stages=self.num_stages,
            max_stages=self.num_stages,
        )

    def to_dict(self) -> dict:
        out = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "DesignSpaceDef":
        known = cls.__dataclass_fields__
        unknown = set(obj) - set(known)
        if unknown:
            raise ValueError(f"unknown design space fields: {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()}
        # YAML 1.1 reads 2.0e8 (no exponent sign) as a string
        for k in ("flop_window", "param_cap", "act_cap"):
            if kw.get(k) is not None:
                v = kw[k]
                kw[k] = tuple(float(x) for x in v) if isinstance(v, tuple) else float(v)
        return cls(**kw)


@dataclass(frozen=True)
class ConstraintReport:
    results: dict = field(default_factory=dict)  # name -> (passed, detail)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.results.values())

    def failures(self) -> list[str]:
        return [f"{k}: {d}" for k, (ok, d) in self.results.items() if not ok]


def check_constraints(
    spec: AnyNetSpec,
    dspace: DesignSpaceDef,
    params: Optional[RegNetParams] = None,
    constraints: Optional[Sequence[str]] = None,
) -> ConstraintReport:
    names = dspace.constraints if constraints is None else constraints
    return ConstraintReport({c: PREDICATES[c](spec, params, dspace) for c in names})


def _halve(r: int) -> int:
    return -(-r // 2)


def _num(x):
    """Collapse integral floats to int so serialized forms stay canonical."""
    x = float(x)
    return int(x) if x.is_integer() else x
