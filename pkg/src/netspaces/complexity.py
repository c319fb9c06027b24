"""Analytic flops, parameters and activations.

Conventions: flops are multiply-adds; params count conv and fc weights only
(no biases, no batch-norm); acts sum the output tensor sizes of conv layers.
Stride two lives in the 3x3 conv and in the residual projection.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from netspaces.netspec import AnyNetSpec

CONV_KINDS = {"1x1": 1, "3x3": 3, "3x3-group": 3, "3x3-depthwise": 3, "7x7": 7}


@dataclass(frozen=True)
class ComplexityReport:
    flops: int = 0
    params: int = 0
    acts: int = 0
    runtime_est: Optional[float] = None

    def __add__(self, other: "ComplexityReport") -> "ComplexityReport":
        return ComplexityReport(
            self.flops + other.flops, self.params + other.params, self.acts + other.acts
        )

    def scaled(self, n: int) -> "ComplexityReport":
        return ComplexityReport(self.flops * n, self.params * n, self.acts * n)

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["runtime_est"] is None:
            del out["runtime_est"]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ComplexityReport":
        return cls(
            int(obj["flops"]), int(obj["params"]), int(obj["acts"]), obj.get("runtime_est")
        )


ZERO = ComplexityReport()


def conv_metrics(
    kind: str, w_in: int, w_out: int, r_out: int, group_width: Optional[int] = None
) -> ComplexityReport:
    """Metrics of one conv producing a ``w_out x r_out x r_out`` tensor."""
    if kind not in CONV_KINDS:
        raise ValueError(f"unknown conv kind {kind!r}")
    if min(w_in, w_out, r_out) < 1:
        raise ValueError("widths and resolution must be positive")
    k = CONV_KINDS[kind]
    groups = 1
    if kind in ("3x3-group", "3x3-depthwise"):
        if w_in != w_out:
            raise ValueError("group convs need equal input and output widths")
        gw = 1 if kind == "3x3-depthwise" else group_width
        if gw is None or gw < 1 or w_in % gw:
            raise ValueError(f"group width {gw} does not divide width {w_in}")
        groups = w_in // gw
    params = k * k * w_in * w_out // groups
    return ComplexityReport(params * r_out * r_out, params, w_out * r_out * r_out)


def _stride_out(r: int, stride: int) -> int:
    return -(-r // stride)


def se_width(w_in: int) -> int:
    return max(1, int(round(w_in / 4)))


def block_metrics(
    block_type: str,
    w_in: int,
    w_out: int,
    b: float,
    g: int,
    r_in: int,
    stride: int,
) -> ComplexityReport:
    """Metrics of one block; group compatibility must already hold."""
    r_out = _stride_out(r_in, stride)
    project = stride != 1 or w_in != w_out
    if block_type in ("V", "VR"):
        cx = conv_metrics("3x3", w_in, w_out, r_out)
        if block_type == "VR" and project:
            cx += conv_metrics("1x1", w_in, w_out, r_out)
        return cx
    if block_type not in ("X", "R", "Y"):
        raise ValueError(f"unknown block type {block_type!r}")
    w_b = int(round(w_out / b))
    gw = w_b if block_type == "R" else g
    cx = conv_metrics("1x1", w_in, w_b, r_in)
    cx += conv_metrics("3x3-group", w_b, w_b, r_out, gw)
    if block_type == "Y":
        w_se = se_width(w_in)
        # squeeze and excite convs run on pooled 1x1 maps; rescale is w_b * r^2 mults
        cx += conv_metrics("1x1", w_b, w_se, 1)
        cx += conv_metrics("1x1", w_se, w_b, 1)
        cx += ComplexityReport(w_b * r_out * r_out, 0, 0)
    cx += conv_metrics("1x1", w_b, w_out, r_out)
    if project:
        cx += conv_metrics("1x1", w_in, w_out, r_out)
    return cx


def stem_metrics(spec: AnyNetSpec) -> ComplexityReport:
    kind = "7x7" if spec.stem_type == "resnet" else "3x3"
    return conv_metrics(kind, 3, spec.stem_width, _stride_out(spec.resolution, 2))


def head_metrics(spec: AnyNetSpec) -> ComplexityReport:
    n = spec.stages[-1].w * spec.num_classes
    return ComplexityReport(n, n, 0)


def stage_metrics(spec: AnyNetSpec) -> list[ComplexityReport]:
    """Per-stage metrics; later blocks of a stage are identical so they are multiplied."""
    out = []
    w_in, r = spec.stem_width, spec.stem_resolution()
    for s, stride in zip(spec.stages, spec.stage_strides()):
        first = block_metrics(spec.block_type, w_in, s.w, s.b, s.g, r, stride)
        r = _stride_out(r, stride)
        rest = block_metrics(spec.block_type, s.w, s.w, s.b, s.g, r, 1)
        out.append(first + rest.scaled(s.d - 1))
        w_in = s.w
    return out


def network_metrics(spec: AnyNetSpec) -> ComplexityReport:
    total = stem_metrics(spec) + head_metrics(spec)
    for cx in stage_metrics(spec):
        total += cx
    return total


def runtime_model(flops: float, acts: float, coeffs: Sequence[float]) -> float:
    a, b, c = coeffs
    return a * flops + b * acts + c


def fit_runtime(
    flops: Sequence[float], acts: Sequence[float], runtime: Sequence[float]
) -> tuple[float, float, float]:
    """Least-squares (a, b, c) for ``runtime = a*flops + b*acts + c``."""
    f = np.asarray(flops, dtype=np.float64)
    a = np.asarray(acts, dtype=np.float64)
    y = np.asarray(runtime, dtype=np.float64)
    cols = np.stack([f, a, np.ones_like(f)], axis=1)
    scale = np.abs(cols).max(axis=0)
    scale[scale == 0] = 1.0
    coef, _, rank, _ = np.linalg.lstsq(cols / scale, y, rcond=None)
    if rank < 3:
        raise np.linalg.LinAlgError("runtime fit is rank deficient")
    coef = coef / scale
    return float(coef[0]), float(coef[1]), float(coef[2])


def resnet_spec(depths=(3, 4, 6, 3), groups: int = 1, bottleneck_width: int = 64) -> AnyNetSpec:
    """ResNe(X)t as an AnyNetSpec: ResNet-style stem of 64, widths 256..2048.

    ``groups=1`` gives ResNet (full 3x3 convs); e.g. ``groups=32, bottleneck_width=4``
    gives ResNeXt-50 32x4d.
    """
    from netspaces.netspec import StageSpec

    stages = []
    for i, d in enumerate(depths):
        w = 256 * 2**i
        w_b = groups * bottleneck_width * 2**i
        stages.append(StageSpec(d, w, w // w_b, w_b // groups))
    return AnyNetSpec("X", tuple(stages), stem_width=64, stem_type="resnet")


def fmt_flops(flops: float) -> str:
    return f"{flops / 1e9:.2f}GF" if flops >= 1e9 else f"{flops / 1e6:.1f}MF"

