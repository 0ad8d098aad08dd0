"""The two attack objectives and the evaluation metric.

The attack minimizes (f1, f2): f1 is the summed absolute gap between the
estimated and the attacker-chosen depth map over the evaluation region,
f2 is the L2 norm of the rendered perturbation.  The pseudo volume is the
same absolute-gap sum taken over the object region and quantifies attack
success after the fact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, EmptyRegionError
from .imaging import DepthMap, PerturbationField, RegionMask


@dataclass(frozen=True)
class TargetSpec:
    """What the attacker wants the estimator to say, in oracle-output coords.

    eval_region is where f1 is summed; volume_region is the object region
    over which the pseudo volume is measured.  The two coincide when the
    attack is judged exactly where it is steered.
    """

    target_depth: DepthMap
    eval_region: RegionMask
    volume_region: RegionMask

    def __post_init__(self):
        shape = self.target_depth.values.shape
        if self.eval_region.flags.shape != shape or self.volume_region.flags.shape != shape:
            raise DimensionMismatchError("target regions must match the target depth raster")


def _abs_gap_sum(est: DepthMap, spec: TargetSpec, region: RegionMask) -> float:
    if est.values.shape != spec.target_depth.values.shape:
        raise DimensionMismatchError(
            f"estimated map {est.width}x{est.height} does not match "
            f"target {spec.target_depth.width}x{spec.target_depth.height}"
        )
    gap = np.abs(est.values - spec.target_depth.values)
    return float(gap[region.flags].sum())


def depth_error(est: DepthMap, spec: TargetSpec) -> float:
    """Sum of |estimated - target| depth over the evaluation region (f1)."""
    if spec.eval_region.count == 0:
        raise EmptyRegionError("evaluation region is empty; the attack is degenerate")
    return _abs_gap_sum(est, spec, spec.eval_region)


def perturbation_norm(field: PerturbationField) -> float:
    """L2 norm of the delta field (f2)."""
    return float(np.sqrt(np.sum(field.deltas**2)))


def pseudo_volume(est: DepthMap, spec: TargetSpec) -> float:
    """Sum of |estimated - target| depth over the object region."""
    if spec.volume_region.count == 0:
        raise EmptyRegionError("volume region is empty")
    return _abs_gap_sum(est, spec, spec.volume_region)


def reduction_rate(v_original: float, v_adversarial: float) -> float:
    """Percentage drop of the pseudo volume, 100 * (V0 - V) / V0."""
    if v_original <= 0.0:
        raise ValueError("original pseudo volume must be > 0")
    return 100.0 * (v_original - v_adversarial) / v_original


REPORT_COLUMNS = ["scene", "f1", "f2", "V_original", "V_adv", "reduction_pct", "queries"]


@dataclass(frozen=True)
class MetricRow:
    scene: str
    f1: float
    f2: float
    v_original: float
    v_adv: float
    queries: int

    @property
    def reduction_pct(self) -> float:
        return reduction_rate(self.v_original, self.v_adv)

    def as_record(self) -> dict:
        return {
            "scene": self.scene,
            "f1": repr(self.f1),
            "f2": repr(self.f2),
            "V_original": repr(self.v_original),
            "V_adv": repr(self.v_adv),
            "reduction_pct": repr(self.reduction_pct),
            "queries": self.queries,
        }


def write_report_csv(rows: list[MetricRow], path: str | Path) -> None:
    """Write metric rows with floats in repr form so reruns are byte-stable."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_record())
