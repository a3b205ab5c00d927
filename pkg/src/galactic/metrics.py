"""Evaluation measurements for local and global explanations."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .structure import Segmentation

CSV_COLUMNS = ("eff", "afc", "acs", "act", "RT")


@dataclass
class EvalReport:
    """Averages over successful instances; ``None`` stands for the null marker when eff is 0."""

    eff: float
    afc: float | None
    acs: float | None
    act: float | None
    runtime_s: float = 0.0
    n_attempts: int = 0
    n_success: int = 0
    records: list[dict] = field(default_factory=list)
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "eff": self.eff,
            "afc": self.afc,
            "acs": self.acs,
            "act": self.act,
            "RT": self.runtime_s,
            "n_attempts": self.n_attempts,
            "n_success": self.n_success,
            "records": self.records,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self) -> list:
        return [self.eff, self.afc, self.acs, self.act, self.runtime_s]


def changed_segments(delta, seg: Segmentation) -> int:
    nz = np.asarray(delta) != 0
    return sum(1 for a, b in seg.segments if nz[a:b].any())


def _mean_or_none(values):
    return float(np.mean(values)) if values else None


def evaluate_local(results, segmentations: dict, runtime_s: float = 0.0, label: str = "") -> EvalReport:
    """``results`` is a list of ``(instance_id, Counterfactual | None)``."""
    if not results:
        raise PreconditionError("no attempted instances to evaluate")
    costs, segs, steps, records = [], [], [], []
    for iid, cf in sorted(results, key=lambda r: r[0]):
        if cf is None:
            records.append({"instance_id": int(iid), "success": False})
            continue
        l0 = int(np.count_nonzero(cf.delta))
        if l0 < 1:
            raise PreconditionError("a successful counterfactual must change at least one timestep",
                                    instance_id=iid)
        n_seg = changed_segments(cf.delta, segmentations[iid])
        costs.append(float(np.linalg.norm(cf.delta)))
        segs.append(n_seg)
        steps.append(l0)
        records.append({"instance_id": int(iid), "success": True, "afc": costs[-1],
                        "acs": n_seg, "act": l0})
    n = len(results)
    return EvalReport(
        eff=100.0 * len(costs) / n,
        afc=_mean_or_none(costs),
        acs=_mean_or_none(segs),
        act=_mean_or_none(steps),
        runtime_s=runtime_s,
        n_attempts=n,
        n_success=len(costs),
        records=records,
        label=label,
    )


def evaluate_global(summary, segmentations: dict, runtime_s: float | None = None, label: str = "") -> EvalReport:
    """Stats of each covered instance's best-fit perturbation; eff/afc come from the summary."""
    by_cid = {p.cid: p for p in summary.selected}
    segs, steps, records = [], [], []
    for iid in summary.covered_ids:
        p = by_cid[summary.best[iid]]
        n_seg = changed_segments(p.delta, segmentations[iid])
        segs.append(n_seg)
        steps.append(p.l0)
        records.append({"instance_id": int(iid), "cid": int(p.cid), "afc": summary.best_cost[iid],
                        "acs": n_seg, "act": p.l0})
    return EvalReport(
        eff=100.0 * summary.eff,
        afc=summary.afc,
        acs=_mean_or_none(segs),
        act=_mean_or_none(steps),
        runtime_s=summary.runtime_ms / 1000.0 if runtime_s is None else runtime_s,
        n_attempts=summary.n_instances,
        n_success=len(summary.covered_ids),
        records=records,
        label=label,
    )


def gain_loss(x_values, y_values) -> float:
    """Mean signed difference ``mean(y - x)`` over paired datasets."""
    x = np.asarray(x_values, dtype=float)
    y = np.asarray(y_values, dtype=float)
    if x.shape != y.shape or x.size == 0:
        raise PreconditionError("gain/loss needs two non-empty vectors of equal length")
    return float(np.mean(y - x))


def reports_to_csv(reports: list[EvalReport], strip_timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = [c for c in CSV_COLUMNS if not (strip_timing and c == "RT")]
    w.writerow(["label", *cols])
    for r in reports:
        row = r.csv_row()
        if strip_timing:
            row = row[:-1]
        w.writerow([r.label, *["-" if v is None else v for v in row]])
    return buf.getvalue()
