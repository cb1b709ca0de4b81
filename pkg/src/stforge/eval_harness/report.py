"""Aggregation of per-item scores into benchmark reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from .scoring import ItemScore


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class GroupStat:
    name: str
    n: int
    mean: float

    def to_dict(self) -> dict:
        return {"name": self.name, "n": self.n, "mean": self.mean}


@dataclass(frozen=True)
class EvalReport:
    """Per-item records plus item-weighted means per group and overall."""

    benchmark: str
    metric: str
    higher_is_better: bool
    records: Sequence[ItemScore]
    groups: Sequence[GroupStat]
    overall: float
    config: Mapping[str, Any] = field(default_factory=dict)
    record_groups: Mapping[str, str] = field(default_factory=dict)

    @property
    def orientation(self) -> str:
        return "↑" if self.higher_is_better else "↓"

    def scores(self) -> Dict[str, float]:
        return {r.item_id: r.score for r in self.records}

    def summary(self) -> dict:
        return {"benchmark": self.benchmark, "metric": self.metric, "orientation": self.orientation,
                "higher_is_better": self.higher_is_better, "n": len(self.records), "overall": self.overall,
                "groups": [g.to_dict() for g in self.groups], "config": dict(self.config),
                **({"mean_dfd": self.overall} if self.metric == "dfd" else {})}

    def to_records(self) -> List[dict]:
        """Machine-readable form: one line per item, then a summary line."""
        out = []
        for r in self.records:
            d = {"type": "item", **r.to_dict()}
            d["group"] = self.record_groups.get(r.item_id, "all")
            out.append(d)
        out.append({"type": "summary", **self.summary()})
        return out

    def write_jsonl(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.to_records():
                fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path: Union[str, Path]) -> "EvalReport":
        lines = [json.loads(l) for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
        items = [l for l in lines if l.get("type") == "item"]
        summary = next((l for l in lines if l.get("type") == "summary"), None)
        if summary is None:
            raise ReportError(f"{path}: no summary line")
        records = [ItemScore(l["item_id"], l["family"], l["metric"], l["score"], l["higher_is_better"],
                             l.get("diagnostics", {})) for l in items]
        groups = {l["item_id"]: l.get("group", "all") for l in items}
        return aggregate(records, groups, benchmark=summary["benchmark"], config=summary.get("config", {}))

    def table(self, scale: float = 1.0, digits: int = 4) -> str:
        """Fixed-width rendering: one column per group plus the overall mean."""
        label = f"{self.metric} {self.orientation}"
        names = [g.name for g in self.groups] + ["Overall"]
        vals = [g.mean for g in self.groups] + [self.overall]
        counts = [g.n for g in self.groups] + [len(self.records)]
        width = max([len(n) for n in names] + [digits + 6])
        first = max(len(self.benchmark), len(label), 9)
        head = f"{'benchmark':<{first}} | " + " | ".join(f"{n:>{width}}" for n in names)
        rule = "-" * len(head)
        body = f"{self.benchmark:<{first}} | " + " | ".join(f"{v * scale:>{width}.{digits}f}" for v in vals)
        ns = f"{'n':<{first}} | " + " | ".join(f"{c:>{width}d}" for c in counts)
        return "\n".join([f"{label}", head, rule, body, ns])

    def threshold_failures(self, threshold: Optional[float]) -> List[str]:
        """Human-readable breaches of a CI threshold on the overall score."""
        if threshold is None:
            return []
        bad = self.overall < threshold if self.higher_is_better else self.overall > threshold
        if not bad:
            return []
        rel = "below" if self.higher_is_better else "above"
        return [f"{self.benchmark}: {self.metric} {self.overall:.4f} {rel} threshold {threshold}"]


def aggregate(records: Sequence[ItemScore], groups: Optional[Mapping[str, str]] = None,
              benchmark: str = "benchmark", config: Optional[Mapping[str, Any]] = None) -> EvalReport:
    """Item-weighted means per group and overall, in a deterministic order.

    ``groups`` maps item id to a split name; items not listed fall in ``"all"``.
    Records are sorted by item id and groups by name. Records of several
    metrics may share a report (``metric == "mixed"``) only if they agree on
    orientation; the per-group means are then the meaningful numbers.
    """
    if not records:
        raise ReportError("cannot aggregate an empty record set")
    metrics = {(r.metric, r.higher_is_better) for r in records}
    if len({h for _, h in metrics}) != 1:
        raise ReportError(f"metrics with opposite orientation in one report: {sorted(m for m, _ in metrics)}")
    ids = [r.item_id for r in records]
    if len(set(ids)) != len(ids):
        raise ReportError("duplicate item ids in records")
    metric = metrics.pop()[0] if len(metrics) == 1 else "mixed"
    hib = records[0].higher_is_better
    recs = sorted(records, key=lambda r: r.item_id)
    groups = dict(groups or {})
    assigned = {r.item_id: groups.get(r.item_id, "all") for r in recs}
    buckets: Dict[str, List[float]] = {}
    for r in recs:
        buckets.setdefault(assigned[r.item_id], []).append(r.score)
    stats = [GroupStat(name, len(v), sum(v) / len(v)) for name, v in sorted(buckets.items())]
    overall = sum(r.score for r in recs) / len(recs)
    return EvalReport(benchmark, metric, hib, tuple(recs), tuple(stats), overall, dict(config or {}), assigned)
