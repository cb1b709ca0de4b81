"""Drive a benchmark offline (prediction file) or online (endpoint) into an EvalReport."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import httpx

from ..eval_harness.report import EvalReport, aggregate
from ..eval_harness.scoring import ItemScore, Prediction, score_item
from ..scene_core.io import read_jsonl
from ..scene_core.types import QAItem
from .client import EndpointConfig, EndpointError, query
from .prompts import build_prompt

Scorer = Callable[..., ItemScore]


class BenchmarkError(ValueError):
    pass


class MissingPredictions(BenchmarkError):
    def __init__(self, ids: Sequence[str]):
        self.ids = list(ids)
        shown = ", ".join(self.ids[:10]) + (" ..." if len(self.ids) > 10 else "")
        super().__init__(f"missing predictions for {len(self.ids)} item(s): {shown}")


@dataclass(frozen=True)
class AuditRecord:
    item_id: str
    prompt_hash: str
    raw_text: Optional[str]
    parsed: Any
    parse_status: str
    score: float

    def to_dict(self) -> dict:
        return {"item_id": self.item_id, "prompt_hash": self.prompt_hash, "raw_text": self.raw_text,
                "parsed": self.parsed, "parse_status": self.parse_status, "score": self.score}


def load_predictions(source: Union[str, Path, Iterable[Mapping[str, Any]]]) -> Dict[str, Mapping[str, Any]]:
    """Prediction records keyed by item id; duplicates are an error."""
    records = read_jsonl(source) if isinstance(source, (str, Path)) else list(source)
    out: Dict[str, Mapping[str, Any]] = {}
    for i, rec in enumerate(records, 1):
        if "item_id" not in rec:
            raise BenchmarkError(f"prediction record {i} has no item_id")
        if rec["item_id"] in out:
            raise BenchmarkError(f"duplicate prediction for {rec['item_id']!r}")
        out[rec["item_id"]] = rec
    return out


def _online(items: Sequence[QAItem], endpoint: EndpointConfig, thinking: bool, coord_mode: str,
            transport: Optional[httpx.BaseTransport]) -> Dict[str, Mapping[str, Any]]:
    """Raw replies for every item, at most ``max_in_flight`` requests at once."""
    with httpx.Client(timeout=endpoint.timeout, transport=transport,
                      limits=httpx.Limits(max_connections=endpoint.max_in_flight)) as client:
        def one(item: QAItem):
            return item.item_id, query(endpoint, build_prompt(item, thinking, coord_mode), client)

        with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
            return {iid: {"item_id": iid, "raw_text": raw} for iid, raw in pool.map(one, items)}


def run_benchmark(items: Sequence[QAItem], endpoint: Optional[EndpointConfig] = None,
                  predictions: Union[None, str, Path, Iterable[Mapping[str, Any]]] = None,
                  scorer: Scorer = score_item, benchmark: str = "benchmark", thinking: bool = True,
                  coord_mode: str = "absolute", dfd_normalize: bool = True,
                  groups: Optional[Mapping[str, str]] = None, audit_path: Union[None, str, Path] = None,
                  transport: Optional[httpx.BaseTransport] = None) -> EvalReport:
    """Score ``items`` against exactly one prediction source.

    Offline mode never touches the network. Predictions are joined to items
    by id, so file order and completion order do not matter. When
    ``audit_path`` is set, one JSONL line per item records the prompt hash,
    raw text, parsed payload and score. ``groups`` maps item id to a split;
    by default an item's ``meta["split"]`` is used, then its family.
    """
    if (endpoint is None) == (predictions is None):
        raise BenchmarkError("give exactly one of an endpoint or a prediction source")
    items = list(items)
    if not items:
        raise BenchmarkError("no items to evaluate")
    ids = [it.item_id for it in items]
    if len(set(ids)) != len(ids):
        raise BenchmarkError("duplicate item ids in benchmark")
    if predictions is not None:
        preds = load_predictions(predictions)
        stray = sorted(set(preds) - set(ids))
        if stray:
            raise BenchmarkError(f"prediction for unknown item id {stray[0]!r}")
    else:
        preds = _online(items, endpoint, thinking, coord_mode, transport)
    missing = [i for i in ids if i not in preds]
    if missing:
        raise MissingPredictions(missing)

    records: List[ItemScore] = []
    audit: List[AuditRecord] = []
    for item in sorted(items, key=lambda it: it.item_id):
        pred = Prediction.from_record(item, preds[item.item_id])
        s = scorer(item, pred, coord_mode=coord_mode, dfd_normalize=dfd_normalize)
        records.append(s)
        audit.append(AuditRecord(item.item_id, build_prompt(item, thinking, coord_mode).digest(), pred.raw_text,
                                 pred.parsed, pred.status, s.score))
    if audit_path is not None:
        path = Path(audit_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for a in audit:
                fh.write(json.dumps(a.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    if groups is None:
        groups = {it.item_id: str(it.meta.get("split", it.family)) for it in items}
    config = {"mode": "online" if endpoint is not None else "offline", "thinking": thinking,
              "coord_mode": coord_mode, "dfd_normalize": dfd_normalize}
    return aggregate(records, groups, benchmark=benchmark, config=config)


__all__ = ["AuditRecord", "BenchmarkError", "EndpointError", "MissingPredictions", "load_predictions",
           "run_benchmark"]
