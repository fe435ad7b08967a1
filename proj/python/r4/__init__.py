"""Python access to the r4 core: metrics, scoring, memory, routing and batch runs."""

from ._r4 import (
    MemoryStore,
    R4Error,
    average_precision,
    extract_json,
    heuristic_route,
    iou,
    judge_aggregate,
    map50,
    run_batch,
    score,
    select,
    simulate,
    text_metrics,
    tokenize,
    tokenize_sequence,
    validate_bbox,
)

__all__ = [
    "MemoryStore",
    "R4Error",
    "average_precision",
    "extract_json",
    "heuristic_route",
    "iou",
    "judge_aggregate",
    "map50",
    "run_batch",
    "score",
    "select",
    "simulate",
    "text_metrics",
    "tokenize",
    "tokenize_sequence",
    "validate_bbox",
]
