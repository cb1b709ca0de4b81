from .client import EndpointConfig, EndpointError, chat_messages, query, request_body
from .grammar import (
    ANSWER_KINDS,
    ParseResult,
    extract_answer,
    is_well_formed,
    parse_answer,
    parse_payload,
    render_answer,
    render_payload,
)
from .prompts import PREAMBLES, PromptError, PromptSpec, build_prompt

__all__ = [
    "ANSWER_KINDS",
    "AuditRecord",
    "BenchmarkError",
    "EndpointConfig",
    "EndpointError",
    "MissingPredictions",
    "PREAMBLES",
    "ParseResult",
    "PromptError",
    "PromptSpec",
    "build_prompt",
    "chat_messages",
    "extract_answer",
    "is_well_formed",
    "load_predictions",
    "parse_answer",
    "parse_payload",
    "query",
    "render_answer",
    "render_payload",
    "request_body",
    "run_benchmark",
]

_LAZY = {"AuditRecord", "BenchmarkError", "MissingPredictions", "load_predictions", "run_benchmark"}


def __getattr__(name):
    # the runner depends on eval_harness, which itself imports the grammar from this package
    if name in _LAZY:
        from . import benchmark
        return getattr(benchmark, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
