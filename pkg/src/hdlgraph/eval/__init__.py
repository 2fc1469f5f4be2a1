"""Metrics, benchmark format and the search evaluation harness."""

from .benchmark import BenchmarkQuery, load_benchmark, loads_benchmark, save_benchmark
from .harness import (
    EvalReport,
    bm25_engine,
    format_table,
    graph_engine,
    lexical_engine,
    reports_to_json,
    run_search_eval,
)
from .metrics import PassAtKInput, code_tokens, mrr, pass_at_k, rouge_l, rouge_n

__all__ = [
    "BenchmarkQuery",
    "EvalReport",
    "PassAtKInput",
    "bm25_engine",
    "code_tokens",
    "format_table",
    "graph_engine",
    "lexical_engine",
    "load_benchmark",
    "loads_benchmark",
    "mrr",
    "pass_at_k",
    "reports_to_json",
    "rouge_l",
    "rouge_n",
    "run_search_eval",
    "save_benchmark",
]
