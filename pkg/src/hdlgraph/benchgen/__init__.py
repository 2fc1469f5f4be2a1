"""Benchmark generation over a pluggable text-generation provider."""

from .pipeline import (
    GeneratedQuery,
    GenerationReport,
    Rejection,
    RepoEntry,
    RepoManifest,
    Scrubber,
    abstract_module,
    annotate_signals,
    describe_block,
    generate_benchmark,
    leaked_identifiers,
    load_manifest,
    refine,
    repo_names,
    scrub_names,
    write_outputs,
)
from .providers import (
    CallableProvider,
    RecordingProvider,
    RemoteProvider,
    ReplayProvider,
    TextGenProvider,
    prompt_key,
)

__all__ = [
    "CallableProvider",
    "GeneratedQuery",
    "GenerationReport",
    "RecordingProvider",
    "Rejection",
    "RemoteProvider",
    "RepoEntry",
    "RepoManifest",
    "ReplayProvider",
    "Scrubber",
    "TextGenProvider",
    "abstract_module",
    "annotate_signals",
    "describe_block",
    "generate_benchmark",
    "leaked_identifiers",
    "load_manifest",
    "prompt_key",
    "refine",
    "repo_names",
    "scrub_names",
    "write_outputs",
]
