"""spanact: LLM-assisted span annotation of marker-anchored speech acts.

Pipeline: extract marker-centered instances from a tokenised corpus, prime
a chat model with a few-shot prompt, parse its tagged responses into
token-aligned span annotations, score them against gold, and review the
first pass through an HTTP service.
"""

from .corpus import CorpusInstance, SourceSpan, TokenStream, extract_instances, load_corpus
from .errors import (
    BackendError,
    DataError,
    NotFoundError,
    SpanactError,
    UsageError,
    ValidationError,
)
from .evaluate import EvalReport, MatchPolicy, aggregate, compare_instance, evaluate_pairs
from .prompting import Exemplar, PromptSpec, build_prompt, default_prompt_spec, lint_prompt
from .scheme import (
    Annotation,
    AnnotationScheme,
    TagDef,
    TagSpan,
    default_apology_scheme,
    validate_annotation,
)
from .tagparse import align, extract_payload, parse_tags, process_response, to_annotation

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnnotationScheme",
    "BackendError",
    "CorpusInstance",
    "DataError",
    "EvalReport",
    "Exemplar",
    "MatchPolicy",
    "NotFoundError",
    "PromptSpec",
    "SourceSpan",
    "SpanactError",
    "TagDef",
    "TagSpan",
    "TokenStream",
    "UsageError",
    "ValidationError",
    "aggregate",
    "align",
    "build_prompt",
    "compare_instance",
    "default_apology_scheme",
    "default_prompt_spec",
    "evaluate_pairs",
    "extract_instances",
    "extract_payload",
    "lint_prompt",
    "load_corpus",
    "parse_tags",
    "process_response",
    "to_annotation",
    "validate_annotation",
]
