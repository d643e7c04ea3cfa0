import random
import sys

import pytest

from spanact.corpus import CorpusInstance, SourceSpan
from spanact.prompting import default_prompt_spec
from spanact.scheme import Annotation, TagSpan, default_apology_scheme, validate_spans

_capture_manager = None


def pytest_configure(config):
    global _capture_manager
    _capture_manager = config.pluginmanager.getplugin("capturemanager")


def emit_verdict(line):
    """Print to the real terminal even under pytest's fd-level capture."""
    if _capture_manager is not None:
        with _capture_manager.global_and_fixture_disabled():
            print(line, flush=True)
    else:
        print(line, file=sys.__stdout__, flush=True)


VOCAB = [
    "yeah", "well", "I", "'m", "oh", "right", "you", "know", "the", "a",
    "about", "that", "for", "er", "mm", "then", "it", "was", "so", "just",
]


@pytest.fixture(scope="session")
def scheme():
    return default_apology_scheme()


@pytest.fixture(scope="session")
def prompt_spec():
    return default_prompt_spec()


def make_instance(tokens, instance_id="t:0", start=0, source_id="t"):
    markers = tuple(i for i, t in enumerate(tokens) if t.casefold() == "sorry")
    return CorpusInstance(
        id=instance_id,
        source_span=SourceSpan(source_id, start, start + len(tokens)),
        tokens=tuple(tokens),
        marker_positions=markers,
    )


def random_instance(rng: random.Random, instance_id="t:0", n_min=6, n_max=20):
    """A random instance with 1-3 marker tokens, never adjacent to each other."""
    n = rng.randint(n_min, n_max)
    tokens = [rng.choice(VOCAB) for _ in range(n)]
    n_markers = rng.randint(1, min(3, n))
    positions = sorted(rng.sample(range(n), n_markers))
    for p in positions:
        tokens[p] = "sorry" if rng.random() < 0.8 else "Sorry"
    return make_instance(tokens, instance_id=instance_id)


def random_annotation(rng: random.Random, instance, scheme, act_present=True, provenance="gold"):
    """A random annotation that always passes validation for this instance."""
    if not act_present:
        return Annotation(instance.id, False, (), provenance)
    spans = []
    markers = list(instance.marker_positions)
    chosen = [m for m in markers if rng.random() < 0.7] or [markers[0]]
    for m in chosen:
        spans.append(TagSpan(scheme.ifid_tag.name, m, m + 1))
    open_tags = [t.name for t in scheme.tags if t.name != scheme.ifid_tag.name]
    taken = set()
    for s in spans:
        taken.update(range(s.start, s.end))
    pos = 0
    n = len(instance.tokens)
    while pos < n:
        if pos in taken or rng.random() < 0.55:
            pos += 1
            continue
        length = rng.randint(1, 3)
        end = min(pos + length, n)
        while any(k in taken for k in range(pos, end)):
            end -= 1
        if end > pos:
            spans.append(TagSpan(rng.choice(open_tags), pos, end))
            taken.update(range(pos, end))
            pos = end
        else:
            pos += 1
    spans.sort(key=lambda s: (s.start, s.end))
    ann = Annotation(instance.id, True, tuple(spans), provenance)
    assert not validate_spans(ann.spans, True, instance.tokens, scheme)
    return ann
