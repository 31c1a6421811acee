import pytest
from hypothesis import given
from hypothesis import strategies as st

from cohortgen.masking import (
    DictionaryEntityDetector,
    Domain,
    EntitySpan,
    SpanOverlapError,
    detect_entities,
    mask_entities,
)


def span(text: str, term: str, domain: Domain) -> EntitySpan:
    start = text.index(term)
    return EntitySpan(start=start, end=start + len(term), text=term, domain=domain)


def test_single_condition_masked():
    text = "patients with endometriosis"
    masked = mask_entities(text, [span(text, "endometriosis", Domain.CONDITION)])
    assert masked == "patients with CONDITION"


def test_zero_spans_identity():
    assert mask_entities("no entities here", []) == "no entities here"


def test_two_domains_masked():
    text = "metformin after hypertension"
    spans = [
        span(text, "metformin", Domain.DRUG),
        span(text, "hypertension", Domain.CONDITION),
    ]
    assert mask_entities(text, spans) == "DRUG after CONDITION"


def test_overlapping_spans_rejected():
    text = "atrial fibrillation"
    overlapping = [
        EntitySpan(0, 10, "atrial fib", Domain.CONDITION),
        EntitySpan(7, 19, "fibrillation", Domain.CONDITION),
    ]
    with pytest.raises(SpanOverlapError):
        mask_entities(text, overlapping)


def test_span_text_mismatch_rejected():
    with pytest.raises(ValueError):
        mask_entities("abcdef", [EntitySpan(0, 3, "xyz", Domain.DRUG)])


def test_dictionary_detector_basic():
    detector = DictionaryEntityDetector({"hypertension": Domain.CONDITION})
    spans = detect_entities("has hypertension", detector)
    assert len(spans) == 1
    assert spans[0].text == "hypertension"
    assert spans[0].domain == Domain.CONDITION
    assert spans[0].start == 4


def test_detector_empty_text():
    detector = DictionaryEntityDetector({"hypertension": Domain.CONDITION})
    assert detect_entities("", detector) == []


def test_detector_no_hits():
    detector = DictionaryEntityDetector({"hypertension": Domain.CONDITION})
    assert detect_entities("no relevant terms", detector) == []


def test_detector_longest_match_and_word_boundary():
    detector = DictionaryEntityDetector(
        {"diabetes": Domain.CONDITION, "type 2 diabetes": Domain.CONDITION}
    )
    spans = detect_entities("history of type 2 diabetes", detector)
    assert [s.text for s in spans] == ["type 2 diabetes"]
    # substring inside a longer word is not a match
    assert detect_entities("prediabetesx", detector) == []


def test_mask_then_redetect_is_idempotent():
    detector = DictionaryEntityDetector(
        {"metformin": Domain.DRUG, "hypertension": Domain.CONDITION}
    )
    text = "metformin users with hypertension"
    masked = mask_entities(text, detect_entities(text, detector))
    assert detect_entities(masked, detector) == []
    assert mask_entities(masked, detect_entities(masked, detector)) == masked


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=80))
def test_masking_preserves_text_outside_spans(text):
    detector = DictionaryEntityDetector({"aspirin": Domain.DRUG})
    spans = detect_entities(text, detector)
    masked = mask_entities(text, spans)
    if not spans:
        assert masked == text
    else:
        assert "DRUG" in masked
