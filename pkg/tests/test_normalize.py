import numpy as np
import pytest

from cohortgen.assets import concepts_path, synonyms_path
from cohortgen.embeddings import HashingEmbedder, embed
from cohortgen.generation import GeneratedSQL, Strategy, parse_placeholders
from cohortgen.llm import MockLLMProvider
from cohortgen.masking import Domain
from cohortgen.normalize import (
    ConceptMapping,
    ConceptRecord,
    NormalizationError,
    ResolutionError,
    VocabularyError,
    build_vocab_index,
    load_vocabulary,
    normalize_term,
    resolve_placeholders,
)

CONCEPTS = [
    ConceptRecord(316866, "Hypertension", Domain.CONDITION, "SNOMED", ("high blood pressure",)),
    ConceptRecord(201826, "Type 2 diabetes mellitus", Domain.CONDITION, "SNOMED", ("type 2 diabetes",)),
    ConceptRecord(201820, "Diabetes mellitus", Domain.CONDITION, "SNOMED", ()),
    ConceptRecord(1503297, "Metformin", Domain.DRUG, "RxNorm", ()),
    ConceptRecord(1112807, "Aspirin", Domain.DRUG, "RxNorm", ("acetylsalicylic acid",)),
    ConceptRecord(3004410, "Hemoglobin A1c", Domain.MEASUREMENT, "LOINC", ("HbA1c",)),
]


@pytest.fixture(scope="module")
def index():
    return build_vocab_index(CONCEPTS, HashingEmbedder())


def test_packaged_vocabulary_loads():
    records = load_vocabulary(concepts_path(), synonyms_path())
    by_id = {r.concept_id: r for r in records}
    assert by_id[316866].name == "Hypertension"
    assert "high blood pressure" in by_id[316866].synonyms
    assert len({r.concept_id for r in records}) == len(records)


def test_duplicate_concept_id_rejected():
    with pytest.raises(VocabularyError):
        build_vocab_index(
            [CONCEPTS[0], ConceptRecord(316866, "Duplicate", Domain.CONDITION, "X", ())],
            HashingEmbedder(),
        )


def test_exact_name_match_scores_one(index):
    mapping = normalize_term("Hypertension", Domain.CONDITION, index)
    assert mapping.chosen == [316866]
    assert mapping.candidates[0] == (316866, 1.0)
    assert not mapping.verified


def test_synonym_match_top_ranked(index):
    mapping = normalize_term("high blood pressure", Domain.CONDITION, index)
    assert mapping.chosen == [316866]
    assert mapping.candidates[0][1] == 1.0


def test_near_synonym_beats_unrelated(index):
    mapping = normalize_term("blood pressure high", Domain.CONDITION, index)
    assert mapping.chosen == [316866]


def test_candidates_non_increasing(index):
    mapping = normalize_term("type 2 diabetes", Domain.CONDITION, index)
    scores = [s for _, s in mapping.candidates]
    assert scores == sorted(scores, reverse=True)


def test_no_candidate_above_floor_fails(index):
    with pytest.raises(NormalizationError):
        normalize_term("zzz qqq xxx", Domain.CONDITION, index)


def test_empty_domain_fails_cleanly():
    empty = build_vocab_index([], HashingEmbedder())
    with pytest.raises(NormalizationError):
        normalize_term("hypertension", Domain.CONDITION, empty)


def test_ranking_matches_brute_force(index):
    embedder = HashingEmbedder()
    term = "diabetes mellitus type 2"
    qvec = embed(term, embedder)
    expected = []
    for record in CONCEPTS:
        if record.domain != Domain.CONDITION:
            continue
        best = max(float(np.dot(qvec, embed(label, embedder))) for label in record.labels())
        expected.append((record.concept_id, best))
    expected.sort(key=lambda t: (-t[1], t[0]))
    mapping = normalize_term(term, Domain.CONDITION, index, floor=-1.0)
    assert mapping.candidates == pytest.approx(expected)


def test_verifier_filters_candidates(index):
    verifier = MockLLMProvider.from_responses(["316866"])
    mapping = normalize_term("hypertension", Domain.CONDITION, index, verifier=verifier)
    assert mapping.chosen == [316866]
    assert mapping.verified


def test_verifier_multi_select(index):
    # both diabetes concepts clear the floor for this term; the verifier
    # may approve several (chosen stays within the candidate set)
    verifier = MockLLMProvider.from_responses(["201826 and 201820 both apply"])
    mapping = normalize_term("type 2 diabetes mellitus", Domain.CONDITION, index, verifier=verifier)
    assert mapping.chosen == [201826, 201820]
    assert set(mapping.chosen) <= {cid for cid, _ in mapping.candidates}


def test_verifier_rejects_all_fails(index):
    verifier = MockLLMProvider.from_responses(["NONE"])
    with pytest.raises(NormalizationError, match="rejected"):
        normalize_term("hypertension", Domain.CONDITION, index, verifier=verifier)


def test_rebuild_gives_identical_rankings():
    a = build_vocab_index(CONCEPTS, HashingEmbedder())
    b = build_vocab_index(CONCEPTS, HashingEmbedder())
    assert a.candidates("high blood pressure", Domain.CONDITION) == b.candidates(
        "high blood pressure", Domain.CONDITION
    )


# -- placeholder resolution ------------------------------------------------


def generated(sql: str) -> GeneratedSQL:
    return GeneratedSQL(sql=sql, placeholders=parse_placeholders(sql), strategy=Strategy.ZS)


def mapping_for(term: str, domain: Domain, chosen: list[int]) -> ConceptMapping:
    return ConceptMapping(term=term, domain=domain, candidates=[(c, 1.0) for c in chosen], chosen=chosen)


def test_resolve_single_placeholder():
    g = generated("SELECT x FROM t WHERE c IN ([condition@hypertension])")
    out = resolve_placeholders(g, [mapping_for("hypertension", Domain.CONDITION, [316866])])
    assert out == "SELECT x FROM t WHERE c IN (316866)"


def test_resolve_no_placeholders_identity():
    g = generated("SELECT x FROM t")
    assert resolve_placeholders(g, []) == "SELECT x FROM t"


def test_resolve_missing_mapping_names_placeholder():
    g = generated("SELECT x FROM t WHERE a IN ([condition@hypertension]) AND b IN ([drug@metformin])")
    with pytest.raises(ResolutionError, match=r"\[drug@metformin\]"):
        resolve_placeholders(g, [mapping_for("hypertension", Domain.CONDITION, [316866])])


def test_resolve_multiple_ids_comma_separated():
    g = generated("WHERE c IN ([condition@diabetes])")
    out = resolve_placeholders(g, [mapping_for("diabetes", Domain.CONDITION, [201826, 201820])])
    assert out == "WHERE c IN (201826, 201820)"


def test_resolved_output_has_no_placeholders_and_preserves_bytes():
    sql = "SELECT a FROM t WHERE x IN ([drug@aspirin]) AND y = 'keep [this] text'"
    g = generated(sql)
    out = resolve_placeholders(g, [mapping_for("aspirin", Domain.DRUG, [1112807])])
    assert parse_placeholders(out) == []
    assert out.startswith("SELECT a FROM t WHERE x IN (")
    assert out.endswith("AND y = 'keep [this] text'")
