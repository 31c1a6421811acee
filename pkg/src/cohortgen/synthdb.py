"""Seeded synthetic OMOP-CDM database for hermetic runs.

Generates a small claims-like database with referential integrity:
every event row points at a real PERSON, visits reference PROVIDER,
events fall inside the person's observation period, and all concept ids
exist in CONCEPT. Fully deterministic for a given spec (seed included),
so tests can assert on exact row sets.
"""

from __future__ import annotations

import datetime as dt
import random
from dataclasses import dataclass, field
from pathlib import Path

from .assets import concepts_path, synonyms_path
from .backend import SqliteBackend
from .masking import Domain
from .normalize import ConceptRecord, load_vocabulary

GENDER_MALE = 8507
GENDER_FEMALE = 8532
RACE_CONCEPTS = (8527, 8516, 8515)
ETHNICITY_CONCEPTS = (38003563, 38003564)
TYPE_EHR = 32817
SPECIALTY_CONCEPTS = (38004446, 38004451, 38004469)

_BUILTIN_CONCEPTS = [
    (GENDER_MALE, "MALE", "Gender"),
    (GENDER_FEMALE, "FEMALE", "Gender"),
    (8527, "White", "Race"),
    (8516, "Black or African American", "Race"),
    (8515, "Asian", "Race"),
    (38003563, "Hispanic or Latino", "Ethnicity"),
    (38003564, "Not Hispanic or Latino", "Ethnicity"),
    (TYPE_EHR, "EHR", "Type Concept"),
    (38004446, "General Practice", "Provider"),
    (38004451, "Cardiology", "Provider"),
    (38004469, "Psychiatry", "Provider"),
]

_SCHEMA = """
CREATE TABLE person (
    person_id INTEGER PRIMARY KEY,
    gender_concept_id INTEGER NOT NULL,
    year_of_birth INTEGER NOT NULL,
    month_of_birth INTEGER NOT NULL,
    day_of_birth INTEGER NOT NULL,
    race_concept_id INTEGER NOT NULL,
    ethnicity_concept_id INTEGER NOT NULL
);
CREATE TABLE observation_period (
    observation_period_id INTEGER PRIMARY KEY,
    person_id INTEGER NOT NULL REFERENCES person(person_id),
    observation_period_start_date TEXT NOT NULL,
    observation_period_end_date TEXT NOT NULL,
    period_type_concept_id INTEGER NOT NULL
);
CREATE TABLE provider (
    provider_id INTEGER PRIMARY KEY,
    provider_name TEXT NOT NULL,
    specialty_concept_id INTEGER NOT NULL
);
CREATE TABLE visit_occurrence (
    visit_occurrence_id INTEGER PRIMARY KEY,
    person_id INTEGER NOT NULL REFERENCES person(person_id),
    visit_concept_id INTEGER NOT NULL,
    visit_start_date TEXT NOT NULL,
    visit_end_date TEXT NOT NULL,
    visit_type_concept_id INTEGER NOT NULL,
    provider_id INTEGER REFERENCES provider(provider_id)
);
CREATE TABLE condition_occurrence (
    condition_occurrence_id INTEGER PRIMARY KEY,
    person_id INTEGER NOT NULL REFERENCES person(person_id),
    condition_concept_id INTEGER NOT NULL,
    condition_start_date TEXT NOT NULL,
    condition_end_date TEXT,
    condition_type_concept_id INTEGER NOT NULL,
    visit_occurrence_id INTEGER REFERENCES visit_occurrence(visit_occurrence_id)
);
CREATE TABLE drug_exposure (
    drug_exposure_id INTEGER PRIMARY KEY,
    person_id INTEGER NOT NULL REFERENCES person(person_id),
    drug_concept_id INTEGER NOT NULL,
    drug_exposure_start_date TEXT NOT NULL,
    drug_exposure_end_date TEXT NOT NULL,
    drug_type_concept_id INTEGER NOT NULL,
    quantity REAL,
    visit_occurrence_id INTEGER REFERENCES visit_occurrence(visit_occurrence_id)
);
CREATE TABLE drug_era (
    drug_era_id INTEGER PRIMARY KEY,
    person_id INTEGER NOT NULL REFERENCES person(person_id),
    drug_concept_id INTEGER NOT NULL,
    drug_era_start_date TEXT NOT NULL,
    drug_era_end_date TEXT NOT NULL,
    drug_exposure_count INTEGER NOT NULL
);
CREATE TABLE procedure_occurrence (
    procedure_occurrence_id INTEGER PRIMARY KEY,
    person_id INTEGER NOT NULL REFERENCES person(person_id),
    procedure_concept_id INTEGER NOT NULL,
    procedure_date TEXT NOT NULL,
    procedure_type_concept_id INTEGER NOT NULL,
    provider_id INTEGER REFERENCES provider(provider_id),
    visit_occurrence_id INTEGER REFERENCES visit_occurrence(visit_occurrence_id)
);
CREATE TABLE measurement (
    measurement_id INTEGER PRIMARY KEY,
    person_id INTEGER NOT NULL REFERENCES person(person_id),
    measurement_concept_id INTEGER NOT NULL,
    measurement_date TEXT NOT NULL,
    value_as_number REAL,
    unit_concept_id INTEGER,
    visit_occurrence_id INTEGER REFERENCES visit_occurrence(visit_occurrence_id)
);
CREATE TABLE concept (
    concept_id INTEGER PRIMARY KEY,
    concept_name TEXT NOT NULL,
    domain_id TEXT NOT NULL,
    vocabulary_id TEXT NOT NULL,
    concept_class_id TEXT NOT NULL,
    standard_concept TEXT,
    concept_code TEXT
);
"""


@dataclass(frozen=True)
class SyntheticDbSpec:
    seed: int = 7
    n_persons: int = 200
    date_range: tuple[dt.date, dt.date] = (dt.date(2018, 1, 1), dt.date(2022, 12, 31))
    densities: dict = field(
        default_factory=lambda: {
            "visit_occurrence": 4.0,
            "condition_occurrence": 3.0,
            "drug_exposure": 2.5,
            "procedure_occurrence": 1.5,
            "measurement": 2.0,
        }
    )

    def __post_init__(self):
        if self.n_persons < 1:
            raise ValueError("n_persons must be >= 1")
        if self.date_range[0] > self.date_range[1]:
            raise ValueError("date_range start must not be after end")


def _event_count(rng: random.Random, rate: float) -> int:
    """Small deterministic count with mean ~rate (geometric-ish spread)."""
    base = int(rate)
    frac = rate - base
    count = base + (1 if rng.random() < frac else 0)
    jitter = rng.choice((-1, 0, 0, 1))
    return max(0, count + jitter)


def _rand_date(rng: random.Random, start: dt.date, end: dt.date) -> dt.date:
    span = (end - start).days
    return start + dt.timedelta(days=rng.randint(0, max(span, 0)))


def generate_synthetic_omop(
    spec: SyntheticDbSpec,
    path: str | Path = ":memory:",
    concepts: list[ConceptRecord] | None = None,
) -> SqliteBackend:
    """Create and populate a synthetic OMOP database; returns the backend."""
    if concepts is None:
        concepts = load_vocabulary(concepts_path(), synonyms_path())
    by_domain: dict[Domain, list[int]] = {}
    for record in concepts:
        by_domain.setdefault(record.domain, []).append(record.concept_id)
    visit_concepts = by_domain.get(Domain.VISIT, [9202])

    backend = SqliteBackend(path)
    backend.executescript(_SCHEMA)

    concept_rows = [
        (r.concept_id, r.name, r.domain.value.title(), r.vocabulary, "Clinical", "S", str(r.concept_id))
        for r in concepts
    ] + [(cid, name, domain, "OMOP", domain, "S", str(cid)) for cid, name, domain in _BUILTIN_CONCEPTS]
    backend.executemany("INSERT INTO concept VALUES (?,?,?,?,?,?,?)", concept_rows)

    rng = random.Random(spec.seed)
    range_start, range_end = spec.date_range

    providers = [
        (pid, f"Provider {pid}", SPECIALTY_CONCEPTS[pid % len(SPECIALTY_CONCEPTS)])
        for pid in range(1, 11)
    ]
    backend.executemany("INSERT INTO provider VALUES (?,?,?)", providers)

    persons, periods, visits = [], [], []
    conditions, drugs, procedures, measurements = [], [], [], []
    visit_id = condition_id = drug_id = procedure_id = measurement_id = 0
    exposures_by_person_drug: dict[tuple[int, int], list[tuple[dt.date, dt.date]]] = {}

    for person_id in range(1, spec.n_persons + 1):
        gender = GENDER_MALE if rng.random() < 0.5 else GENDER_FEMALE
        yob = rng.randint(1930, 2005)
        persons.append(
            (
                person_id,
                gender,
                yob,
                rng.randint(1, 12),
                rng.randint(1, 28),
                rng.choice(RACE_CONCEPTS),
                rng.choice(ETHNICITY_CONCEPTS),
            )
        )
        obs_start = _rand_date(rng, range_start, range_start + dt.timedelta(days=365))
        obs_end = min(obs_start + dt.timedelta(days=rng.randint(400, 1700)), range_end)
        periods.append((person_id, person_id, obs_start.isoformat(), obs_end.isoformat(), TYPE_EHR))

        person_visits = []
        for _ in range(_event_count(rng, spec.densities.get("visit_occurrence", 4.0))):
            visit_id += 1
            concept = rng.choices(visit_concepts, weights=None, k=1)[0]
            start = _rand_date(rng, obs_start, obs_end)
            length = rng.randint(0, 5) if concept == 9201 else 0
            end = min(start + dt.timedelta(days=length), obs_end)
            provider_id = rng.randint(1, 10)
            visits.append(
                (visit_id, person_id, concept, start.isoformat(), end.isoformat(), TYPE_EHR, provider_id)
            )
            person_visits.append(visit_id)

        def linked_visit() -> int | None:
            if person_visits and rng.random() < 0.7:
                return rng.choice(person_visits)
            return None

        for _ in range(_event_count(rng, spec.densities.get("condition_occurrence", 3.0))):
            condition_id += 1
            start = _rand_date(rng, obs_start, obs_end)
            end = start + dt.timedelta(days=rng.randint(0, 60))
            conditions.append(
                (
                    condition_id,
                    person_id,
                    rng.choice(by_domain[Domain.CONDITION]),
                    start.isoformat(),
                    end.isoformat(),
                    TYPE_EHR,
                    linked_visit(),
                )
            )

        for _ in range(_event_count(rng, spec.densities.get("drug_exposure", 2.5))):
            drug_id += 1
            concept = rng.choice(by_domain[Domain.DRUG])
            start = _rand_date(rng, obs_start, obs_end)
            end = min(start + dt.timedelta(days=rng.randint(7, 90)), obs_end)
            drugs.append(
                (
                    drug_id,
                    person_id,
                    concept,
                    start.isoformat(),
                    end.isoformat(),
                    TYPE_EHR,
                    float(rng.randint(30, 90)),
                    linked_visit(),
                )
            )
            exposures_by_person_drug.setdefault((person_id, concept), []).append((start, end))

        for _ in range(_event_count(rng, spec.densities.get("procedure_occurrence", 1.5))):
            procedure_id += 1
            procedures.append(
                (
                    procedure_id,
                    person_id,
                    rng.choice(by_domain[Domain.PROCEDURE]),
                    _rand_date(rng, obs_start, obs_end).isoformat(),
                    TYPE_EHR,
                    rng.randint(1, 10),
                    linked_visit(),
                )
            )

        for _ in range(_event_count(rng, spec.densities.get("measurement", 2.0))):
            measurement_id += 1
            measurements.append(
                (
                    measurement_id,
                    person_id,
                    rng.choice(by_domain[Domain.MEASUREMENT]),
                    _rand_date(rng, obs_start, obs_end).isoformat(),
                    round(rng.uniform(0.5, 200.0), 1),
                    None,
                    linked_visit(),
                )
            )

    # derive drug eras: exposures of one drug merged across gaps <= 30 days
    eras = []
    era_id = 0
    for (person_id, concept), spans in sorted(exposures_by_person_drug.items()):
        spans.sort()
        era_start, era_end, count = spans[0][0], spans[0][1], 1
        for start, end in spans[1:]:
            if (start - era_end).days <= 30:
                era_end = max(era_end, end)
                count += 1
            else:
                era_id += 1
                eras.append(
                    (era_id, person_id, concept, era_start.isoformat(), era_end.isoformat(), count)
                )
                era_start, era_end, count = start, end, 1
        era_id += 1
        eras.append((era_id, person_id, concept, era_start.isoformat(), era_end.isoformat(), count))

    backend.executemany("INSERT INTO person VALUES (?,?,?,?,?,?,?)", persons)
    backend.executemany("INSERT INTO observation_period VALUES (?,?,?,?,?)", periods)
    backend.executemany("INSERT INTO visit_occurrence VALUES (?,?,?,?,?,?,?)", visits)
    backend.executemany("INSERT INTO condition_occurrence VALUES (?,?,?,?,?,?,?)", conditions)
    backend.executemany("INSERT INTO drug_exposure VALUES (?,?,?,?,?,?,?,?)", drugs)
    backend.executemany("INSERT INTO drug_era VALUES (?,?,?,?,?,?)", eras)
    backend.executemany("INSERT INTO procedure_occurrence VALUES (?,?,?,?,?,?,?)", procedures)
    backend.executemany("INSERT INTO measurement VALUES (?,?,?,?,?,?,?)", measurements)
    return backend


def dump_database(backend: SqliteBackend) -> str:
    """Canonical text dump of schema and rows, for determinism checks."""
    return "\n".join(backend._conn.iterdump())
