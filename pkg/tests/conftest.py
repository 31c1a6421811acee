import json
from pathlib import Path

import pytest

from cohortgen.config import AppConfig, build_pipeline

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIGS = REPO_ROOT / "configs"

DEMO_CRITERIA = (CONFIGS / "demo_criteria.txt").read_text(encoding="utf-8")
DEMO_TRANSCRIPT = CONFIGS / "demo_transcript.json"


def demo_config(n_persons: int = 1000, seed: int = 7) -> AppConfig:
    return AppConfig.from_dict(
        {
            "llm": {"kind": "mock", "transcript": str(DEMO_TRANSCRIPT)},
            "backend": {"kind": "synthetic", "seed": seed, "n_persons": n_persons},
        }
    )


@pytest.fixture(scope="session")
def demo_pipeline():
    """Pipeline over the packaged KBs, a 1000-person synthetic database,
    and the scripted demo transcript."""
    return build_pipeline(demo_config())


@pytest.fixture()
def demo_transcript_turns():
    return json.loads(DEMO_TRANSCRIPT.read_text(encoding="utf-8"))["turns"]
