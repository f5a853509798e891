import json
from pathlib import Path

import pytest

from codelkt.data_model import Interaction, InteractionLog

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


def make_interaction(student="s1", question="q1", kc="kc1", correct=1, ts=None,
                     kc_text="loops", question_text="sum 1..n", code="return 0;"):
    return Interaction(
        student_id=student, question_id=question, kc_id=kc,
        kc_text=kc_text, question_text=question_text,
        answer_code=code, correct=correct, timestamp=ts,
    )


@pytest.fixture
def tiny_log() -> InteractionLog:
    """3 students, 10 interactions; the per-student counts are 4/3/3."""
    interactions = []
    counts = {"s1": 4, "s2": 3, "s3": 3}
    ts = 0
    for student, n in counts.items():
        for i in range(n):
            ts += 10
            interactions.append(make_interaction(
                student=student, question=f"q{i}", kc=f"kc{i % 2}",
                correct=i % 2, ts=ts, code=f"return {i};",
            ))
    return InteractionLog.from_interactions(interactions)


def write_jsonl(path: Path, records: list[dict]) -> None:
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
