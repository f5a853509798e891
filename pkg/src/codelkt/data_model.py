"""Canonical interaction-log data types, ingestion, and fold splitting.

The canonical interchange format is JSONL: one interaction object per line,
UTF-8, field names exactly as in :class:`Interaction`. A CSV adapter covers
CSEDM-style exports (MainTable joined with code states); its column mapping
is configurable so other tabular dumps can reuse it.

Cross-validation splits are BY STUDENT: an interaction-level split would
leak a student's history between train and test.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Iterable

import yaml

from .errors import DataFormatError, ValidationError

LANGUAGES = ("java", "python", "other")

REQUIRED_FIELDS = ("student_id", "question_id", "answer_code", "correct")

# Default mapping for CSEDM-style CSV exports (MainTable columns, with the
# code text joined in). Problem-as-skill when no concept column exists.
CSEDM_DEFAULT_COLUMNS = {
    "student_id": "SubjectID",
    "question_id": "ProblemID",
    "kc_id": "ProblemID",
    "answer_code": "Code",
    "correct": "Score",
    "timestamp": "ServerTimestamp",
}


@dataclass
class Interaction:
    """One student-question event: who answered what, with which code, and
    whether it was correct."""

    student_id: str
    question_id: str
    answer_code: str
    correct: int
    kc_id: str = ""
    kc_text: str | None = None
    question_text: str | None = None
    timestamp: int | None = None
    language: str = "java"

    def __post_init__(self):
        if self.correct not in (0, 1):
            raise ValidationError(f"correct must be 0 or 1, got {self.correct!r}")
        if not self.student_id:
            raise ValidationError("student_id must be nonempty")
        if not self.question_id:
            raise ValidationError("question_id must be nonempty")
        if self.language not in LANGUAGES:
            raise ValidationError(f"language must be one of {LANGUAGES}, got {self.language!r}")

    @property
    def enriched(self) -> bool:
        return bool(self.kc_text) and bool(self.question_text)

    def to_dict(self) -> dict:
        d = {
            "student_id": self.student_id,
            "kc_id": self.kc_id,
            "question_id": self.question_id,
            "answer_code": self.answer_code,
            "correct": self.correct,
            "language": self.language,
        }
        if self.kc_text is not None:
            d["kc_text"] = self.kc_text
        if self.question_text is not None:
            d["question_text"] = self.question_text
        if self.timestamp is not None:
            d["timestamp"] = self.timestamp
        return d


@dataclass
class InteractionLog:
    """Per-student interaction sequences plus the KC/question vocabularies.

    Immutable by convention after construction; operations that change the
    contents return a new log.
    """

    students: dict[str, list[Interaction]]
    kc_vocabulary: set[str] = field(default_factory=set)
    question_vocabulary: set[str] = field(default_factory=set)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_interactions(cls, interactions: Iterable[Interaction], metadata: dict | None = None) -> "InteractionLog":
        students: dict[str, list[Interaction]] = {}
        for it in interactions:
            students.setdefault(it.student_id, []).append(it)
        for sid, seq in students.items():
            students[sid] = _sort_sequence(seq)
        log = cls(
            students=students,
            kc_vocabulary={it.kc_id for seq in students.values() for it in seq if it.kc_id},
            question_vocabulary={it.question_id for seq in students.values() for it in seq},
            metadata=metadata or {},
        )
        log.validate()
        return log

    def validate(self) -> None:
        seen: set[tuple] = set()
        for sid, seq in self.students.items():
            for it in seq:
                if it.kc_id and it.kc_id not in self.kc_vocabulary:
                    raise ValidationError(f"kc_id {it.kc_id!r} missing from vocabulary")
                if it.question_id not in self.question_vocabulary:
                    raise ValidationError(f"question_id {it.question_id!r} missing from vocabulary")
                key = (it.student_id, it.timestamp, it.question_id, it.answer_code)
                if key in seen:
                    raise ValidationError(
                        f"duplicate interaction for student {sid!r}, question {it.question_id!r}"
                    )
                seen.add(key)

    def interactions(self) -> Iterable[Interaction]:
        for seq in self.students.values():
            yield from seq

    @property
    def num_students(self) -> int:
        return len(self.students)

    @property
    def num_interactions(self) -> int:
        return sum(len(seq) for seq in self.students.values())

    def restrict(self, student_ids: Iterable[str]) -> "InteractionLog":
        """Sub-log containing only the given students, order preserved."""
        wanted = set(student_ids)
        return InteractionLog(
            students={sid: seq for sid, seq in self.students.items() if sid in wanted},
            kc_vocabulary=set(self.kc_vocabulary),
            question_vocabulary=set(self.question_vocabulary),
            metadata=dict(self.metadata),
        )


@dataclass
class FoldSplit:
    """A single cross-validation fold: disjoint train/validation/test student sets."""

    fold_index: int
    train_students: set[str]
    validation_students: set[str]
    test_students: set[str]

    def __post_init__(self):
        if self.train_students & self.validation_students:
            raise ValidationError("train and validation students overlap")
        if self.train_students & self.test_students:
            raise ValidationError("train and test students overlap")
        if self.validation_students & self.test_students:
            raise ValidationError("validation and test students overlap")

    @property
    def all_students(self) -> set[str]:
        return self.train_students | self.validation_students | self.test_students


def _sort_sequence(seq: list[Interaction]) -> list[Interaction]:
    # File order is the fallback sequence order (CSEDM exports are already
    # chronological); per-student stable sort by timestamp only when every
    # interaction carries one.
    if all(it.timestamp is not None for it in seq):
        return sorted(seq, key=lambda it: it.timestamp)
    return list(seq)


def _parse_jsonl_record(obj: dict, line_no: int) -> tuple[Interaction, dict]:
    for name in REQUIRED_FIELDS:
        if name not in obj:
            raise DataFormatError(f"missing required column {name!r}", line=line_no)
    known = {
        "student_id", "kc_id", "question_id", "kc_text", "question_text",
        "answer_code", "correct", "timestamp", "language",
    }
    extras = {k: v for k, v in obj.items() if k not in known}
    try:
        it = Interaction(
            student_id=str(obj["student_id"]),
            kc_id=str(obj.get("kc_id", "")),
            question_id=str(obj["question_id"]),
            kc_text=obj.get("kc_text"),
            question_text=obj.get("question_text"),
            answer_code=str(obj["answer_code"]),
            correct=obj["correct"],
            timestamp=obj.get("timestamp"),
            language=obj.get("language", "java"),
        )
    except ValidationError as exc:
        raise DataFormatError(str(exc), line=line_no) from exc
    return it, extras


def _load_canonical_jsonl(path: Path) -> InteractionLog:
    interactions: list[Interaction] = []
    extra_fields: dict[int, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc.msg}", line=line_no) from exc
            it, extras = _parse_jsonl_record(obj, line_no)
            interactions.append(it)
            if extras:
                extra_fields[line_no] = extras
    metadata = {"source_path": str(path), "format": "canonical_jsonl"}
    if extra_fields:
        metadata["extra_fields"] = extra_fields
    return InteractionLog.from_interactions(interactions, metadata=metadata)


def _parse_timestamp(raw: str) -> int | None:
    raw = raw.strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return int(datetime.fromisoformat(raw).timestamp() * 1000)
    except ValueError:
        return None


def _load_csedm_csv(path: Path, column_map: dict[str, str]) -> InteractionLog:
    interactions = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for target, column in column_map.items():
            if column not in header and target in ("student_id", "question_id", "correct"):
                raise DataFormatError(f"missing required column {column!r}")
        for line_no, row in enumerate(reader, start=2):
            score_raw = row.get(column_map["correct"], "")
            try:
                correct = 1 if float(score_raw) > 0 else 0
            except (TypeError, ValueError):
                raise DataFormatError(
                    f"cannot interpret score {score_raw!r} as correctness", line=line_no
                )
            ts_col = column_map.get("timestamp")
            it = Interaction(
                student_id=str(row[column_map["student_id"]]),
                question_id=str(row[column_map["question_id"]]),
                kc_id=str(row.get(column_map.get("kc_id", ""), "") or row[column_map["question_id"]]),
                answer_code=str(row.get(column_map.get("answer_code", ""), "") or ""),
                correct=correct,
                timestamp=_parse_timestamp(row.get(ts_col, "")) if ts_col else None,
            )
            interactions.append(it)
    return InteractionLog.from_interactions(
        interactions, metadata={"source_path": str(path), "format": "csedm_csv"}
    )


def load_column_map(path: str | Path) -> dict[str, str]:
    """Read a YAML/JSON column mapping file (field name -> CSV column)."""
    text = Path(path).read_text(encoding="utf-8")
    mapping = yaml.safe_load(text)
    if not isinstance(mapping, dict):
        raise DataFormatError(f"column map {path} must be a mapping")
    return {str(k): str(v) for k, v in mapping.items()}


def load_dataset(
    path: str | Path,
    format: str = "canonical_jsonl",
    column_map: dict[str, str] | None = None,
) -> InteractionLog:
    """Load and validate an interaction log from disk."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")
    if format == "canonical_jsonl":
        return _load_canonical_jsonl(path)
    if format == "csedm_csv":
        return _load_csedm_csv(path, {**CSEDM_DEFAULT_COLUMNS, **(column_map or {})})
    raise DataFormatError(f"unknown format {format!r}")


def save_dataset(log: InteractionLog, path: str | Path) -> None:
    """Write a log in the canonical JSONL format (round-trips with load_dataset)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for it in log.interactions():
            fh.write(json.dumps(it.to_dict(), ensure_ascii=False) + "\n")


def split_kfold(
    log: InteractionLog,
    k: int,
    seed: int,
    validation_fraction: float = 0.1,
) -> list[FoldSplit]:
    """Partition students into k folds; each fold carves validation students
    out of its training students at ``validation_fraction``.

    Deterministic for a fixed seed. Test-set sizes differ by at most one
    (the first ``n % k`` folds get the extra student).
    """
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    students = list(log.students.keys())
    if len(students) < k:
        raise ValidationError(f"need at least {k} students for {k} folds, have {len(students)}")
    if not 0 <= validation_fraction < 1:
        raise ValidationError("validation_fraction must be in [0, 1)")

    rng = random.Random(seed)
    shuffled = sorted(students)
    rng.shuffle(shuffled)

    base, extra = divmod(len(shuffled), k)
    chunks: list[list[str]] = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        chunks.append(shuffled[start:start + size])
        start += size

    folds = []
    for i in range(k):
        test = chunks[i]
        rest = [s for j, chunk in enumerate(chunks) if j != i for s in chunk]
        n_val = int(round(len(rest) * validation_fraction))
        if validation_fraction > 0:
            n_val = max(1, n_val)
        validation = rest[:n_val]
        train = rest[n_val:]
        folds.append(FoldSplit(
            fold_index=i,
            train_students=set(train),
            validation_students=set(validation),
            test_students=set(test),
        ))
    return folds


def with_enrichment(it: Interaction, kc_id: str, kc_text: str, question_text: str) -> Interaction:
    """Copy of an interaction with generated KC/question text attached."""
    return replace(it, kc_id=kc_id, kc_text=kc_text, question_text=question_text)
