"""Synthetic interaction-log generators for desk-scale runs and tests.

These logs are small enough to train in seconds and are constructed so
that the toy text encoder (and the DKT baseline) can actually learn them:
the separable variants carry the label-determining signal lexically in
the KC/question text, so the task is linearly separable in the encoder's
feature space.
"""

from __future__ import annotations

import random

from .data_model import Interaction, InteractionLog


def random_log(
    seed: int,
    n_students: int = 12,
    n_questions: int = 8,
    n_kcs: int = 4,
    min_len: int = 1,
    max_len: int = 12,
    enriched: bool = True,
) -> InteractionLog:
    """A log with uniformly random correctness; no learnable structure."""
    rng = random.Random(seed)
    interactions = []
    for s in range(n_students):
        sid = f"s{s:03d}"
        ts = 0
        for _ in range(rng.randint(min_len, max_len)):
            q = rng.randrange(n_questions)
            kc = q % n_kcs
            ts += rng.randint(1, 1000)
            interactions.append(Interaction(
                student_id=sid,
                question_id=f"q{q}",
                kc_id=f"kc{kc}",
                kc_text=f"skill {kc} drills" if enriched else None,
                question_text=f"exercise {q} on skill {kc}" if enriched else None,
                answer_code=f"int f{q}() {{ return {rng.randrange(100)}; }}",
                correct=rng.randint(0, 1),
                timestamp=ts,
            ))
    return InteractionLog.from_interactions(interactions)


def separable_log(
    seed: int,
    n_students: int = 24,
    n_kcs: int = 6,
    seq_len: int = 12,
    noise: float = 0.0,
) -> InteractionLog:
    """Correctness equals the parity of the KC index.

    The parity word is spelled out in the KC and question text, with the
    question text ending on it. The toy encoder's mask readout weights
    nearby tokens most, so the parity token right before the mask slot is
    the dominant feature and a linear readout separates the classes for
    any embedding seed.
    """
    rng = random.Random(seed)
    interactions = []
    for s in range(n_students):
        sid = f"s{s:03d}"
        ts = 0
        for _ in range(seq_len):
            kc = rng.randrange(n_kcs)
            parity = "even" if kc % 2 == 0 else "odd"
            correct = 1 if kc % 2 == 0 else 0
            if noise > 0 and rng.random() < noise:
                correct = 1 - correct
            q = kc * 10 + rng.randrange(3)
            ts += rng.randint(1, 1000)
            interactions.append(Interaction(
                student_id=sid,
                question_id=f"q{q}",
                kc_id=f"kc{kc}",
                kc_text=f"skill{kc} {parity} arithmetic",
                question_text=f"solve drill {q} about skill{kc} difficulty {parity}",
                answer_code=f"int solve{q}() {{ return {kc}; }}",
                correct=correct,
                timestamp=ts,
            ))
    return InteractionLog.from_interactions(interactions)


def skill_parity_log(
    seed: int,
    n_students: int = 24,
    n_skills: int = 6,
    seq_len: int = 12,
) -> InteractionLog:
    """DKT-friendly variant: skill k is always answered correctly iff k is even.

    Only kc_id matters (no enrichment needed), so the one-hot baseline can
    learn it from per-skill statistics alone.
    """
    rng = random.Random(seed)
    interactions = []
    for s in range(n_students):
        sid = f"s{s:03d}"
        ts = 0
        for _ in range(seq_len):
            skill = rng.randrange(n_skills)
            ts += rng.randint(1, 1000)
            interactions.append(Interaction(
                student_id=sid,
                question_id=f"q{skill}_{rng.randrange(4)}",
                kc_id=f"kc{skill}",
                answer_code=f"return {skill};",
                correct=1 if skill % 2 == 0 else 0,
                timestamp=ts,
            ))
    return InteractionLog.from_interactions(interactions)
