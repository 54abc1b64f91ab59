"""Deterministic synthetic benchmark suites.

``memorization_suite``: every target has a unique caption-like descriptor
and one training query. ``collision_suite``: unique targets plus pairs of
targets whose descriptors are identical, so their identifiers collide;
evaluation queries add a detail phrase that only the ground truth would
match, and training queries are the bare descriptor wording.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Direction, Query, Target

SYNTHETIC_SEED_OFFSET = 2

ADJECTIVES = """red blue green yellow black white brown orange purple gray golden silver
small large young old tall tiny spotted striped fluffy muddy wet shiny""".split()
SUBJECTS = """dog cat horse child man woman boy girl bird cow sheep goat rabbit fox
deer bear duck chef farmer cyclist skier surfer painter dancer""".split()
VERBS = """runs jumps sits walks sleeps plays rests waits climbs swims rolls stands
eats drinks reads paints sings dances kneels hides""".split()
PLACES = """park beach field street garden river forest kitchen bridge market
meadow harbor desert stadium library rooftop courtyard orchard canyon island""".split()
OBJECTS = """ball kite bench umbrella bicycle fence tree lamp boat wagon basket
guitar ladder barrel tent statue fountain hammock scooter drum""".split()
DETAILS = """at dawn|at dusk|in heavy rain|under bright sunlight|during winter|in autumn fog
|beside a crowd|with nobody around|after a storm|on a windy afternoon|at midnight
|in early spring""".replace("\n", "").split("|")


@dataclass(frozen=True)
class Suite:
    corpus: Corpus
    train_queries: list[Query]
    eval_queries: list[Query]


def _descriptors(n: int, rng: np.random.Generator) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    while len(out) < n:
        a, s, v, p, a2, o = (
            ADJECTIVES[rng.integers(len(ADJECTIVES))],
            SUBJECTS[rng.integers(len(SUBJECTS))],
            VERBS[rng.integers(len(VERBS))],
            PLACES[rng.integers(len(PLACES))],
            ADJECTIVES[rng.integers(len(ADJECTIVES))],
            OBJECTS[rng.integers(len(OBJECTS))],
        )
        text = f"a {a} {s} {v} in the {p} near a {a2} {o}"
        if text not in seen:
            seen.add(text)
            out.append(text)
    return out


def _train_text(descriptor: str) -> str:
    return f"there is {descriptor}"


def memorization_suite(n: int = 500, seed: int = 0, direction: Direction = Direction.TO_IMAGE) -> Suite:
    rng = np.random.default_rng(seed + SYNTHETIC_SEED_OFFSET)
    descs = _descriptors(n, rng)
    targets = tuple(Target(f"t{i:04d}", d, direction) for i, d in enumerate(descs))
    queries = [Query(f"q{i:04d}", _train_text(d), (t.target_id,)) for i, (d, t) in enumerate(zip(descs, targets))]
    return Suite(Corpus(targets, direction), queries, list(queries))


def collision_suite(
    n_unique: int = 100,
    n_pairs: int = 50,
    seed: int = 0,
    direction: Direction = Direction.TO_IMAGE,
) -> Suite:
    rng = np.random.default_rng(seed + SYNTHETIC_SEED_OFFSET + 1)
    descs = _descriptors(n_unique + n_pairs, rng)
    targets: list[Target] = []
    train: list[Query] = []
    evals: list[Query] = []
    for i, d in enumerate(descs):
        copies = 1 if i < n_unique else 2
        details = rng.choice(len(DETAILS), size=copies, replace=False)
        for c in range(copies):
            tid = f"t{len(targets):04d}"
            targets.append(Target(tid, d, direction))
            train.append(Query(f"train-{tid}", _train_text(d), (tid,)))
            evals.append(Query(f"q-{tid}", f"{_train_text(d)} {DETAILS[details[c]]}", (tid,)))
    return Suite(Corpus(tuple(targets), direction), train, evals)
