import json
import random

import pytest

from genret.text import EOS


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def jsonl(tmp_path):
    counter = iter(range(10**6))

    def _write(records, name=None):
        return write_jsonl(tmp_path / (name or f"f{next(counter)}.jsonl"), records)

    return _write


def random_sid_table(rng: random.Random, n: int, globals_=4, words=6, m=3):
    """Random token sequences with plenty of shared prefixes and some collisions."""
    g = [f"g{i}" for i in range(globals_)]
    w = [f"w{i}" for i in range(words)]
    return {
        f"t{i:03d}": (rng.choice(g), *(rng.choice(w) for _ in range(m)), EOS)
        for i in range(n)
    }


# acceptance results, echoed in the terminal summary so they survive output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
