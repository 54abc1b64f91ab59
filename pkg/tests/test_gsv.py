import itertools
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import numpy as np
import pytest

from genret.corpus import Corpus, Direction, Query
from genret.decode import RankedEntry, RankedResult
from genret.embed import HashingEmbedder, cosine
from genret.gsv import (
    DEFAULT_GSV_K,
    Candidate,
    ConstantVerifier,
    EmbeddingVerifier,
    HttpVerifier,
    OracleVerifier,
    VerifierFailure,
    aggregate_candidates,
    build_prompt,
    make_verifier,
    retrieve,
    verify,
)
from genret.lm import train
from genret.pipeline import Retriever, training_pairs
from genret.sid.table import SidParams, StructuredIdentifier, build_sid_table
from genret.text import EOS
from genret.trie import build_trie

GOLDEN = Path(__file__).parent / "golden"
INSTRUCTION = "Please select the image that best matches the last sentence based on the image with its keywords."


def _cand(tid, score=0.0, desc=None, lex=("x",), tokens=None):
    return Candidate(tid, tokens or ("g", *lex, EOS), score, desc or f"descriptor {tid}", tuple(lex))


def _golden_candidates():
    return [
        Candidate("t0", ("dog", "brown", "frisbee", "park", "pad", EOS), -0.1,
                  "A brown dog catches a frisbee in the park.", ("brown", "frisbee", "park", "pad")),
        Candidate("t1", ("dog", "black", "ball", "grass", "pad", EOS), -1.5,
                  "A black dog  chases a ball on the grass", ("black", "ball", "grass", "pad")),
    ]


def test_default_k():
    assert DEFAULT_GSV_K == 10


def test_aggregate_short_list():
    ranked = RankedResult(tuple(RankedEntry(f"t{i}", -i, ("g", EOS)) for i in range(3)))
    sids = {f"t{i}": StructuredIdentifier("g", ("x",)) for i in range(3)}
    cands = aggregate_candidates(ranked, 10, {t: t.upper() for t in sids}, sids)
    assert [c.target_id for c in cands] == ["t0", "t1", "t2"]
    assert cands[1].descriptor == "T1" and cands[1].score == -1
    with pytest.raises(ValueError):
        aggregate_candidates(ranked, 0, {}, sids)


def test_prompt_single():
    p = build_prompt("a dog runs", [_cand("t0", desc="a dog on grass", lex=("dog", "grass"))])
    assert p == f"Image:\na dog on grass; dog grass.\nSentence: a dog runs.\n{INSTRUCTION}\n"


def test_prompt_ten_in_order():
    cands = [_cand(f"t{i}", desc=f"picture {i}") for i in range(10)]
    lines = build_prompt("q", cands).splitlines()
    assert lines[1:11] == [f"picture {i}; x." for i in range(10)]
    assert len(lines) == 13


@pytest.mark.parametrize("direction", ["to_image", "to_text"])
def test_prompt_golden(direction):
    expected = (GOLDEN / f"prompt_{direction}.txt").read_bytes()
    got = build_prompt("A dog plays fetch in a park.", _golden_candidates(), direction)
    assert got.encode("utf-8") == expected


def test_prompt_needs_candidates():
    with pytest.raises(ValueError):
        build_prompt("q", [])


def test_constant_is_stable():
    cands = [_cand(f"t{i}", -i) for i in range(6)]
    assert verify(ConstantVerifier(), "q", cands) == cands


def test_oracle_promotes():
    cands = [_cand(f"t{i}", -i) for i in range(8)]
    out = verify(OracleVerifier({"q": ["t4"]}), "q", cands)
    assert out[0].target_id == "t4"
    assert [c.target_id for c in out[1:]] == ["t0", "t1", "t2", "t3", "t5", "t6", "t7"]


def test_embedding_verifier_cosine_oracle():
    provider = HashingEmbedder()
    cands = [
        _cand("a", desc="a cat sleeps on a sofa", lex=("cat", "sofa")),
        _cand("b", desc="a dog runs in the park", lex=("dog", "park")),
        _cand("c", desc="a dog sleeps in the park", lex=("dog", "sleeps")),
    ]
    query = "a dog sleeping in a park"
    q = provider.embed_one(query)
    sims = [cosine(q, provider.embed_one(f"{c.descriptor} {' '.join(c.lexical)}")) for c in cands]
    scores = EmbeddingVerifier(provider).score(query, cands)
    np.testing.assert_allclose(scores, sims, rtol=1e-9)
    expected = [cands[i].target_id for i in sorted(range(3), key=lambda i: -sims[i])]
    assert [c.target_id for c in verify(EmbeddingVerifier(provider), query, cands)] == expected


class _Scripted:
    name = "scripted"

    def __init__(self, scores=None, exc=None):
        self.scores, self.exc = scores, exc

    def score(self, query, candidates):
        if self.exc:
            raise self.exc
        return self.scores


def test_partial_failure_keeps_slot(caplog):
    cands = [_cand(f"t{i}") for i in range(4)]
    out = verify(_Scripted([0.1, None, 0.9, 0.5]), "q", cands)
    assert [c.target_id for c in out] == ["t2", "t1", "t3", "t0"]
    assert "t1" in caplog.text


def test_total_failure_keeps_order():
    cands = [_cand(f"t{i}") for i in range(3)]
    assert verify(_Scripted(exc=VerifierFailure("down")), "q", cands) == cands
    assert verify(_Scripted([1.0]), "q", cands) == cands


def test_verify_is_permutation():
    cands = [_cand(f"t{i}", -i) for i in range(5)]
    for scores in itertools.product([0.0, 1.0, None], repeat=5):
        out = verify(_Scripted(list(scores)), "q", cands)
        assert sorted(c.target_id for c in out) == [c.target_id for c in cands]


class _Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.server.requests.append(body)
        scores = {tid: (1.0 if tid == "t2" else 0.0) for tid in body["candidate_ids"]}
        scores.pop("t1", None)
        data = json.dumps({"scores": scores}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    server.requests = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


def test_http_verifier(http_server, monkeypatch):
    monkeypatch.setenv("GENRET_VERIFIER_URL", f"http://127.0.0.1:{http_server.server_port}/")
    cands = [_cand(f"t{i}") for i in range(3)]
    v = HttpVerifier()
    assert v.score("a query", cands) == [0.0, None, 1.0]
    req = http_server.requests[0]
    assert req["candidate_ids"] == ["t0", "t1", "t2"]
    assert req["prompt"] == build_prompt("a query", cands)
    assert [c.target_id for c in verify(v, "a query", cands)] == ["t2", "t1", "t0"]


def test_http_unreachable():
    v = HttpVerifier("http://127.0.0.1:9/", timeout=0.5)
    cands = [_cand("a"), _cand("b")]
    with pytest.raises(VerifierFailure):
        v.score("q", cands)
    assert verify(v, "q", cands) == cands


def test_http_needs_url(monkeypatch):
    monkeypatch.delenv("GENRET_VERIFIER_URL", raising=False)
    with pytest.raises(ValueError):
        HttpVerifier()


def test_make_verifier():
    assert make_verifier("none") is None
    assert isinstance(make_verifier("embedding"), EmbeddingVerifier)
    with pytest.raises(ValueError):
        make_verifier("oracle")
    with pytest.raises(ValueError):
        make_verifier("gpt")


# end-to-end on a tiny corpus with one colliding pair

DESCS = {
    "t0": "a brown dog catches a frisbee in the park",
    "t1": "a black cat sleeps on a red sofa",
    "t2": "two children build a sandcastle at the beach",
    "t3": "two children build a sandcastle at the beach",
}


@pytest.fixture(scope="module")
def tiny():
    corpus = Corpus.from_pairs(list(DESCS.items()))
    table = build_sid_table(corpus, SidParams(k=2))
    queries = [Query(f"q{t}", f"there is {d} ({t})", (t,)) for t, d in DESCS.items()]
    model = train(training_pairs(queries, table))
    return corpus, table, queries, model


def test_retrieve_memorized(tiny):
    corpus, table, queries, model = tiny
    r = Retriever(corpus, table, model)
    assert r.retrieve(queries[0].text).target_ids[0] == "t0"
    assert r.retrieve(queries[1].text).target_ids[0] == "t1"


def test_collision_no_verifier_half(tiny):
    corpus, table, queries, model = tiny
    assert table.collisions[0].members == ("t2", "t3")
    r = Retriever(corpus, table, model)
    hits = [r.retrieve(q.text).target_ids[0] == q.gt_targets[0] for q in queries[2:]]
    assert hits == [True, False]
    ranked = r.retrieve(queries[3].text)
    assert ranked[0].score == ranked[1].score


@pytest.mark.parametrize("gsv", ["topk", "collisions"])
def test_collision_oracle_resolves(tiny, gsv):
    corpus, table, queries, model = tiny
    r = Retriever(corpus, table, model, verifier=OracleVerifier.from_queries(queries), gsv=gsv)
    for q in queries:
        assert r.retrieve(q.text).target_ids[0] == q.gt_targets[0]


def test_tail_untouched(tiny):
    corpus, table, queries, model = tiny
    trie = build_trie(table.sids)
    base = retrieve(queries[0].text, model, trie, table.sids, DESCS, None, beam_size=10)
    oracle = OracleVerifier({queries[0].text: [base.target_ids[-1]]})
    out = retrieve(queries[0].text, model, trie, table.sids, DESCS, oracle, beam_size=10, k=2)
    assert out.target_ids[2:] == base.target_ids[2:]
    assert sorted(out.target_ids[:2]) == sorted(base.target_ids[:2])


def test_collisions_mode_only_touches_groups(tiny):
    corpus, table, queries, model = tiny
    # an oracle that prefers a non-colliding target changes nothing in collisions mode
    trie = build_trie(table.sids)
    q = queries[2].text
    base = retrieve(q, model, trie, table.sids, DESCS, None)
    oracle = OracleVerifier({q: [base.target_ids[-1]]})
    out = retrieve(q, model, trie, table.sids, DESCS, oracle, gsv="collisions")
    assert out.target_ids == base.target_ids


def test_retrieve_gsv_off(tiny):
    corpus, table, queries, model = tiny
    trie = build_trie(table.sids)
    oracle = OracleVerifier.from_queries(queries)
    a = retrieve(queries[3].text, model, trie, table.sids, DESCS, oracle, gsv="off")
    b = retrieve(queries[3].text, model, trie, table.sids, DESCS, None)
    assert a == b
    with pytest.raises(ValueError):
        retrieve(queries[3].text, model, trie, table.sids, DESCS, oracle, gsv="bogus")
