"""Independent oracles and generators shared by the test modules."""

from __future__ import annotations

import random
from fractions import Fraction
from itertools import product

from garment_edit.scoring import DependencyGraph, Question, QuestionCategory, Verdict

ICQ, IDQ, CPQ = QuestionCategory.ICQ, QuestionCategory.IDQ, QuestionCategory.CPQ


def q(qid, category, parents=(), text=None):
    return Question(qid, text or f"Question {qid}?", QuestionCategory.parse(category), frozenset(parents))


def graph(*questions, sample_id="s"):
    return DependencyGraph.from_questions(questions, sample_id=sample_id)


def random_graph(rng: random.Random, max_n: int = 10, min_n: int = 1) -> DependencyGraph:
    n = rng.randint(min_n, max_n)
    labels = [f"n{i}" for i in range(n)]
    rng.shuffle(labels)
    nodes: list[Question] = []
    for i in range(n):
        earlier = [x for x in nodes if x.category is not CPQ]
        if i == 0 or not earlier:
            cat = ICQ if i == 0 or rng.random() < 0.5 else CPQ
        else:
            cat = rng.choice([ICQ, IDQ, IDQ, IDQ, CPQ])
        parents: set[str] = set()
        if cat is IDQ:
            k = rng.randint(1, min(3, len(earlier)))
            parents = {x.id for x in rng.sample(earlier, k)}
        nodes.append(Question(labels[i], f"Is property {labels[i]} present?", cat, frozenset(parents)))
    rng.shuffle(nodes)
    return DependencyGraph.from_questions(nodes, sample_id="rand")


def all_paths_up(g: DependencyGraph, qid: str):
    """Every path from ``qid`` upward to a root, by exhaustive enumeration."""
    parents = g.questions[qid].parents
    if not parents:
        return [[qid]]
    out = []
    for p in parents:
        for path in all_paths_up(g, p):
            out.append([qid] + path)
    return out


def brute_force_score(g: DependencyGraph, verdicts: dict[str, str], w_icq=Fraction(3), w_cpq=Fraction(1), t_decay=Fraction(3, 10)):
    """FEditScore computed the slow way: path enumeration, exact fractions."""
    num = Fraction(0)
    den = Fraction(0)
    for qid, question in g.questions.items():
        paths = all_paths_up(g, qid)
        ancestors = {node for path in paths for node in path[1:]}
        if question.category is ICQ:
            w = Fraction(w_icq)
        elif question.category is CPQ:
            w = Fraction(w_cpq)
        else:
            icq_dists = [i for path in paths for i, node in enumerate(path) if g.questions[node].category is ICQ]
            depth = min(icq_dists)
            w = 1 + Fraction(w_icq) * Fraction(t_decay) ** depth
        ok = verdicts[qid] == "yes" and all(verdicts[a] == "yes" for a in ancestors)
        den += w
        num += w if ok else 0
    return num / den


def all_assignments(g: DependencyGraph):
    ids = sorted(g.questions)
    for bits in product(("no", "yes"), repeat=len(ids)):
        yield dict(zip(ids, bits))


# raw VQA reply -> expected verdict; the table is the oracle
Y, N, U = Verdict.YES, Verdict.NO, Verdict.UNPARSEABLE
VQA_TABLE = [
    ("Yes.", Y),
    ("yes", Y),
    ("YES", Y),
    ("  Yes, the sweater is blue.", Y),
    ('"Yes"', Y),
    ("**Yes**", Y),
    ("Answer: yes", Y),
    ("Yes!\nThe collar is intact.", Y),
    ("no, the sleeve is long", N),
    ("No.", N),
    ("NO", N),
    ("  no", N),
    ("Answer: No, it is red.", N),
    ("- No", N),
    ("the image shows a sweater", U),
    ("", U),
    ("Nope", U),
    ("Not sure", U),
    ("yesterday's style", U),
    ("I cannot tell from this image.", U),
]
