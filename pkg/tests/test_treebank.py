"""Treebank I/O, validation, and UAS evaluation."""

import itertools

import pytest

from deprerank.errors import AlignmentError, ParseError, StructureError
from deprerank.treebank import (
    EvalResult, KBestList, corpus_oracle, is_rooted_tree, oracle_best, oracle_worst,
    parse_conll, read_kbest, resolve_punct_set, uas, write_conll, write_kbest,
    PUNCT_SETS,
)

from helpers import kbest_of, make_tree

BIKE_BLOCK = (
    "1\ta\t_\tDT\tDT\t_\t3\tdet\n"
    "2\tred\t_\tJJ\tJJ\t_\t3\tamod\n"
    "3\tbike\t_\tNN\tNN\t_\t0\troot\n"
)


def test_parse_bike_block():
    trees = parse_conll(BIKE_BLOCK)
    assert len(trees) == 1
    tree = trees[0]
    assert tree.forms == ["a", "red", "bike"]
    assert tree.pos_tags == ["DT", "JJ", "NN"]
    assert tree.heads == [3, 3, 0]


def test_parse_empty_input():
    assert parse_conll("") == []
    assert parse_conll("\n\n\n") == []


def test_parse_two_cycle_rejected():
    block = "1\ta\t_\tDT\tDT\t_\t2\t_\n2\tb\t_\tNN\tNN\t_\t1\t_\n"
    with pytest.raises(StructureError):
        parse_conll(block)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError, match="line 2"):
        parse_conll("1\ta\t_\tDT\tDT\t_\t2\t_\n2\tb\t_\tNN\tNN\n")
    with pytest.raises(ParseError, match="line 1"):
        parse_conll("x\ta\t_\tDT\tDT\t_\t2\t_\n")
    with pytest.raises(ParseError, match="line 1"):
        parse_conll("1\ta\t_\tDT\tDT\t_\tzzz\t_\n")


def test_multiple_roots_strict_and_lenient():
    block = ("1\ta\t_\tDT\tDT\t_\t0\t_\n"
             "2\tb\t_\tNN\tNN\t_\t0\t_\n")
    with pytest.raises(StructureError):
        parse_conll(block)
    trees = parse_conll(block, allow_multiple_roots=True)
    assert trees[0].heads == [0, 0]


def test_roundtrip_is_byte_exact():
    text = BIKE_BLOCK + "\n" + (
        "1\tHe\the\tPRP\tPRP\t_\t2\tnsubj\t_\t_\n"
        "2\tran\trun\tVBD\tVBD\t_\t0\troot\t_\t_\n")
    trees = parse_conll(text)
    assert write_conll(trees) == text


def test_write_synthetic_tokens_parses_back():
    tree = make_tree([2, 0, 2])
    again = parse_conll(write_conll([tree]))[0]
    assert again.heads == tree.heads
    assert again.forms == tree.forms
    assert again.pos_tags == tree.pos_tags


def test_validation_matches_bruteforce_enumeration():
    # Oracle: BFS reachability over every head vector of length <= 5.
    def oracle(heads):
        n = len(heads)
        if any(h == i + 1 for i, h in enumerate(heads)):
            return False
        if sum(1 for h in heads if h == 0) != 1:
            return False
        reached = {0}
        frontier = [0]
        while frontier:
            node = frontier.pop()
            for i, h in enumerate(heads):
                if h == node and i + 1 not in reached:
                    reached.add(i + 1)
                    frontier.append(i + 1)
        return len(reached) == n + 1

    for n in range(1, 6):
        for heads in itertools.product(range(n + 1), repeat=n):
            assert is_rooted_tree(heads) == oracle(heads), heads


def test_kbest_reading_and_scores():
    gold = BIKE_BLOCK
    cands = ("SENT 0 2\n"
             "CAND 1 -10.5\nHEAD 3 3 0\n"
             "CAND 2 -11.2\nHEAD 2 3 0\n")
    lists = read_kbest(gold, cands)
    assert len(lists) == 1
    kb = lists[0]
    assert len(kb.candidates) == 2
    assert kb.candidates[0][1] == -10.5
    assert kb.candidates[1][1] == -11.2
    assert kb.candidates[1][0].heads == [2, 3, 0]
    # candidates share the gold tokenization
    assert kb.candidates[1][0].forms == kb.gold.forms


def test_kbest_token_mismatch_names_sentence():
    cands = "SENT 0 1\nCAND 1 -1.0\nHEAD 3 0\n"
    with pytest.raises(AlignmentError, match="sentence 0"):
        read_kbest(BIKE_BLOCK, cands)


def test_kbest_count_mismatch():
    cands = ("SENT 0 1\nCAND 1 -1.0\nHEAD 3 3 0\n"
             "SENT 1 1\nCAND 1 -1.0\nHEAD 0\n")
    with pytest.raises(AlignmentError, match="more sentences"):
        read_kbest(BIKE_BLOCK, cands)
    with pytest.raises(AlignmentError, match="ended before"):
        read_kbest(BIKE_BLOCK + "\n1\tx\t_\tNN\tNN\t_\t0\t_\n", "SENT 0 1\nCAND 1 -1.0\nHEAD 3 3 0\n")


def test_kbest_accepts_64_candidates():
    gold = make_tree([0] + [1] * 4)
    kb = kbest_of(gold, [(gold.heads, -float(i)) for i in range(64)])
    text = write_kbest([kb])
    lists = read_kbest(write_conll([gold]), text)
    assert len(lists[0].candidates) == 64


def test_kbest_roundtrip_scores_verbatim():
    gold = make_tree([0, 1, 1])
    kb = kbest_of(gold, [([0, 1, 1], -10.523125), ([0, 1, 2], -11.25)])
    again = read_kbest(write_conll([gold]), write_kbest([kb]))[0]
    assert [s for _, s in again.candidates] == [-10.523125, -11.25]


def test_uas_identity():
    tree = make_tree([3, 3, 0])
    res = uas(tree, tree)
    assert res == EvalResult(3, 3)
    assert res.uas == 1.0


def test_uas_handcount():
    gold = make_tree([3, 3, 0])
    pred = gold.with_heads([3, 1, 0])
    res = uas(pred, gold)
    assert (res.correct_heads, res.scored_tokens) == (2, 3)
    assert res.uas == pytest.approx(2 / 3)


def test_uas_ignores_punctuation():
    gold = make_tree([2, 0, 2, 2], tags=["DT", "NN", "VB", "."])
    pred = gold.with_heads([2, 0, 2, 3])
    res = uas(pred, gold, punct_tags={"."})
    assert (res.correct_heads, res.scored_tokens) == (3, 3)
    assert res.uas == 1.0


def test_uas_set_construction_invariant():
    gold = make_tree([2, 0, 2, 2], tags=["DT", "NN", ".", ","])
    pred = gold.with_heads([2, 0, 2, 2])
    for punct in ({".", ","}, {",", "."}, frozenset([",", "."])):
        assert uas(pred, gold, punct) == EvalResult(2, 2)


def test_uas_length_mismatch():
    with pytest.raises(AlignmentError):
        uas(make_tree([0]), make_tree([0, 1]))


def test_oracle_best_worst():
    gold = make_tree([2, 0] + [2] * 8)
    # candidate UAS: 0.8, 1.0, 0.9
    kb = kbest_of(gold, [
        ([4, 0, 4] + [2] * 7, -1.0),
        ([2, 0] + [2] * 8, -2.0),
        ([4, 0] + [2] * 8, -3.0),
    ])
    best_idx, best = oracle_best(kb)
    worst_idx, worst = oracle_worst(kb)
    assert best_idx == 1 and best.uas == 1.0
    assert worst_idx == 0 and worst.uas == pytest.approx(0.8)


def test_oracle_singleton_and_ties():
    gold = make_tree([0, 1])
    single = kbest_of(gold, [([0, 1], -1.0)])
    assert oracle_best(single)[0] == 0 == oracle_worst(single)[0]
    tie = kbest_of(gold, [([2, 0], -1.0), ([2, 0], -2.0)])
    assert oracle_best(tie)[0] == 0
    assert oracle_worst(tie)[0] == 0


def test_oracle_empty_candidates():
    gold = make_tree([0])
    with pytest.raises(ValueError):
        oracle_best(KBestList(gold, ()))


def test_corpus_oracle_aggregates_counts():
    g1 = make_tree([0, 1])
    g2 = make_tree([2, 0, 2])
    kbs = [kbest_of(g1, [([0, 1], -1.0), ([2, 0], -2.0)]),
           kbest_of(g2, [([3, 0, 2], -1.0)])]
    best = corpus_oracle(kbs)
    worst = corpus_oracle(kbs, worst=True)
    assert (best.correct_heads, best.scored_tokens) == (2 + 2, 5)
    assert (worst.correct_heads, worst.scored_tokens) == (0 + 2, 5)
    assert worst.uas <= best.uas


def test_punct_set_resolution():
    assert resolve_punct_set("ptb") == PUNCT_SETS["ptb"]
    assert resolve_punct_set("CTB") == frozenset({"PU"})
    assert resolve_punct_set("none") == frozenset()
    assert resolve_punct_set("PU, Sym") == frozenset({"PU", "Sym"})
