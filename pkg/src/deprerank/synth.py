"""Synthetic sentences and k-best fixtures for gradient checks and smoke tests."""

from __future__ import annotations

import numpy as np

from .treebank import DependencyTree, KBestList, Token, is_rooted_tree

DEFAULT_TAGS = ("DT", "JJ", "NN", "NNS", "VB", "IN", "RB")


def random_tree(rng: np.random.Generator, length: int,
                vocab: list[str], tags=DEFAULT_TAGS) -> DependencyTree:
    """Random single-rooted tree: tokens attach, in random order, to attached nodes."""
    order = list(rng.permutation(length) + 1)
    heads = [0] * length
    attached = [order[0]]
    for idx in order[1:]:
        heads[idx - 1] = int(attached[rng.integers(len(attached))])
        attached.append(idx)
    return DependencyTree(tuple(
        Token(i + 1, vocab[int(rng.integers(len(vocab)))],
              tags[int(rng.integers(len(tags)))], heads[i])
        for i in range(length)))


def corrupt_heads(rng: np.random.Generator, tree: DependencyTree,
                  max_changes: int = 3) -> DependencyTree:
    """A candidate differing from `tree` in at least one (valid) head assignment.

    Single-token sentences admit exactly one tree and are returned unchanged.
    """
    n = len(tree)
    if n < 2:
        return tree
    for _ in range(20):
        heads = tree.heads
        changes = 0
        wanted = 1 + int(rng.integers(max_changes))
        for _ in range(10 * wanted):
            if changes >= wanted:
                break
            i = int(rng.integers(n))
            new_head = int(rng.integers(n + 1))
            if new_head == heads[i] or new_head == i + 1:
                continue
            old = heads[i]
            heads[i] = new_head
            if is_rooted_tree(heads):
                changes += 1
            else:
                heads[i] = old
        if changes:
            return tree.with_heads(heads)
    return tree


def synth_kbest(rng: np.random.Generator, gold: DependencyTree, k: int,
                noise: float = 0.8, max_changes: int = 3) -> KBestList:
    """Gold plus k-1 corrupted candidates, ranked by a noisy quality-based base score."""
    cands = [gold]
    cands.extend(corrupt_heads(rng, gold, max_changes) for _ in range(k - 1))
    scored = []
    for cand in cands:
        mistakes = sum(1 for a, b in zip(cand.heads, gold.heads) if a != b)
        scored.append((cand, -0.7 * mistakes + noise * float(rng.normal())))
    scored.sort(key=lambda cs: -cs[1])
    return KBestList(gold, tuple(scored))


def synth_corpus(seed: int, sentences: int, vocab_size: int = 30,
                 length_range: tuple[int, int] = (5, 8), k: int = 8,
                 tags=DEFAULT_TAGS, noise: float = 0.8) -> list[KBestList]:
    rng = np.random.default_rng(seed)
    vocab = [f"word{i:02d}" for i in range(vocab_size)]
    lo, hi = length_range
    out = []
    for _ in range(sentences):
        gold = random_tree(rng, int(rng.integers(lo, hi + 1)), vocab, tags)
        out.append(synth_kbest(rng, gold, k, noise))
    return out
