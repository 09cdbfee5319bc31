"""Multilabel-stratified train/test splits and k-fold plans."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..tensor import make_rng


def split_sizes(n: int, test_frac: float = 0.2) -> tuple[int, int]:
    """``(n_train, n_test)`` with ``n_test = round_half_up(n * test_frac)``."""
    if not 0.0 < test_frac < 1.0:
        raise ValueError("test_frac must lie in (0, 1)")
    n_test = math.floor(n * test_frac + 0.5)
    return n - n_test, n_test


def _capacities(n: int, fractions) -> np.ndarray:
    """Integer subset sizes summing to ``n`` (largest remainder rounding)."""
    want = np.asarray(fractions, dtype=float) * n / np.sum(fractions)
    cap = np.floor(want).astype(int)
    order = np.argsort(-(want - cap), kind="stable")
    cap[order[: n - cap.sum()]] += 1
    return cap


def iterative_stratify(labels, fractions, rng) -> np.ndarray:
    """Assign each row of a multi-hot ``labels`` matrix to a subset.

    Iterative stratification: repeatedly take the label with the fewest
    unassigned examples and hand each of its examples to the subset that
    still wants the most of that label.  Subset sizes are fixed up front
    and never exceeded; a swap pass then evens out per-label counts.
    """
    Y = np.asarray(labels).astype(bool)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, n_labels = Y.shape
    k = len(fractions)
    rng = make_rng(rng)
    cap = _capacities(n, fractions).astype(float)
    r = np.asarray(fractions, dtype=float) / np.sum(fractions)
    want = np.outer(r, Y.sum(axis=0)).astype(float)  # [k, n_labels]
    assign = np.full(n, -1)
    order = rng.permutation(n)
    remaining = Y.sum(axis=0).astype(int)

    def pick(candidates_score, subsets):
        best = subsets[candidates_score[subsets] == candidates_score[subsets].max()]
        if len(best) > 1:
            best = best[cap[best] == cap[best].max()]
        return int(best[rng.integers(len(best))]) if len(best) > 1 else int(best[0])

    while remaining.sum() > 0:
        active = np.flatnonzero(remaining > 0)
        fewest = active[remaining[active] == remaining[active].min()]
        lab = int(fewest[rng.integers(len(fewest))])
        for i in order:
            if assign[i] >= 0 or not Y[i, lab]:
                continue
            open_ = np.flatnonzero(cap > 0)
            j = pick(want[:, lab], open_)
            assign[i] = j
            cap[j] -= 1
            want[j, Y[i]] -= 1
            remaining[Y[i]] -= 1
    for i in order:
        if assign[i] < 0:
            open_ = np.flatnonzero(cap > 0)
            j = int(open_[np.argmax(cap[open_])])
            assign[i] = j
            cap[j] -= 1
    return _refine(assign, Y, r, order)


def _refine(assign, Y, r, order, max_swaps: int = 10_000):
    """Swap examples between subsets while that lowers the squared gap between
    per-subset positive counts and their proportional targets.

    Greedy single-pass stratification can strand the most frequent labels in
    whatever capacity is left; swaps keep subset sizes fixed.
    """
    k = len(r)
    sizes = np.bincount(assign, minlength=k)
    target = np.outer(sizes, Y.sum(axis=0)) / len(Y)
    sigs, sig_of = np.unique(Y, axis=0, return_inverse=True)
    sig_of = sig_of.ravel()
    sigs = sigs.astype(float)
    # members[j][s]: examples of signature s in subset j, in a seeded order
    members = [[[] for _ in range(len(sigs))] for _ in range(k)]
    for i in order:
        members[assign[i]][sig_of[i]].append(i)
    counts = np.array([[len(m) for m in row] for row in members])  # [k, S]
    D = counts @ sigs - target
    for _ in range(max_swaps):
        best, move = -1e-9, None
        for a in range(k):
            for b in range(a + 1, k):
                sa = np.flatnonzero(counts[a])
                sb = np.flatnonzero(counts[b])
                if not len(sa) or not len(sb):
                    continue
                v = sigs[sb][None, :, :] - sigs[sa][:, None, :]  # move s: a->b, t: b->a
                gain = ((D[a] + v) ** 2).sum(-1) + ((D[b] - v) ** 2).sum(-1) - (D[a] ** 2).sum() - (D[b] ** 2).sum()
                idx = np.unravel_index(np.argmin(gain), gain.shape)
                if gain[idx] < best:
                    best, move = gain[idx], (a, b, sa[idx[0]], sb[idx[1]])
        if move is None:
            break
        a, b, s, t = move
        i, j = members[a][s].pop(0), members[b][t].pop(0)
        members[b][s].append(i)
        members[a][t].append(j)
        assign[i], assign[j] = b, a
        counts[a, s] -= 1
        counts[b, s] += 1
        counts[b, t] -= 1
        counts[a, t] += 1
        D[a] += sigs[t] - sigs[s]
        D[b] += sigs[s] - sigs[t]
    return assign


def stratified_split(ids, labels, test_frac: float = 0.2, seed=0) -> tuple[list[str], list[str]]:
    """Stratified ``(train_ids, test_ids)``; test size is ``split_sizes(n)[1]``."""
    ids = list(ids)
    if not ids:
        raise ValueError("cannot split an empty corpus")
    n_train, n_test = split_sizes(len(ids), test_frac)
    assign = iterative_stratify(labels, [n_train, n_test], seed)
    train = [i for i, a in zip(ids, assign) if a == 0]
    test = [i for i, a in zip(ids, assign) if a == 1]
    return train, test


def kfold(ids, labels, k: int = 5, seed=0) -> list[tuple[list[str], list[str]]]:
    """``k`` stratified ``(fit_ids, val_ids)`` pairs whose val parts partition ``ids``."""
    ids = list(ids)
    if k < 2:
        raise ValueError("k-fold needs k >= 2")
    if k > len(ids):
        raise ValueError(f"k={k} exceeds the {len(ids)} available records")
    fold = iterative_stratify(labels, [1.0] * k, seed)
    return [
        ([i for i, f in zip(ids, fold) if f != j], [i for i, f in zip(ids, fold) if f == j])
        for j in range(k)
    ]


@dataclass
class SplitPlan:
    """Test partition plus a fold index for every training record."""

    test_ids: list[str]
    folds: dict[str, int]  # train record id -> fold whose validation part holds it

    @property
    def train_ids(self) -> list[str]:
        return sorted(self.folds)

    @property
    def k(self) -> int:
        return max(self.folds.values()) + 1

    def fold(self, j: int) -> tuple[list[str], list[str]]:
        fit = [i for i in self.train_ids if self.folds[i] != j]
        val = [i for i in self.train_ids if self.folds[i] == j]
        return fit, val

    def to_text(self) -> str:
        rows = ["# record_id\tpartition\tfold"]
        rows += [f"{i}\ttrain\t{f}" for i, f in sorted(self.folds.items())]
        rows += [f"{i}\ttest\t-1" for i in sorted(self.test_ids)]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SplitPlan":
        test, folds = [], {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[1] not in ("train", "test"):
                raise ValueError(f"split line {lineno}: expected id<TAB>train|test<TAB>fold")
            if parts[1] == "test":
                test.append(parts[0])
            else:
                folds[parts[0]] = int(parts[2])
        return cls(test, folds)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "SplitPlan":
        return cls.from_text(Path(path).read_text())


def make_split_plan(ids, labels, test_frac: float = 0.2, k: int = 5, seed=0) -> SplitPlan:
    ids = list(ids)
    Y = np.asarray(labels)
    train, test = stratified_split(ids, Y, test_frac, seed)
    row = {i: n for n, i in enumerate(ids)}
    Y_train = Y[[row[i] for i in train]]
    folds = {}
    for j, (_, val) in enumerate(kfold(train, Y_train, k, seed + 1)):
        folds.update({i: j for i in val})
    return SplitPlan(test, folds)
