#!/usr/bin/env python3
"""Independent re-computation of the constants frozen in the C++ tests.

Run: python3 tools/oracles.py
"""
import itertools
import math

import numpy as np

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def uniform01(self):
        return (self.next() >> 11) * 2.0**-53

    def below(self, n):
        return min(int(self.uniform01() * n), n - 1)


def rand_k(n, k, seed):
    rng = SplitMix64(seed)
    idx = list(range(n))
    for i in range(k):
        j = i + rng.below(n - i)
        idx[i], idx[j] = idx[j], idx[i]
    return idx[:k]


def pcst_bruteforce(n, edges, prizes, costs):
    """Best connected vertex subset, each costed by its MST."""
    best = 0.0
    for r in range(1, n + 1):
        for subset in itertools.combinations(range(n), r):
            s = set(subset)
            inner = sorted((costs[e], a, b) for e, (a, b) in enumerate(edges) if a in s and b in s)
            parent = {v: v for v in s}

            def find(x):
                while parent[x] != x:
                    x = parent[x]
                return x

            cost, used = 0.0, 0
            for c, a, b in inner:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb
                    cost += c
                    used += 1
            if used == r - 1:
                best = max(best, sum(prizes[v] for v in s) - cost)
    return best


def mincut_aux(a, s):
    d = np.diag(a.sum(axis=1))
    cut = -np.trace(s.T @ a @ s) / np.trace(s.T @ d @ s)
    sts = s.T @ s
    c = s.shape[1]
    ortho = np.linalg.norm(sts / np.linalg.norm(sts) - np.eye(c) / math.sqrt(c))
    return cut, ortho


def main():
    rng = SplitMix64(0)
    print("splitmix64(0):", [hex(rng.next()) for _ in range(3)])
    rng = SplitMix64(42)
    print("splitmix64(42):", [rng.next() for _ in range(2)])
    print("rand_k(N=10, k=3, seed=7):", rand_k(10, 3, 7))

    print("pcst path (3,0,3), costs 1:", pcst_bruteforce(3, [(0, 1), (1, 2)], [3, 0, 3], [1, 1]))
    print("pcst two isolated nodes (2,3):", pcst_bruteforce(2, [], [2, 3], []))

    tri = np.zeros((6, 6))
    for b in (0, 3):
        for i in range(3):
            for j in range(3):
                if i != j:
                    tri[b + i, b + j] = 1
    onehot = np.zeros((6, 2))
    onehot[:3, 0] = 1
    onehot[3:, 1] = 1
    print("mincut two triangles, one-hot:", mincut_aux(tri, onehot))
    for c in (2, 3, 5):
        cut, ortho = mincut_aux(tri, np.full((6, c), 1.0 / c))
        print(f"mincut uniform C={c}: cut {cut:.15f} ortho {ortho:.15f} closed form {math.sqrt(2 - 2 / math.sqrt(c)):.15f}")

    print("topk gates tanh(2), tanh(1):", math.tanh(2.0), math.tanh(1.0))
    print("retention 8/18.18:", round(8 / 18.18, 2))
    for both, only_f, only_e, neither in [(315, 30, 85, 124), (793, 118, 97, 620), (352, 56, 33, 113), (807, 129, 83, 609)]:
        total = both + only_f + only_e + neither
        print(f"fande {both}/{total} = {both / total:.4f} -> {round(both / total, 2):.2f}")


if __name__ == "__main__":
    main()
