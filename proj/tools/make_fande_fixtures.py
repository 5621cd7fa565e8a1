#!/usr/bin/env python3
"""Writes prediction logs whose solvable-set quadrants match fixed reference counts.

Each log holds four models over seeds 1-4. An example is solvable for a model
when every seed predicts the gold label; unsolvable examples are wrong on a
random non-empty subset of seeds.
"""
import json
import random
import sys
from pathlib import Path

SEEDS = [1, 2, 3, 4]

# (both, only structure model, only feature model, neither)
DATASETS = {
    "explagraphs": {
        "labels": ["support", "counter"],
        "pairs": {("MLP", "GCN"): (315, 85, 30, 124), ("Transformer", "GT"): (352, 33, 56, 113)},
    },
    "webqsp": {
        "labels": [f"entity_{i:04d}" for i in range(400)],
        "pairs": {("MLP", "GCN"): (793, 97, 118, 620), ("Transformer", "GT"): (807, 83, 129, 609)},
    },
}


def quadrant_flags(counts, rng):
    both, only_e, only_f, neither = counts
    flags = [(True, True)] * both + [(False, True)] * only_e + [(True, False)] * only_f + [(False, False)] * neither
    rng.shuffle(flags)
    return flags


def records(name, spec, rng):
    sizes = {sum(c) for c in spec["pairs"].values()}
    assert len(sizes) == 1, f"{name}: pairs disagree on |P|"
    n = sizes.pop()
    ids = [f"{name}-{i:05d}" for i in range(n)]
    gold = [rng.choice(spec["labels"]) for _ in ids]
    solvable = {}
    for (fm, em), counts in spec["pairs"].items():
        flags = quadrant_flags(counts, rng)
        solvable[fm] = [f for f, _ in flags]
        solvable[em] = [e for _, e in flags]
    out = []
    for model in sorted(solvable):
        wrong_seeds = []
        for ok in solvable[model]:
            if ok:
                wrong_seeds.append(set())
            else:
                k = rng.randint(1, len(SEEDS))
                wrong_seeds.append(set(rng.sample(SEEDS, k)))
        for seed in SEEDS:
            for i, ex in enumerate(ids):
                if seed in wrong_seeds[i]:
                    pred = rng.choice([l for l in spec["labels"] if l != gold[i]])
                else:
                    pred = gold[i] + (" " if rng.random() < 0.05 else "")
                out.append({"model": model, "seed": seed, "id": ex, "pred": pred, "gold": gold[i]})
    return out


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "fande"
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, spec in DATASETS.items():
        rng = random.Random(f"fande-{name}")
        path = out_dir / f"{name}.jsonl"
        with path.open("w") as f:
            for rec in records(name, spec, rng):
                f.write(json.dumps(rec, separators=(",", ":")) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
