#!/usr/bin/env python3
"""Write the miniature concept embedding table shipped in data/.

Vectors are seeded random draws. Concepts in the same anatomical or device
group share a strong common direction, so they sit close together, and
concepts joined by an ontology relation are pulled slightly towards each
other. Rerunning with the same seed reproduces the file exactly.
"""

import argparse

import numpy as np

GROUPS = {
    "lobe": ["C0225758", "C0225757", "C0225759", "C0225756", "C0225738", "C0225760"],
    "side": ["C0230142", "C0230143", "C0225751"],
    "bone": ["C0035561", "C0008913", "C0581269", "C0020164"],
    "device": ["C0336630", "C0085678", "C0179729", "C0030163", "C0183135"],
    "pleura": ["C0032227", "C0521558", "C0264545", "C0264546", "C0032326", "C0521577"],
    "airspace": ["C1265876", "C0521530", "C0746934", "C0332448", "C0004144", "C0521573"],
}
GROUP_WEIGHT = {"lobe": 0.95, "side": 0.9, "bone": 0.9, "device": 0.85, "pleura": 0.6, "airspace": 0.6}


def read_ontology(path):
    concepts, relations = [], []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.rstrip("\n").split("\t")
            if fields[0] == "C":
                concepts.append(fields[1])
            elif fields[0] == "R":
                relations.append((fields[1], fields[2]))
    return concepts, relations


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ontology", default="data/ontology.tsv")
    ap.add_argument("--out", default="data/embeddings.txt")
    ap.add_argument("--dim", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args()

    concepts, relations = read_ontology(args.ontology)
    rng = np.random.default_rng(args.seed)
    unit = lambda v: v / np.linalg.norm(v)

    base = {c: unit(rng.standard_normal(args.dim)) for c in concepts}
    centers = {g: unit(rng.standard_normal(args.dim)) for g in GROUPS}
    vec = {}
    for c in concepts:
        v = base[c]
        for g, members in GROUPS.items():
            if c in members:
                w = GROUP_WEIGHT[g]
                v = w * centers[g] + (1.0 - w) * v
        vec[c] = unit(v)
    for a, b in relations:
        va, vb = vec[a], vec[b]
        vec[a], vec[b] = unit(va + 0.15 * vb), unit(vb + 0.15 * va)

    with open(args.out, "w", encoding="utf-8") as f:
        for c in concepts:
            f.write(c + " " + " ".join(f"{x:.6f}" for x in vec[c]) + "\n")


if __name__ == "__main__":
    main()
