#!/usr/bin/env python3
"""Convert a LINQS citation dataset (cora.content / cora.cites) into the
dataset directory layout read by `sfr`.

usage: linqs_to_dir.py <content> <cites> <out_dir> [--name cora]
"""
import argparse
import json
import os


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("content")
    ap.add_argument("cites")
    ap.add_argument("out")
    ap.add_argument("--name", default="cora")
    a = ap.parse_args()

    ids, feats, names = {}, [], []
    with open(a.content) as f:
        for line in f:
            tok = line.split()
            if not tok:
                continue
            ids[tok[0]] = len(ids)
            feats.append(tok[1:-1])
            names.append(tok[-1])
    classes = sorted(set(names))
    label = {c: k for k, c in enumerate(classes)}

    edges = set()
    skipped = 0
    with open(a.cites) as f:
        for line in f:
            tok = line.split()
            if len(tok) != 2:
                continue
            if tok[0] not in ids or tok[1] not in ids:
                skipped += 1
                continue
            u, v = ids[tok[0]], ids[tok[1]]
            if u != v:
                edges.add((min(u, v), max(u, v)))

    os.makedirs(a.out, exist_ok=True)
    with open(os.path.join(a.out, "features.tsv"), "w") as f:
        for row in feats:
            f.write("\t".join(row) + "\n")
    with open(os.path.join(a.out, "labels.tsv"), "w") as f:
        for n in names:
            f.write(f"{label[n]}\n")
    with open(os.path.join(a.out, "edges.tsv"), "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")
    with open(os.path.join(a.out, "meta.json"), "w") as f:
        json.dump({"name": a.name, "num_classes": len(classes), "directed": False}, f)
    print(f"nodes={len(ids)} features={len(feats[0]) if feats else 0} "
          f"classes={len(classes)} edges={len(edges)} skipped_cites={skipped}")


if __name__ == "__main__":
    main()
