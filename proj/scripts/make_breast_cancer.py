#!/usr/bin/env python3
"""Rebuild the LIBSVM `breast-cancer` and `breast-cancer_scale` files offline.

Input is the original Wisconsin breast-cancer table as distributed with R's
MASS package (`biopsy.csv`: ID, V1..V9, class). LIBSVM's binary breast-cancer
file is that table with the 16 incomplete rows dropped, the sample ID kept as
feature 1, and labels 2 (benign) / 4 (malignant). The `_scale` variant is
min-max scaled per feature to [-1, 1] as `svm-scale` does, zeros omitted.
"""
import csv
import sys


def main(src, out_raw, out_scaled):
    rows = []
    with open(src, newline="") as fh:
        for rec in csv.DictReader(fh):
            vals = [rec["ID"]] + [rec[f"V{i}"] for i in range(1, 10)]
            if any(v in ("NA", "") for v in vals):
                continue
            label = 2 if rec["class"] == "benign" else 4
            rows.append((label, [float(v) for v in vals]))

    with open(out_raw, "w") as fh:
        for label, feats in rows:
            toks = " ".join(f"{j + 1}:{v:g}" if v != int(v) else f"{j + 1}:{int(v)}"
                            for j, v in enumerate(feats) if v != 0)
            fh.write(f"{label} {toks}\n")

    d = len(rows[0][1])
    lo = [min(r[1][j] for r in rows) for j in range(d)]
    hi = [max(r[1][j] for r in rows) for j in range(d)]
    with open(out_scaled, "w") as fh:
        for label, feats in rows:
            toks = []
            for j, v in enumerate(feats):
                if hi[j] == lo[j]:
                    continue
                s = -1.0 + 2.0 * (v - lo[j]) / (hi[j] - lo[j])
                if s != 0:
                    toks.append(f"{j + 1}:{s:g}")
            fh.write(f"{label} {' '.join(toks)}\n")
    print(f"wrote {len(rows)} samples, {d} features")


if __name__ == "__main__":
    if len(sys.argv) != 4:
        sys.exit("usage: make_breast_cancer.py biopsy.csv breast-cancer breast-cancer_scale")
    main(*sys.argv[1:])
