"""Convert Planetoid `ind.<name>.*` files into a nodemixup dataset directory.

The public split is kept as published: the first 20 nodes per class (in the
file order) are labeled, the next 500 are validation, and the 1000 indices in
`ind.<name>.test.index` are the test set.

    python export_planetoid.py --raw path/to/planetoid/data --name cora --out cora/
"""

import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load_pickle(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def load_planetoid(raw: Path, name: str):
    parts = {k: load_pickle(raw / f"ind.{name}.{k}") for k in ["x", "y", "tx", "ty", "allx", "ally", "graph"]}
    test_idx = [int(line) for line in (raw / f"ind.{name}.test.index").read_text().split()]
    test_sorted = np.sort(test_idx)

    tx, ty = parts["tx"], parts["ty"]
    if name == "citeseer":
        # Isolated test nodes are missing from tx/ty; pad them with zeros.
        full = range(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((len(full), parts["x"].shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        ty_ext = np.zeros((len(full), parts["y"].shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        tx, ty = tx_ext, ty_ext

    features = sp.vstack((parts["allx"], tx)).tolil()
    features[test_idx, :] = features[test_sorted, :]
    onehot = np.vstack((parts["ally"], ty))
    onehot[test_idx, :] = onehot[test_sorted, :]

    n = features.shape[0]
    edges = set()
    for u, nbrs in parts["graph"].items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))

    labels = onehot.argmax(axis=1)
    labeled = list(range(parts["y"].shape[0]))
    valid = list(range(len(labeled), len(labeled) + 500))
    test = sorted(int(i) for i in test_sorted)
    return features.toarray(), labels, onehot.shape[1], sorted(edges), (labeled, valid, test)


def write_dataset(out: Path, features, labels, num_classes, edges, split, row_normalize: bool):
    if row_normalize:
        sums = features.sum(axis=1, keepdims=True)
        sums[sums == 0] = 1.0
        features = features / sums
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w") as fh:
        fh.writelines(f"{u}\t{v}\n" for u, v in edges)
    with open(out / "features.tsv", "w") as fh:
        for row in features:
            fh.write("\t".join(repr(float(x)) if x else "0" for x in row) + "\n")
    with open(out / "labels.tsv", "w") as fh:
        fh.write(f"# num_classes: {num_classes}\n")
        fh.writelines(f"{int(l)}\n" for l in labels)
    labeled, valid, test = split
    (out / "split.json").write_text(json.dumps({"labeled": labeled, "valid": valid, "test": test}) + "\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--raw", type=Path, required=True, help="directory holding ind.<name>.* files")
    ap.add_argument("--name", default="cora")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument(
        "--no-row-normalize",
        dest="row_normalize",
        action="store_false",
        help="keep raw bag-of-words counts instead of dividing each row by its sum",
    )
    args = ap.parse_args(argv)
    features, labels, c, edges, split = load_planetoid(args.raw, args.name)
    write_dataset(args.out, features, labels, c, edges, split, args.row_normalize)
    print(
        f"nodes={len(labels)} edges={len(edges)} features={features.shape[1]} classes={c} "
        f"labeled={len(split[0])} valid={len(split[1])} test={len(split[2])}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
