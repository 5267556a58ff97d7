#!/usr/bin/env python3
"""Convert a LINQS citation dump (cora, citeseer) into the bhgnn dataset layout.

Input: a directory with `<name>.content` (paper id, binary word features,
class name) and `<name>.cites` (cited id, citing id).
Output: nodes.tsv, edges.tsv (citing -> cited, relation 0, weight 1) and a
sparse features.tsv.
"""

import argparse
import sys
from pathlib import Path


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=Path, help="directory with <name>.content and <name>.cites")
    ap.add_argument("out", type=Path, help="output dataset directory")
    ap.add_argument("--name", help="file stem (default: the source directory name)")
    args = ap.parse_args()

    stem = args.name or args.src.name
    content = args.src / f"{stem}.content"
    cites = args.src / f"{stem}.cites"
    for p in (content, cites):
        if not p.exists():
            ap.error(f"missing {p}")

    ids: dict[str, int] = {}
    classes: dict[str, int] = {}
    labels: list[int] = []
    triplets: list[tuple[int, int]] = []
    width = None
    for line in content.read_text().splitlines():
        fields = line.split()
        if not fields:
            continue
        paper, words, cls = fields[0], fields[1:-1], fields[-1]
        if width is None:
            width = len(words)
        elif len(words) != width:
            sys.exit(f"{content}: paper {paper} has {len(words)} features, expected {width}")
        node = ids.setdefault(paper, len(ids))
        labels.append(classes.setdefault(cls, len(classes)))
        triplets.extend((node, col) for col, w in enumerate(words) if float(w) != 0.0)

    edges: list[tuple[int, int]] = []
    dropped = 0
    for line in cites.read_text().splitlines():
        fields = line.split()
        if len(fields) != 2:
            continue
        cited, citing = fields
        if cited not in ids or citing not in ids:
            dropped += 1
            continue
        edges.append((ids[citing], ids[cited]))

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "nodes.tsv", "w") as f:
        f.write("# node_id\ttype_id\tlabel\n")
        f.writelines(f"{i}\t0\t{y}\n" for i, y in enumerate(labels))
    with open(args.out / "edges.tsv", "w") as f:
        f.write("# src\tdst\trelation\tweight\n")
        f.writelines(f"{s}\t{d}\t0\t1\n" for s, d in edges)
    with open(args.out / "features.tsv", "w") as f:
        f.write("# row\tcol\tvalue\n")
        f.writelines(f"{r}\t{c}\t1\n" for r, c in triplets)
        # Pin the width when trailing columns are all zero.
        if width and not any(c == width - 1 for _, c in triplets):
            f.write(f"0\t{width - 1}\t0\n")

    print(f"{len(ids)} nodes, {len(edges)} edges, {width} features, {len(classes)} classes", file=sys.stderr)
    if dropped:
        print(f"dropped {dropped} citations with unknown ids", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
