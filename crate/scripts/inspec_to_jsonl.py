#!/usr/bin/env python3
"""Convert Inspec (Hulth 2003 layout) or KP20k JSON to the kwe JSONL corpus.

Inspec: every directory given is scanned recursively for `<name>.uncontr`
files (keywords separated by ';'); the sibling `<name>.abstr` supplies the
title (first line) and abstract. Document ids are `<dir>/<name>`.

KP20k: one JSON object per line with `title`, `abstract` and `keywords`
(a ';'-separated string or a list).

    scripts/inspec_to_jsonl.py inspec Inspec/all > inspec.jsonl
    scripts/inspec_to_jsonl.py kp20k kp20k_training.json > kp20k.jsonl
"""

import argparse
import json
import sys
from pathlib import Path


def split_keywords(raw):
    if isinstance(raw, list):
        items = raw
    else:
        items = raw.replace("\n", " ").replace("\t", " ").split(";")
    return [" ".join(k.split()) for k in items if k.strip()]


def inspec(paths):
    for root in map(Path, paths):
        for kw_file in sorted(root.rglob("*.uncontr")):
            abstr = kw_file.with_suffix(".abstr")
            title, abstract = "", ""
            if abstr.exists():
                lines = abstr.read_text(encoding="utf-8", errors="replace").strip().splitlines()
                # titles may wrap onto indented continuation lines
                head = 1
                while head < len(lines) and lines[head][:1] in (" ", "\t"):
                    head += 1
                title = " ".join(l.strip() for l in lines[:head])
                abstract = " ".join(l.strip() for l in lines[head:])
            keywords = split_keywords(kw_file.read_text(encoding="utf-8", errors="replace"))
            doc_id = f"{kw_file.parent.name}/{kw_file.stem}"
            yield {"id": doc_id, "title": title, "abstract": abstract, "keywords": keywords}


def kp20k(paths):
    for path in paths:
        with open(path, encoding="utf-8") as f:
            for n, line in enumerate(f):
                if not line.strip():
                    continue
                rec = json.loads(line)
                yield {
                    "id": str(rec.get("id", f"{Path(path).stem}-{n}")),
                    "title": rec.get("title", ""),
                    "abstract": rec.get("abstract", ""),
                    "keywords": split_keywords(rec.get("keywords", "")),
                }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("layout", choices=["inspec", "kp20k"])
    ap.add_argument("paths", nargs="+")
    ap.add_argument("-o", "--out", help="output file (default stdout)")
    args = ap.parse_args()

    docs = inspec(args.paths) if args.layout == "inspec" else kp20k(args.paths)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    count = 0
    for doc in docs:
        if not doc["keywords"]:
            continue
        out.write(json.dumps(doc, ensure_ascii=False) + "\n")
        count += 1
    if args.out:
        out.close()
    print(f"{count} documents", file=sys.stderr)
    return 0 if count else 2


if __name__ == "__main__":
    sys.exit(main())
