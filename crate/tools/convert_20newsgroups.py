#!/usr/bin/env python3
"""Write the rec.autos / rec.sport.baseball posts as a JSON lines dataset.

Each output line is {"id", "text", "label"} with labels "autos" and
"baseball". Needs scikit-learn and network access on first use (it caches
the archive under ~/scikit_learn_data).

    python3 tools/convert_20newsgroups.py --subset all --out autos_baseball.jsonl
"""
import argparse
import json

from sklearn.datasets import fetch_20newsgroups

CATEGORIES = {"rec.autos": "autos", "rec.sport.baseball": "baseball"}


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--subset", choices=["train", "test", "all"], default="all")
    p.add_argument("--remove", default="", help="comma list of headers,footers,quotes")
    p.add_argument("--out", required=True)
    a = p.parse_args()
    remove = tuple(x for x in a.remove.split(",") if x)
    data = fetch_20newsgroups(subset=a.subset, categories=sorted(CATEGORIES), remove=remove, shuffle=False)
    names = [CATEGORIES[n] for n in data.target_names]
    with open(a.out, "w", encoding="utf-8") as f:
        for i, (text, target) in enumerate(zip(data.data, data.target)):
            label = names[target]
            f.write(json.dumps({"id": f"{label}-{i:05d}", "text": text, "label": label}) + "\n")
    print(f"wrote {len(data.data)} documents to {a.out}")


if __name__ == "__main__":
    main()
