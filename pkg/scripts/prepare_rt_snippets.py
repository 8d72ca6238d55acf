"""Build data/rt_snippets.tsv, a sentence-polarity corpus of Rotten Tomatoes snippets.

The snippets ship inside the ``scattertext`` wheel on PyPI.  Fresh reviews are
labelled ``pos`` and rotten ones ``neg``; duplicates are dropped and the
larger class is subsampled (seeded) so both classes are the same size.

    python scripts/prepare_rt_snippets.py [--wheel path/to/scattertext.whl]
"""
import argparse
import bz2
import csv
import glob
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "scattertext/data/rotten_tomatoes_corpus_full.csv.bz2"


def fetch_wheel(dest: str) -> str:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "scattertext==0.1.19", "-d", dest],
        check=True,
    )
    return glob.glob(f"{dest}/scattertext-*.whl")[0]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wheel")
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "rt_snippets.tsv"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(tmp)
        raw = bz2.decompress(zipfile.ZipFile(wheel).read(MEMBER)).decode("utf-8")

    seen, rows = set(), {"pos": [], "neg": []}
    for rec in csv.DictReader(io.StringIO(raw)):
        label = {"fresh": "pos", "rotten": "neg"}.get(rec["category"])
        text = " ".join(rec["text"].split())
        if label is None or not text or text in seen:
            continue
        seen.add(text)
        rows[label].append(text)

    size = min(len(v) for v in rows.values())
    rng = np.random.default_rng(args.seed)
    lines = []
    for label, texts in rows.items():
        keep = np.sort(rng.choice(len(texts), size=size, replace=False))
        lines += [f"{label}\t{texts[i]}" for i in keep]
    order = rng.permutation(len(lines))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("".join(lines[i] + "\n" for i in order), encoding="utf-8")
    print(f"wrote {len(lines)} examples ({size} per class) to {args.out}")


if __name__ == "__main__":
    main()
