"""Run every experiment with the configs in scripts/configs and print a short report.

Usage: python3 scripts/run_all.py [--out DIR] [--only NAME ...] [--threads N]

The lln step takes its tail rate from the tail output, and clt and mixing share
cached conditioned samples through --resume.
"""
import argparse
import sys
import tempfile
from pathlib import Path

import yaml

from dobrushin.cli import main, read_csv

CONFIGS = Path(__file__).resolve().parent / "configs"
ORDER = ["exact", "maps-verify", "tail", "lln", "clt", "mixing"]


def run(name, config, out, threads, resume=False):
    argv = [name, "--config", str(config), "--out", str(out), "--threads", str(threads)]
    if resume:
        argv.append("--resume")
    code = main(argv)
    if code:
        sys.exit(f"{name} failed with exit code {code}")


def lln_config(out, tmp):
    alpha = {float(r["beta"]): float(r["alpha"]) for r in read_csv(out / "tail" / "alpha.csv")[1]}
    doc = yaml.safe_load((CONFIGS / "lln.yaml").read_text())
    doc["alpha"] = alpha[doc["beta"]]
    p = Path(tmp) / "lln.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


def report(out):
    for name, files in [("exact", ["oracle.csv"]), ("maps-verify", ["summary.csv"]), ("tail", ["alpha.csv"]),
                        ("lln", ["summary.csv"]), ("clt", ["clt.csv", "bulk_means.csv", "pair.csv"]),
                        ("mixing", ["profile.csv", "trend.csv", "stability.csv"])]:
        for f in files:
            p = out / name / f
            if p.exists():
                print(f"== {name}/{f}")
                print("".join(line for line in p.read_text().splitlines(keepends=True) if not line.startswith("#")))


def cli():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--only", nargs="*", choices=ORDER)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    todo = args.only or ORDER
    with tempfile.TemporaryDirectory() as tmp:
        for name in ORDER:
            if name not in todo:
                continue
            config = lln_config(out, tmp) if name == "lln" else CONFIGS / f"{name}.yaml"
            run(name, config, out, args.threads, resume=name in ("clt", "mixing"))
    report(out)


if __name__ == "__main__":
    cli()
