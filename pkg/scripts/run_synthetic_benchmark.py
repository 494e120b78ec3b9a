"""Run the repeated-split protocol for every scoring method on the bundled
synthetic corpus and print a QWK table.

    python scripts/run_synthetic_benchmark.py --out runs/benchmark
    python scripts/run_synthetic_benchmark.py --methods corel-cnn baseline-lstm --repeats 3

Each method goes through ``corelw evaluate``; its protocol report and
consistency CSV land in ``<out>/<method>/``, and a summary in
``<out>/summary.json``.
"""

import argparse
import json
import os
import time
from pathlib import Path

from corelw.cli import main as corelw

DEFAULT_METHODS = ["corel-cnn", "corel-bilstm", "baseline-lstm", "baseline-bilstm"]


def run(methods, repeats, threads, out: Path, extra_sets=()):
    summary = {}
    for method in methods:
        target = out / method
        argv = ["evaluate", "--method", method, "--repeats", str(repeats),
                "--threads", str(threads), "--out", str(target)]
        for s in extra_sets:
            argv += ["--set", s]
        t0 = time.perf_counter()
        status = corelw(argv)
        elapsed = time.perf_counter() - t0
        if status != 0:
            raise SystemExit(f"{method}: evaluate exited with status {status}")
        report = json.loads((target / "protocol_report.json").read_text())
        summary[method] = {
            "qwk_mean": report["qwk_mean"],
            "qwk_std": report["qwk_std"],
            "qwk_pooled": report["qwk_pooled"],
            "per_repeat": [r["qwk"] for r in report["repeats"]],
            "seconds": round(elapsed, 1),
        }
    return summary


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--methods", nargs="+", default=DEFAULT_METHODS)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="runs/benchmark")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    out = Path(args.out)
    summary = run(args.methods, args.repeats, args.threads, out, args.set)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"\n{'method':<18}{'mean':>8}{'std':>8}{'pooled':>8}{'sec':>8}")
    for m, s in summary.items():
        print(f"{m:<18}{s['qwk_mean']:>8.4f}{s['qwk_std']:>8.4f}{s['qwk_pooled']:>8.4f}{s['seconds']:>8.1f}")


if __name__ == "__main__":
    main()
