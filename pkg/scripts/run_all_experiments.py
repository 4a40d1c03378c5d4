"""Run every experiment driver at the acceptance sizes and write one CSV per
run into ``results/``.

    python3 scripts/run_all_experiments.py [--outdir results] [--quick]
"""
import argparse
import pathlib
import time

from fembem.experiments import CsvSink, ExperimentConfig, run_experiment, run_metadata

RUNS = {
    "weaksing": dict(experiment="weaksing", levels=14),
    "jn": dict(experiment="jn", levels=11),
    "jn_hb": dict(experiment="jn", levels=11, precond="hb", spectra=False),
    "sym_vs_jn": dict(experiment="sym_vs_jn", levels=11),
    "bmc": dict(experiment="bmc", levels=11),
    "artificial": dict(experiment="artificial", levels=23),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--quick", action="store_true", help="four levels per run")
    ap.add_argument("--only", nargs="*", choices=sorted(RUNS), help="subset of runs")
    args = ap.parse_args()
    out = pathlib.Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only or RUNS:
        kw = dict(RUNS[name])
        if args.quick:
            kw["levels"] = min(kw["levels"], 4)
        cfg = ExperimentConfig(**kw)
        t = time.perf_counter()
        with open(out / f"{name}.csv", "w") as fh:
            run_experiment(cfg, CsvSink(fh, run_metadata(cfg)))
        print(f"{name}: {time.perf_counter() - t:.1f}s -> {out / (name + '.csv')}")


if __name__ == "__main__":
    main()
