"""Run the full experiment pipeline: data, the three sweeps, trajectories, consistency.

    python scripts/reproduce.py --out runs/desk            # desk scale, a few minutes
    python scripts/reproduce.py --out runs/paper --paper-scale

Every step goes through the CLI, so outputs are identical to running the
subcommands by hand with the same flags.
"""
import argparse
import os
import sys

from s2sml.cli import main


def run(*argv):
    print("$ s2sml", " ".join(argv), flush=True)
    code = main(list(argv))
    if code != 0:
        sys.exit(code)


def parse():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/desk")
    p.add_argument("--seed", default="0")
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--n", default="50", help="neuron budget for training, trajectories and consistency")
    return p.parse_args()


if __name__ == "__main__":
    args = parse()
    n = int(args.n)
    common = ["--out", args.out, "--seed", args.seed, "--paper-scale" if args.paper_scale else "--desk-scale"]
    run("grad-check", *common)
    run("gen-data", *common)
    run("sweep-ratio", *common)
    run("sweep-n1", *common)
    run("compare-ml", *common, "--n", args.n)

    # r = 4 and r = 1/4 plus ML at the same budget
    big, small = 4 * n // 5, n // 5
    run("train", *common, "--arch", "ml", "--n", args.n)
    run("train", *common, "--arch", "seq2seq", "--n", args.n, "--n1", str(big))
    run("train", *common, "--arch", "seq2seq", "--n", args.n, "--n1", str(small))
    models = [f"model_ml_n{n}.json", f"model_seq2seq_n1_{big}_n2_{n - big}.json",
              f"model_seq2seq_n1_{small}_n2_{n - small}.json"]
    model_flags = sum([["--model", os.path.join(args.out, m)] for m in models], [])
    run("trajectories", *common, "--kp", "40", *model_flags)

    cons_out = os.path.join(args.out, "consistency")
    run("consistency", *common[2:], "--out", cons_out, "--data", os.path.join(args.out, "dataset.jsonl"),
        "--model", os.path.join(args.out, models[1]), "--tune-steps", "200")
