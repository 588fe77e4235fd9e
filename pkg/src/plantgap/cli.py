"""Command line entry point: ``plantgap <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .dimacs import read_instance, write_instance
from .experiment import estimate_row, load_coeffs, load_config, parse_grid, pipeline, QMC_FIELDS
from .hamiltonian import FieldCoefficients
from .perturbation import d_vector, perturbation_report, randomized_delta_samples, select_penalty_target
from .qmc import QmcParams, run_point
from .sat_instance import GenerationLimitError, add_penalty, generate_double_plant, ones, zeros
from .spectrum import spectrum_scan, write_spectrum_csv

EXIT_CAP = 2


def _coeffs(arg: str | None, n: int) -> FieldCoefficients | None:
    if arg is None or arg == "uniform":
        return None
    c = load_coeffs(arg)
    if c.n != n:
        raise SystemExit(f"coefficient file has {c.n} entries, instance has n={n}")
    return c


def _bits(text: str) -> tuple[int, int, int]:
    parts = tuple(int(x) for x in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated bit indices")
    return parts


def cmd_gen(a) -> int:
    rng = np.random.default_rng(a.seed)
    try:
        inst = generate_double_plant(a.n, rng, clause_cap=a.clause_cap)
    except GenerationLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    if a.penalize != "none":
        target = select_penalty_target(inst) if a.penalize == "auto" else int(a.penalize)
        inst = add_penalty(inst, target, a.penalty_bits)
    write_instance(inst, a.out)
    return 0


def cmd_exact(a) -> int:
    inst = read_instance(a.instance)
    rows = spectrum_scan(inst, _coeffs(a.coeffs, inst.n), parse_grid(a.s_grid))
    write_spectrum_csv(rows, a.out)
    return 0


def cmd_perturb(a) -> int:
    inst = read_instance(a.instance)
    rep = perturbation_report(inst, _coeffs(a.coeffs, inst.n))
    text = json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n"
    if a.out == "-":
        sys.stdout.write(text)
    else:
        with open(a.out, "w") as fh:
            fh.write(text)
    return 0


def cmd_hist(a) -> int:
    inst = read_instance(a.instance)
    samples, mean, var = randomized_delta_samples(d_vector(inst), a.samples, np.random.default_rng(a.rng_seed))
    counts, edges = np.histogram(samples, bins=a.bins)
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin_lo", "bin_hi", "count"))
        for lo, hi, k in zip(edges[:-1], edges[1:], counts):
            w.writerow((f"{lo:.8e}", f"{hi:.8e}", int(k)))
    print(f"mean {mean:.8e} variance {var:.8e}", file=sys.stderr)
    return 0


def cmd_qmc(a) -> int:
    inst = read_instance(a.instance)
    seed = zeros(inst.n) if a.seed_string == "zeros" else ones(inst.n)
    params = QmcParams(beta=a.beta, n_total_sweeps=a.sweeps, thin=a.thin, n_equil=a.equil)
    est = run_point(inst, _coeffs(a.coeffs, inst.n), a.s, seed, params, np.random.default_rng(a.rng_seed))
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QMC_FIELDS)
        w.writerow(estimate_row(a.s, a.seed_string, est))
    return 0


def cmd_pipeline(a) -> int:
    cfg = load_config(a.config)
    manifest = pipeline(cfg, a.out_dir, dry_run=a.dry_run)
    return 0 if manifest["complete"] or a.dry_run else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plantgap", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a certified double-plant instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--clause-cap", type=int, default=None)
    g.add_argument("--penalize", default="none", choices=["none", "auto", "0", "1"],
                   help="add the weight-1/2 penalty to a plant (auto: the one lower near s=1)")
    g.add_argument("--penalty-bits", type=_bits, default=(1, 2, 3))
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("exact", help="lowest two levels over an s grid")
    e.add_argument("--instance", required=True)
    e.add_argument("--coeffs", default="uniform")
    e.add_argument("--s-grid", required=True, help="start:stop:step")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_exact)

    t = sub.add_parser("perturb", help="second and fourth order report as JSON")
    t.add_argument("--instance", required=True)
    t.add_argument("--coeffs", default=None)
    t.add_argument("--out", default="-")
    t.set_defaults(func=cmd_perturb)

    h = sub.add_parser("hist", help="histogram of the randomized second-order difference")
    h.add_argument("--instance", required=True)
    h.add_argument("--samples", type=int, required=True)
    h.add_argument("--bins", type=int, default=50)
    h.add_argument("--rng-seed", type=int, default=0)
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_hist)

    q = sub.add_parser("qmc", help="one seeded chain at fixed s")
    q.add_argument("--instance", required=True)
    q.add_argument("--coeffs", default=None)
    q.add_argument("--s", type=float, required=True)
    q.add_argument("--seed-string", choices=["zeros", "ones"], required=True)
    q.add_argument("--beta", type=float, required=True)
    q.add_argument("--sweeps", type=int, required=True)
    q.add_argument("--thin", type=int, default=5)
    q.add_argument("--equil", type=int, default=0, help="samples discarded after thinning")
    q.add_argument("--rng-seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_qmc)

    pl = sub.add_parser("pipeline", help="full experiment from a YAML/JSON config")
    pl.add_argument("--config", required=True)
    pl.add_argument("--out-dir", default=".")
    pl.add_argument("--dry-run", action="store_true")
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
