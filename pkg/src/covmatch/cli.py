"""``covmatch`` command line.

Exit codes: 0 success, 2 bad model/policy file or arguments, 3 input outside
an operation's domain, 4 file system errors.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import sys
from pathlib import Path

import numpy as np

from . import gender, retrieval, simulator, verification
from .modelfile import dumps, format_float, load_model, load_policy, model_to_doc, policy_to_doc
from .prob import Channel, DomainError, ModelError, WorldModel

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_DOMAIN = 3
EXIT_IO = 4


def _labelled(labels, values) -> dict:
    return {lab: float(v) for lab, v in zip(labels, values)}


def _sim_config(args) -> simulator.SimConfig:
    return simulator.SimConfig(
        trials=args.simulate,
        seed=args.seed,
        chunk_size=args.chunk_size,
        confidence_z=args.z,
        workers=args.workers,
    )


def _pick_policy(kind: str, policy_file, model: WorldModel, n: int, empty_choice: str):
    if kind == "optimal":
        return retrieval.optimal_policy(model, n, empty_choice).policy
    if kind == "uniform":
        return retrieval.RetrievalPolicy.uniform(model.space)
    if kind == "identity":
        return retrieval.RetrievalPolicy.identity(model.space)
    if policy_file is None:
        raise ModelError("--policy file needs --policy-file PATH")
    return load_policy(policy_file, model.space)


def retrieval_report(args) -> dict:
    mf = load_model(args.model)
    model = mf.model
    policy = _pick_policy(args.policy, args.policy_file, model, args.n, args.empty_choice)
    answer = retrieval.evaluate_policy(policy, model, args.n, args.empty_choice)
    report = {
        "command": "retrieval",
        "model": mf.raw,
        "normalized": model_to_doc(model),
        "n": args.n,
        "empty_choice": args.empty_choice,
        "policy_kind": args.policy,
        "policy": policy_to_doc(policy),
        "per_probe_correct": _labelled(model.space.labels, answer.per_probe_correct),
        "unreachable": list(answer.unreachable),
        "analytic_error": answer.overall_error,
    }
    if args.simulate:
        sim = simulator.simulate_retrieval(model, args.n, policy, _sim_config(args), args.empty_choice)
        report["simulation"] = {"seed": args.seed, "chunk_size": args.chunk_size, **sim.as_dict()}
    return report


def verify_report(args) -> dict:
    mf = load_model(args.model)
    model = mf.model
    joints = verification.joint_tables(model)
    sol = verification.optimal_eer_from_joints(joints, args.beta)
    report = {
        "command": "verify",
        "model": mf.raw,
        "normalized": model_to_doc(model),
        "beta": sol.beta,
        "labels": list(model.space.labels),
        "joint_match": joints.match.tolist(),
        "joint_mismatch": joints.mismatch.tolist(),
        "accept": sol.policy.accept.tolist(),
        "eer": sol.eer,
        "far": sol.far,
        "frr": sol.frr,
    }
    if args.simulate:
        fa, fr = simulator.simulate_verification(model, sol.policy, _sim_config(args))
        report["simulation"] = {
            "seed": args.seed,
            "chunk_size": args.chunk_size,
            "far": fa.as_dict(),
            "frr": fr.as_dict(),
        }
    return report


def gender_report(args) -> dict:
    rates = gender.GenderErrorRates(args.e_f, args.e_v)
    report: dict = {"command": "gender", "task": args.task, "e_f": rates.e_f, "e_v": rates.e_v}
    model = rates.model()
    if args.task == "match12":
        strat = gender.match12_imperfect(rates)
        report.update(p_same=strat.p_same, error=strat.error)
        if args.check:
            general = retrieval.optimal_policy(model, 2, "uniform").overall_error
            table = gender.match12_from_table(rates, strat.p_same)
            report["check"] = {
                "retrieval_optimal_error": general,
                "abs_diff": abs(general - strat.error),
                "table_error": table,
                "table_abs_diff": abs(table - strat.error),
            }
    elif args.task == "match1n":
        if args.n is None:
            raise DomainError("match1n needs --n")
        if rates.e_f != 0 or rates.e_v != 0:
            raise DomainError("the 1:N closed form exists only for perfect gender labels (e_f = e_v = 0)")
        error = gender.match1n_perfect(args.n)
        report.update(n=args.n, error=error)
        if args.check:
            general = retrieval.optimal_policy(model, args.n).overall_error
            report["check"] = {"retrieval_optimal_error": general, "abs_diff": abs(general - error)}
    else:
        res = gender.verify_eer_imperfect(rates)
        report.update(alpha=res.alpha, p_accept=res.p_accept, q_accept=res.q_accept, eer=res.eer)
        if args.check:
            general = verification.optimal_eer(model).eer
            report["check"] = {"verification_optimal_eer": general, "abs_diff": abs(general - res.eer)}
    return report


def parse_grid(text: str, integer: bool = False) -> list:
    """``""`` (empty), ``"a,b,c"`` or inclusive ``"start:stop[:step]"``."""
    text = text.strip()
    if not text:
        return []
    conv = int if integer else float
    try:
        if ":" in text:
            parts = [conv(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(conv(1))
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError
            start, stop, step = parts
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            values = [start + i * step for i in range(max(count, 0))]
            return [int(v) for v in values] if integer else [round(v, 12) for v in values]
        return [conv(p) for p in text.split(",")]
    except ValueError:
        raise ModelError(f"cannot parse grid {text!r}") from None


def _template(path) -> WorldModel:
    if path is None:
        return WorldModel.binary_symmetric(0.0, 0.0)
    return load_model(path).model


def _with_noise(template: WorldModel, e_f: float, e_v: float) -> WorldModel:
    # probes are voices (e_v), gallery items faces (e_f)
    for e in (e_f, e_v):
        if not 0.0 <= e <= 1.0:
            raise DomainError(f"error rates must lie in [0, 1], got {e}")
    space = template.space
    return WorldModel(
        space,
        template.probe_prior,
        template.imposter_prior,
        Channel.symmetric(space, e_v),
        Channel.symmetric(space, e_f),
    )


def sweep_rows(args) -> tuple[list[str], list[list]]:
    sim = bool(args.simulate)
    if args.axis == "n":
        if args.model is None:
            raise ModelError("sweep n needs --model")
        model = load_model(args.model).model
        header = ["n", "analytic_error"]
        if sim:
            header += ["simulated_error", "std_error", "ci_low", "ci_high"]
        rows = []
        for n in parse_grid(args.n, integer=True):
            ans = retrieval.optimal_policy(model, n, args.empty_choice)
            row = [n, ans.overall_error]
            if sim:
                rep = simulator.simulate_retrieval(model, n, ans.policy, _sim_config(args), args.empty_choice)
                row += [rep.estimate, rep.std_error, rep.ci_low, rep.ci_high]
            rows.append(row)
        return header, rows

    template = _template(args.model)
    grid = list(itertools.product(parse_grid(args.e_f), parse_grid(args.e_v)))
    if args.task == "verify":
        header = ["e_f", "e_v", "eer", "far", "frr"]
        if sim:
            header += ["simulated_far", "simulated_frr", "far_std_error", "frr_std_error"]
    else:
        header = ["e_f", "e_v", "n", "analytic_error"]
        if sim:
            header += ["simulated_error", "std_error"]
    n = int(args.n) if args.task == "retrieval" else None
    rows = []
    for e_f, e_v in grid:
        model = _with_noise(template, e_f, e_v)
        if args.task == "verify":
            sol = verification.optimal_eer(model, args.beta)
            row = [e_f, e_v, sol.eer, sol.far, sol.frr]
            if sim:
                fa, fr = simulator.simulate_verification(model, sol.policy, _sim_config(args))
                row += [fa.estimate, fr.estimate, fa.std_error, fr.std_error]
        else:
            ans = retrieval.optimal_policy(model, n, args.empty_choice)
            row = [e_f, e_v, n, ans.overall_error]
            if sim:
                rep = simulator.simulate_retrieval(model, n, ans.policy, _sim_config(args), args.empty_choice)
                row += [rep.estimate, rep.std_error]
        rows.append(row)
    return header, rows


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in row])


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--simulate", type=int, default=0, metavar="TRIALS", help="Monte Carlo trials (0: off)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk-size", type=int, default=65536)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--z", type=float, default=3.0, help="confidence interval half-width in standard errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covmatch", description="Optimal matching and verification from noisy covariates."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retrieval", help="1-of-N retrieval error for a policy")
    p.add_argument("model")
    p.add_argument("--n", type=int, required=True, help="gallery size")
    p.add_argument("--policy", choices=["optimal", "uniform", "identity", "file"], default="optimal")
    p.add_argument("--policy-file")
    p.add_argument("--empty-choice", choices=retrieval.EMPTY_CHOICES, default="error")
    _add_sim_flags(p)

    p = sub.add_parser("verify", help="optimal EER verification policy")
    p.add_argument("model")
    p.add_argument("--beta", type=float, default=1.0, help="operating point FAR = beta * FRR")
    _add_sim_flags(p)

    p = sub.add_parser("gender", help="closed forms for 50/50 gender matching")
    p.add_argument("task", choices=["match12", "match1n", "verify"])
    p.add_argument("e_f", type=float, nargs="?", default=0.0, help="face gender error rate")
    p.add_argument("e_v", type=float, nargs="?", default=0.0, help="voice gender error rate")
    p.add_argument("--n", type=int)
    p.add_argument("--check", action="store_true", help="compare with the general solvers")

    p = sub.add_parser("sweep", help="write a CSV of errors over a parameter grid")
    p.add_argument("axis", choices=["n", "noise"])
    p.add_argument("--model", help="model file (required for the n axis; template priors for noise)")
    p.add_argument("--task", choices=["retrieval", "verify"], default="verify")
    p.add_argument("--n", default="2", help="n grid for the n axis, gallery size for noise")
    p.add_argument("--e-f", default="0:0.5:0.1")
    p.add_argument("--e-v", default="0:0.5:0.1")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--empty-choice", choices=retrieval.EMPTY_CHOICES, default="error")
    p.add_argument("--out", required=True)
    _add_sim_flags(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            header, rows = sweep_rows(args)
            write_csv(args.out, header, rows)
            print(dumps({"command": "sweep", "out": str(Path(args.out)), "rows": len(rows)}))
            return EXIT_OK
        builder = {"retrieval": retrieval_report, "verify": verify_report, "gender": gender_report}
        print(dumps(builder[args.command](args)))
        return EXIT_OK
    except ModelError as exc:
        print(f"covmatch: invalid input: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except DomainError as exc:
        print(f"covmatch: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"covmatch: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
