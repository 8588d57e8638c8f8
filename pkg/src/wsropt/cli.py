"""Command-line harness: dataset generation, axiom checks, solving,
training, benchmark evaluation and convergence traces.

Every emitted file is a deterministic function of the flags and seeds, so
re-runs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from wsropt import autodiff as ad
from wsropt.channel import (
    NetworkInstance,
    ScenarioConfig,
    generate_dataset,
    load_dataset,
    sample_weights,
    save_dataset,
)
from wsropt.fplinq import fplinq_solve
from wsropt.interference import (
    affine_model,
    check_log_concavity_ratio,
    check_standard_axioms,
    rayleigh_model,
)
from wsropt.solvers import (
    SolverConfig,
    solve_pda_exact,
    solve_special_case,
    wsr,
)
from wsropt.unfolding import (
    TrainConfig,
    forward_batch,
    load_checkpoint,
    save_checkpoint,
    train,
    write_training_log,
)

MODELS = {"affine": affine_model, "rayleigh": rayleigh_model}


def _fixture_k2() -> NetworkInstance:
    """Desk-scale two-link instance used across examples and tests."""
    return NetworkInstance(gains=np.array([[1.0, 0.5], [0.2, 1.0]]),
                           weights=np.ones(2), p_max=1.0, noise=0.1, seed=0)


def _eval_weights(dataset, weight_mode: str, eval_seed: int):
    K = dataset.config.num_links
    return [sample_weights(K, weight_mode, np.random.default_rng([eval_seed, i]))
            for i in range(len(dataset.instances))]


def _lpda_power_traces(dataset, uparams):
    """Per-iteration LPDA powers for every instance, batched; weights enter
    the forward pass, so they are baked into the instances beforehand."""
    G = np.stack([inst.gains for inst in dataset.instances])
    w = np.stack([inst.weights for inst in dataset.instances])
    _, _, trace, _ = forward_batch(G, w, uparams, ad.Tape())
    return trace


def eval_performance_ratio(dataset, uparams, fp_iters: int = 100,
                           weight_mode: str = "uniform01", eval_seed: int = 0):
    """Mean over instances of WSR(LPDA) / WSR(FPLinQ after fp_iters)."""
    if not dataset.instances:
        raise ValueError("empty dataset")
    if dataset.config.num_links != uparams.mlp.layer_dims[-1]:
        raise ValueError(
            f"dataset K={dataset.config.num_links} does not match "
            f"checkpoint K={uparams.mlp.layer_dims[-1]}"
        )
    weights = _eval_weights(dataset, weight_mode, eval_seed)
    model = affine_model()
    evaluated = [
        NetworkInstance(gains=inst.gains, weights=w_i, p_max=inst.p_max,
                        noise=inst.noise, seed=inst.seed)
        for inst, w_i in zip(dataset.instances, weights)
    ]
    trace = _lpda_power_traces(
        type(dataset)(config=dataset.config, instances=evaluated), uparams)
    p_lpda = trace[-1]
    rows = []
    for i, inst in enumerate(evaluated):
        wsr_lpda = wsr(inst, model, p_lpda[i], inst.weights)
        wsr_fp = fplinq_solve(inst, inst.weights, iters=fp_iters).objective_trace[-1][1]
        rows.append({"instance_id": inst.seed, "wsr_lpda": wsr_lpda,
                     "wsr_fplinq": wsr_fp, "ratio": wsr_lpda / wsr_fp})
    mean_ratio = float(np.mean([r["ratio"] for r in rows]))
    return mean_ratio, rows


def convergence_trace(dataset, uparams, fp_iters: int = 100,
                      weight_mode: str = "uniform01", eval_seed: int = 0,
                      log_base: float = np.e):
    """Mean WSR per iteration for FPLinQ and LPDA over the dataset."""
    weights = _eval_weights(dataset, weight_mode, eval_seed)
    model = affine_model()
    evaluated = [
        NetworkInstance(gains=inst.gains, weights=w_i, p_max=inst.p_max,
                        noise=inst.noise, seed=inst.seed)
        for inst, w_i in zip(dataset.instances, weights)
    ]
    fp_traces = np.array([
        [v for _, v in fplinq_solve(inst, inst.weights, iters=fp_iters).objective_trace]
        for inst in evaluated
    ])
    lpda_powers = _lpda_power_traces(
        type(dataset)(config=dataset.config, instances=evaluated), uparams)
    lpda_traces = np.array([
        [wsr(inst, model, pk[i], inst.weights) for pk in lpda_powers]
        for i, inst in enumerate(evaluated)
    ])
    scale = 1.0 / np.log(log_base)
    fp_mean = fp_traces.mean(axis=0) * scale
    lpda_mean = lpda_traces.mean(axis=0) * scale
    rows = []
    for k in range(max(len(fp_mean), len(lpda_mean))):
        rows.append({
            "iteration": k,
            "mean_wsr_fplinq": fp_mean[k] if k < len(fp_mean) else "",
            "mean_wsr_lpda": lpda_mean[k - 1] if 1 <= k <= len(lpda_mean) else "",
        })
    return rows


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row[h]) for h in header) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _scenario_from_args(args) -> ScenarioConfig:
    return ScenarioConfig(
        num_links=args.k, area_side=args.area_side, d_min=args.d_min,
        d_max=args.d_max, carrier_freq=args.carrier_freq,
        bandwidth=args.bandwidth, antenna_height=args.antenna_height,
        tx_power_dbm=args.tx_power_dbm, noise_psd_dbm_hz=args.noise_psd_dbm_hz,
        rng_seed=args.seed,
    )


def _add_scenario_flags(sp):
    sp.add_argument("--k", type=int, default=10, help="number of links")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--area-side", type=float, default=500.0)
    sp.add_argument("--d-min", type=float, default=2.0)
    sp.add_argument("--d-max", type=float, default=65.0)
    sp.add_argument("--carrier-freq", type=float, default=2.4e9)
    sp.add_argument("--bandwidth", type=float, default=20e6)
    sp.add_argument("--antenna-height", type=float, default=1.5)
    sp.add_argument("--tx-power-dbm", type=float, default=20.0)
    sp.add_argument("--noise-psd-dbm-hz", type=float, default=-174.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsropt",
        description="Power control for K-link interference networks",
    )
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen", help="generate a scenario dataset")
    _add_scenario_flags(sp)
    sp.add_argument("--count", type=int, default=500)
    sp.add_argument("--weight-mode", choices=["uniform01", "ones"],
                    default="uniform01")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("axioms", help="randomized interference axiom checks")
    sp.add_argument("--model", choices=sorted(MODELS), default="affine")
    sp.add_argument("--trials", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--k", type=int, default=4)
    sp.add_argument("--out", help="write the JSON report here instead of stdout")

    sp = sub.add_parser("solve", help="run a solver on a dataset or fixture")
    sp.add_argument("--solver",
                    choices=["special_case", "pda_exact", "fplinq"],
                    required=True)
    sp.add_argument("--model", choices=sorted(MODELS), default="affine")
    sp.add_argument("--dataset", help="JSON-lines dataset; omit for the K=2 fixture")
    sp.add_argument("--fp-iters", type=int, default=100)
    sp.add_argument("--out", help="summary JSON path")
    sp.add_argument("--trace-out", help="objective trace CSV path")

    sp = sub.add_parser("train", help="train the learned primal-dual solver")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--n-train", type=int, default=1000)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--lr-decay", type=float, default=0.99)
    sp.add_argument("--weight-mode", choices=["uniform01", "ones"],
                    default="uniform01")
    sp.add_argument("--n-unroll", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="checkpoint JSON path")
    sp.add_argument("--log", help="training log CSV path")

    sp = sub.add_parser("eval", help="performance ratio against FPLinQ")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--fp-iters", type=int, default=100)
    sp.add_argument("--weight-mode", choices=["uniform01", "ones"],
                    default="uniform01")
    sp.add_argument("--eval-seed", type=int, default=0)
    sp.add_argument("--out", help="metrics CSV path")
    sp.add_argument("--summary", help="summary JSON path")

    sp = sub.add_parser("trace", help="mean WSR per iteration trace CSV")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--fp-iters", type=int, default=100)
    sp.add_argument("--weight-mode", choices=["uniform01", "ones"],
                    default="uniform01")
    sp.add_argument("--eval-seed", type=int, default=0)
    sp.add_argument("--log-base", type=float, default=np.e)
    sp.add_argument("--out", required=True)

    return parser


def _apply_config_file(parser, argv):
    """Use a JSON config as flag defaults; explicit flags win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    with open(path) as fh:
        cfg = json.load(fh)
    extra = []
    for key, value in cfg.items():
        flag = "--" + key.replace("_", "-")
        if flag not in argv:
            extra += [flag, str(value)]
    rest = argv[:idx] + argv[idx + 2:]
    # subcommand name must stay first
    return rest[:1] + extra + rest[1:]


def _cmd_gen(args) -> int:
    config = _scenario_from_args(args)
    dataset = generate_dataset(config, args.count, weight_mode=args.weight_mode)
    save_dataset(dataset, args.out)
    print(f"wrote {args.count} instances (K={args.k}) to {args.out}")
    return 0


def _random_feasible_instance(K, rng):
    """Small desk-scale instance on which the uncapped fixed point exists."""
    gains = rng.uniform(0.0, 0.3 / K, size=(K, K))
    np.fill_diagonal(gains, rng.uniform(0.5, 2.0, size=K))
    return NetworkInstance(gains=gains, weights=sample_weights(K, "uniform01", rng),
                           p_max=1.0, noise=0.05, seed=int(rng.integers(1 << 31)))


def _cmd_axioms(args) -> int:
    model = MODELS[args.model]()
    rng = np.random.default_rng(args.seed)
    instance = _random_feasible_instance(args.k, rng)
    report = check_standard_axioms(model, instance, args.trials, rng,
                                   seed=args.seed)
    ratio = check_log_concavity_ratio(model, instance, args.trials, rng,
                                      seed=args.seed)
    report.checks.update(ratio.checks)
    text = report.to_json(indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if report.all_passed else 1


def _cmd_solve(args) -> int:
    model = MODELS[args.model]()
    if args.dataset:
        instances = load_dataset(args.dataset).instances
    else:
        instances = [_fixture_k2()]
    summaries = []
    last_result = None
    for inst in instances:
        if args.solver == "special_case":
            result = solve_special_case(inst, model, inst.weights, SolverConfig())
        elif args.solver == "pda_exact":
            result = solve_pda_exact(inst, model, inst.weights, SolverConfig())
        else:
            result = fplinq_solve(inst, inst.weights, iters=args.fp_iters)
        summaries.append({"instance_id": inst.seed, **result.to_dict()})
        last_result = result
    doc = {"solver": args.solver, "model": args.model, "results": summaries}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
    else:
        print(json.dumps(doc, indent=2))
    if args.trace_out and last_result is not None:
        with open(args.trace_out, "w") as fh:
            for line in last_result.trace_csv_rows():
                fh.write(line + "\n")
    return 0


def _cmd_train(args) -> int:
    config = TrainConfig(
        n_train=args.n_train, batch_size=args.batch_size, epochs=args.epochs,
        lr_initial=args.lr, lr_decay=args.lr_decay,
        weight_mode=args.weight_mode, K=args.k, seed=args.seed,
        n_unroll=args.n_unroll,
    )
    uparams, log = train(config)
    save_checkpoint(uparams, args.out, train_config=config,
                    metadata={"epochs_run": len(log),
                              "final_train_loss_nats": log[-1]["mean_train_loss_nats"]})
    if args.log:
        write_training_log(log, args.log)
    print(f"checkpoint written to {args.out} "
          f"(final train loss {log[-1]['mean_train_loss_nats']:.4f} nats)")
    return 0


def _cmd_eval(args) -> int:
    dataset = load_dataset(args.dataset)
    uparams = load_checkpoint(args.checkpoint)
    mean_ratio, rows = eval_performance_ratio(
        dataset, uparams, fp_iters=args.fp_iters,
        weight_mode=args.weight_mode, eval_seed=args.eval_seed)
    if args.out:
        _write_csv(args.out, ["instance_id", "wsr_lpda", "wsr_fplinq", "ratio"],
                   rows)
    summary = {"mean_ratio": mean_ratio, "instances": len(rows),
               "fp_iters": args.fp_iters, "weight_mode": args.weight_mode,
               "eval_seed": args.eval_seed}
    if args.summary:
        with open(args.summary, "w") as fh:
            json.dump(summary, fh, indent=2)
    print(json.dumps(summary))
    return 0


def _cmd_trace(args) -> int:
    dataset = load_dataset(args.dataset)
    uparams = load_checkpoint(args.checkpoint)
    rows = convergence_trace(dataset, uparams, fp_iters=args.fp_iters,
                             weight_mode=args.weight_mode,
                             eval_seed=args.eval_seed, log_base=args.log_base)
    _write_csv(args.out, ["iteration", "mean_wsr_fplinq", "mean_wsr_lpda"], rows)
    print(f"wrote {len(rows)} trace rows to {args.out}")
    return 0


COMMANDS = {
    "gen": _cmd_gen,
    "axioms": _cmd_axioms,
    "solve": _cmd_solve,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "trace": _cmd_trace,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
