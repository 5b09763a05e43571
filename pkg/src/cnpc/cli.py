"""Command-line entry points for the full pipeline.

Exit codes: 0 success, 1 validation/model error, 2 I/O or file-format
error. Log level comes from the CNPC_LOG environment variable.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import runtime
from .bundle import load_bundle
from .compiler import compile as compile_circuit
from .compiler import minfill_order, parse_circuit, serialize_circuit
from .datagen import (
    CorruptionConfig,
    corrupt,
    fit_dataset_params,
    generate,
    mnistadd_syn,
    read_dataset,
    write_dataset,
)
from .evaluation import (
    SweepCase,
    ablate_alpha,
    equality_trial,
    run_sweep,
    verify_bounds,
    write_bounds_csv,
    write_report_csv,
)
from .model import (
    FormatError,
    InterventionSet,
    ModelError,
    parse_model,
    serialize_model,
)
from .predictor import TrainConfig, load_predictor, save_predictor, train

log = logging.getLogger("cnpc")


def _setup_logging() -> None:
    level = os.environ.get("CNPC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _read_model(path: str):
    return parse_model(Path(path).read_text(encoding="utf-8"))


def _parse_assignment(pairs: list[str], model) -> dict[str, int]:
    out: dict[str, int] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ModelError(f"expected VAR=STATE, got {pair!r}")
        name, state = pair.split("=", 1)
        var = model.variable(name)
        if state not in var.states:
            raise ModelError(f"unknown state {state!r} for {name} (states: {list(var.states)})")
        out[name] = var.states.index(state)
    return out


def _parse_corruption(spec: str) -> CorruptionConfig:
    if spec in ("none", ""):
        return CorruptionConfig("none")
    if spec == "spurious_flip":
        return CorruptionConfig("spurious_flip")
    if spec.startswith("gaussian"):
        sigma = float(spec[spec.index("(") + 1 : spec.index(")")]) if "(" in spec else None
        return CorruptionConfig("gaussian") if sigma is None else CorruptionConfig("gaussian", sigma=sigma)
    if spec.startswith("permute"):
        seed = int(spec[spec.index("(") + 1 : spec.index(")")]) if "(" in spec else 0
        return CorruptionConfig("permute", seed=seed)
    if spec.startswith("pgd"):
        if "(" in spec:
            eps, step, iters = spec[spec.index("(") + 1 : spec.index(")")].split(",")
            return CorruptionConfig("pgd", epsilon=float(eps), step=float(step), iters=int(iters))
        return CorruptionConfig("pgd")
    raise ModelError(f"unknown corruption spec {spec!r}")


def cmd_gen_data(args) -> int:
    model = mnistadd_syn() if args.model == "mnistadd" else _read_model(args.model)
    dataset = generate(model, args.n, args.seed, args.latent_dim, args.spurious_channels)
    write_dataset(dataset, args.out)
    log.info("wrote dataset (%d rows) to %s", args.n, args.out)
    print(f"dataset written to {args.out}")
    return 0


def cmd_fit_params(args) -> int:
    dataset = read_dataset(args.data_dir)
    fitted = fit_dataset_params(dataset, smoothing=args.smoothing)
    Path(args.out).write_text(serialize_model(fitted), encoding="utf-8")
    print(f"fitted model written to {args.out}")
    return 0


def cmd_compile(args) -> int:
    model = _read_model(args.model)
    order = minfill_order(model)
    circuit = compile_circuit(model, order)
    Path(args.out).write_text(serialize_circuit(circuit, model), encoding="utf-8")
    print(f"circuit with {len(circuit)} nodes written to {args.out}")
    return 0


def cmd_train_predictor(args) -> int:
    dataset = read_dataset(args.data_dir)
    model = dataset.model
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        hidden_dim=args.hidden_dim,
        seed=args.seed,
        select_best_validation=not args.last_epoch,
    )
    attrs = dataset.attr_labels()
    train_idx = dataset.split_rows("train")
    val_idx = dataset.split_rows("val")
    params = train(
        config,
        dataset.embeddings[train_idx],
        attrs[train_idx],
        dataset.embeddings[val_idx],
        attrs[val_idx],
        [model.card(a) for a in model.attributes],
    )
    save_predictor(params, args.out, config, dataset.digest(), model.attributes)
    print(f"predictor written to {args.out}")
    return 0


def cmd_query(args) -> int:
    from .bundle import load_params_model

    model = _read_model(args.model)
    params_model = load_params_model(model, args.params or None)
    params = runtime.ParamBinding.from_model(params_model)
    circuit = parse_circuit(Path(args.circuit).read_text(encoding="utf-8"), model)
    event = _parse_assignment(args.event or [], model)
    evidence = _parse_assignment(args.evidence or [], model)
    do = InterventionSet.from_dict(_parse_assignment(args.do or [], model))

    if evidence and do:
        raise ModelError("conditional and interventional parts cannot be combined")
    if do:
        value = runtime.query_interventional(circuit, params, event, do)
    elif evidence:
        value = runtime.query_conditional(circuit, params, event, evidence)
    else:
        value = runtime.query_marginal(circuit, params, event)
    print(f"{value:.17g}")

    if args.oracle:
        from . import oracle as oracle_mod

        if do:
            ref = oracle_mod.interventional(params_model, event, do)
        elif evidence:
            ref = oracle_mod.conditional(params_model, event, evidence)
        else:
            ref = oracle_mod.marginal(params_model, event)
        diff = abs(value - ref)
        print(f"oracle   {ref:.17g}  (|diff| = {diff:.3g})")
        if diff > 1e-9:
            raise ModelError(f"circuit and oracle disagree by {diff}")
    return 0


def _build_cases(args, seeds: list[int]) -> list[SweepCase]:
    corruption = _parse_corruption(args.corruption)
    cases = []
    for seed in seeds:
        data_dir = args.data_dir if len(seeds) == 1 else f"{args.data_dir}-{seed}"
        dataset = read_dataset(data_dir)
        fitted = fit_dataset_params(dataset, smoothing=args.smoothing)
        circuit = compile_circuit(fitted)
        params = runtime.ParamBinding.from_model(fitted)
        predictor, _ = load_predictor(
            args.predictor if len(seeds) == 1 else f"{args.predictor}-{seed}.json"
        )
        applied = dataset
        if corruption.mode != "none":
            applied = corrupt(dataset, corruption, predictor)
        cases.append(
            SweepCase(seed, applied, predictor, circuit, params, corruption.tag, fitted)
        )
    return cases


def _write_reports(rows, out: str, config: dict) -> None:
    from .evaluation import write_report_summary

    write_report_csv(rows, out)
    summary_path = str(Path(out).with_suffix(".json"))
    write_report_summary(rows, summary_path, config)
    print(f"report with {len(rows)} rows written to {out} (summary: {summary_path})")


def cmd_eval(args) -> int:
    seeds = [int(s) for s in args.seeds.split(",")]
    cases = _build_cases(args, seeds)
    rows = run_sweep(cases, args.alpha)
    _write_reports(rows, args.out, {
        "alpha": args.alpha, "seeds": seeds, "corruption": args.corruption,
        "smoothing": args.smoothing, "data_dir": args.data_dir,
    })
    return 0


def cmd_ablate_alpha(args) -> int:
    seeds = [int(s) for s in args.seeds.split(",")]
    cases = _build_cases(args, seeds)
    grid = [float(a) for a in args.grid.split(",")] if args.grid else None
    rows = ablate_alpha(cases, grid)
    _write_reports(rows, args.out, {
        "grid": grid or [round(0.1 * i, 1) for i in range(11)], "seeds": seeds,
        "corruption": args.corruption, "smoothing": args.smoothing,
        "data_dir": args.data_dir,
    })
    return 0


def cmd_verify_bounds(args) -> int:
    rows = equality_trial(args.seed) + verify_bounds(args.trials, args.seed)
    write_bounds_csv(rows, args.out)
    worst = min(r.slack for r in rows)
    print(f"{len(rows)} inequality rows written to {args.out}; min slack = {worst:.3g}")
    if worst < -1e-9:
        raise ModelError(f"bound violated: min slack {worst}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    bundle = load_bundle(
        args.model,
        args.circuit,
        args.predictor,
        args.data_dir,
        alpha=args.alpha,
        reveal_ground_truth=args.reveal_ground_truth,
        params_path=args.params or None,
    )
    static = args.static_dir if args.static_dir and Path(args.static_dir).is_dir() else None
    app = create_app(bundle, static_dir=static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cnpc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="sample labels, build embeddings, write a dataset dir")
    g.add_argument("--model", default="mnistadd", help="model file, or 'mnistadd' for the shipped generator")
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--latent-dim", type=int, default=32)
    g.add_argument("--spurious-channels", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    f = sub.add_parser("fit-params", help="maximum-likelihood CPDs from a dataset's training split")
    f.add_argument("--data-dir", required=True)
    f.add_argument("--smoothing", type=float, default=1.0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit_params)

    c = sub.add_parser("compile", help="compile a model into an arithmetic circuit")
    c.add_argument("--model", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compile)

    t = sub.add_parser("train-predictor", help="train the multi-head attribute predictor")
    t.add_argument("--data-dir", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--learning-rate", type=float, default=0.01)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--weight-decay", type=float, default=4e-5)
    t.add_argument("--hidden-dim", type=int, default=128)
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--last-epoch", action="store_true",
                   help="return final-epoch parameters instead of the best-validation checkpoint")
    t.set_defaults(func=cmd_train_predictor)

    q = sub.add_parser("query", help="marginal/conditional/interventional circuit query")
    q.add_argument("--model", required=True)
    q.add_argument("--circuit", required=True)
    q.add_argument("--params", default="",
                   help="optional model file supplying CPD values (same structure)")
    q.add_argument("--event", nargs="*", metavar="VAR=STATE")
    q.add_argument("--evidence", nargs="*", metavar="VAR=STATE")
    q.add_argument("--do", nargs="*", metavar="VAR=STATE")
    q.add_argument("--oracle", action="store_true", help="cross-check against enumeration")
    q.set_defaults(func=cmd_query)

    e = sub.add_parser("eval", help="intervention sweep over budgets 0..K")
    e.add_argument("--data-dir", required=True,
                   help="dataset dir; with multiple seeds, '<dir>-<seed>' per seed")
    e.add_argument("--predictor", required=True,
                   help="predictor file; with multiple seeds, '<path>-<seed>.json' per seed")
    e.add_argument("--alpha", type=float, default=0.9)
    e.add_argument("--seeds", default="42")
    e.add_argument("--corruption", default="none",
                   help="none | gaussian(S) | permute(SEED) | pgd(EPS,STEP,ITERS) | spurious_flip")
    e.add_argument("--smoothing", type=float, default=1.0)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate-alpha", help="sweep across an alpha grid")
    a.add_argument("--data-dir", required=True)
    a.add_argument("--predictor", required=True)
    a.add_argument("--seeds", default="42")
    a.add_argument("--corruption", default="none")
    a.add_argument("--smoothing", type=float, default=1.0)
    a.add_argument("--grid", default="", help="comma-separated alphas (default 0.0..1.0 step 0.1)")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_ablate_alpha)

    v = sub.add_parser("verify-bounds", help="check the KL error bounds on random discrete worlds")
    v.add_argument("--trials", type=int, default=50)
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_verify_bounds)

    s = sub.add_parser("serve", help="run the HTTP service for the console")
    s.add_argument("--model", required=True)
    s.add_argument("--circuit", required=True)
    s.add_argument("--params", default="",
                   help="optional model file supplying CPD values (same structure)")
    s.add_argument("--predictor", required=True)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--alpha", type=float, default=0.9)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--reveal-ground-truth", action="store_true")
    s.add_argument("--static-dir", default="",
                   help="directory with the built console bundle to serve at /")
    s.set_defaults(func=cmd_serve)

    return p


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ModelError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
