"""Command-line entry point: ``layoutrank <subcommand> [flags]``.

Exit codes: 0 success, 1 I/O or configuration error, 2 domain failure
(no valid layout, degenerate dataset, failed self-check).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

EXIT_OK, EXIT_IO, EXIT_DOMAIN = 0, 1, 2


class DomainFailure(Exception):
    pass


def _emit(obj, pretty_text: str | None, args) -> None:
    if getattr(args, "pretty", False) and pretty_text is not None:
        print(pretty_text)
    else:
        print(json.dumps(obj, sort_keys=True))


def _widths(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    return (int(lo), int(hi)) if sep else (int(lo), int(lo))


# -- subcommands --------------------------------------------------------------

def cmd_synth_device(args):
    from .device import synthesize_device

    dev = synthesize_device(args.Q, args.topology, args.heterogeneity, args.seed)
    if args.out:
        dev.save(args.out)
    summary = {"name": dev.name, "Q": dev.Q, "edges": sorted(list(e) for e in dev.edges),
               "timestamp": dev.timestamp, "out": args.out}
    _emit(summary if args.out else dev.to_dict(), None, args)


def cmd_datagen(args):
    from .dataset import generate_dataset
    from .device import load_calibration
    from .ensembles import DEFAULT_PROPORTIONS, EnsembleConfig

    dev = load_calibration(args.device)
    props = json.loads(args.proportions) if isinstance(args.proportions, str) else args.proportions
    cfg = EnsembleConfig(props or dict(DEFAULT_PROPORTIONS), _widths(args.widths), args.count, args.seed,
                         args.qaoa_layers)
    ds = generate_dataset(cfg, dev, args.shots, args.seed, out_dir=args.out, over_rotation=args.over_rotation)
    if ds.N_B == 0:
        raise DomainFailure("no circuit produced a batch with two or more layouts")
    _emit({"out": args.out, "N_B": ds.N_B, "composition": ds.meta["composition"],
           "dropped": len(ds.meta["dropped"])}, None, args)


def cmd_enumerate_layouts(args):
    from .circuit import Circuit
    from .device import load_calibration
    from .layouts import circuit_graph, enumerate_layouts

    circ = Circuit.load(args.circuit)
    dev = load_calibration(args.device)
    lays = enumerate_layouts(circuit_graph(circ), dev, args.limit)
    if not lays:
        raise DomainFailure("no valid layout: the circuit graph does not embed in the device")
    lines = "\n".join(" ".join(str(p) for p in l.mapping) for l in lays)
    _emit({"count": len(lays), "layouts": [list(l.mapping) for l in lays]}, lines, args)


def cmd_train(args):
    from .dataset import RankingDataset
    from .losses import LossConfig
    from .trainer import TrainConfig, train

    ds = RankingDataset.load(args.data)
    cfg = TrainConfig(LossConfig(args.loss, args.d, args.K, args.epsilon), args.epochs, args.max_lr,
                      args.split, args.seed, args.grad_check, args.sharing)
    res = train(ds, cfg, log_path=args.log)
    ckpt = res.checkpoint(cfg)
    with open(args.out, "w") as fh:
        json.dump(ckpt, fh, indent=1, sort_keys=True)
        fh.write("\n")
    last = res.log[-1]
    _emit({"out": args.out, "best_epoch": res.best_epoch, "skipped_batches": res.skipped,
           "final": last}, None, args)


def _load_model(path):
    from .score import ScoreParams

    with open(path) as fh:
        return ScoreParams.from_dict(json.load(fh)), path


def cmd_rank(args):
    from .circuit import Circuit, schedule
    from .device import load_calibration
    from .layouts import circuit_graph, enumerate_layouts
    from .score import total_score

    circ = Circuit.load(args.circuit)
    dev = load_calibration(args.device)
    params, _ = _load_model(args.model)
    lays = enumerate_layouts(circuit_graph(circ), dev)
    if not lays:
        raise DomainFailure("no valid layout: the circuit graph does not embed in the device")
    rows = []
    for lay in lays:
        bd = total_score(circ, lay, dev, params, schedule(circ, dev, lay))
        rows.append({"layout": list(lay.mapping), **bd.to_dict()})
    rows.sort(key=lambda r: (-r["total"], r["layout"]))
    rows = rows[:args.top]
    text = "\n".join(
        f"{i + 1:4d}  {' '.join(map(str, r['layout'])):<20} score={r['total']:.6f}  "
        f"gate={r['s_gate']:.4f} msmt={r['s_msmt']:.4f} t1={r['s_t1']:.4f} zz={r['s_zz']:.4f}"
        for i, r in enumerate(rows)
    )
    _emit({"ranking": rows}, text, args)


def cmd_eval(args):
    from .dataset import RankingDataset
    from .evaluation import LearnedMethod, MapomaticMethod, RandomMethod, evaluate

    ds = RankingDataset.load(args.data)
    params, _ = _load_model(args.model)
    with open(args.model) as fh:
        training = json.load(fh).get("training", {})
    batches = list(ds)
    if args.split == "test" and training.get("test_batches"):
        keep = set(training["test_batches"])
        batches = [b for b in ds if b.batch_id in keep]
    methods = [LearnedMethod(params), MapomaticMethod(), RandomMethod(0)]
    if args.baseline not in {m.name for m in methods}:
        raise ValueError(f"unknown baseline {args.baseline!r}")
    rep = evaluate(methods, batches, args.baseline, seeds=range(args.seeds), tol=args.tol)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(rep.to_json() + "\n")
    _emit(rep.to_dict(), rep.table(), args)


def cmd_selfcheck(args):
    from .selfcheck import run_all

    checks = run_all(args.samples, args.batches, args.seed)
    rows = [c.to_dict() for c in checks]
    text = "\n".join(
        f"{'PASS' if c.passed else 'FAIL'}  {c.name:<28} measured={c.measured!s:<24} expected={c.expected} "
        f"tol={c.tolerance:g}" for c in checks
    )
    _emit({"checks": rows, "passed": all(c.passed for c in checks)}, text, args)
    if not all(c.passed for c in checks):
        raise DomainFailure("self-check failed")


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .device import TOPOLOGIES
    from .losses import DEFAULT_EPSILON, LOSS_KINDS

    p = argparse.ArgumentParser(prog="layoutrank", description="Learned layout ranking for quantum circuits.")
    p.add_argument("--config", help="JSON file supplying default values for any flag")
    p.add_argument("--pretty", action="store_true", help="human-readable tables instead of JSON")
    p.add_argument("-v", "--verbose", action="store_true")
    # the output flags are also accepted after the subcommand; SUPPRESS keeps the top-level value otherwise
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pretty", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-device", parents=[common], help="synthesize a calibration snapshot")
    s.add_argument("--Q", type=int, default=7)
    s.add_argument("--topology", choices=TOPOLOGIES, default="heavy-hex-cell")
    s.add_argument("--heterogeneity", type=float, default=3.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth_device)

    s = sub.add_parser("datagen", parents=[common], help="sample an ensemble and simulate every layout")
    s.add_argument("--device", required=True)
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--widths", default="3..6")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--shots", type=int, default=4096)
    s.add_argument("--proportions", help='JSON map, e.g. {"CCP": 0.5, "BV": 0.5}')
    s.add_argument("--qaoa-layers", type=int, default=1)
    s.add_argument("--over-rotation", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_datagen)

    s = sub.add_parser("enumerate-layouts", parents=[common], help="list every valid layout of a circuit")
    s.add_argument("--circuit", required=True)
    s.add_argument("--device", required=True)
    s.add_argument("--limit", type=int)
    s.set_defaults(func=cmd_enumerate_layouts)

    s = sub.add_parser("train", parents=[common], help="fit score parameters on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--loss", choices=LOSS_KINDS, default="rank-mse")
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--K", type=int, default=1)
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--epochs", type=int, default=200)
    s.add_argument("--max-lr", type=float, default=0.05)
    s.add_argument("--split", type=float, default=0.8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sharing", choices=("per-qubit", "gate-name"), default="per-qubit")
    s.add_argument("--grad-check", action="store_true")
    s.add_argument("--log", help="line-delimited JSON training log")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("rank", parents=[common], help="rank the layouts of a circuit with a trained model")
    s.add_argument("--circuit", required=True)
    s.add_argument("--device", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("eval", parents=[common], help="compare learned, Mapomatic and random selection")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--baseline", default="mapomatic")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--tol", type=float, default=0.0)
    s.add_argument("--split", choices=("test", "all"), default="test")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("selfcheck", parents=[common], help="run the numerical oracles")
    s.add_argument("--samples", type=int, default=10**6)
    s.add_argument("--batches", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_selfcheck)
    return p


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("command", nargs="?")
    early, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices
    if early.config and early.command in subs:
        with open(early.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValueError("config file must hold a JSON object")
        defaults = {k.replace("-", "_"): v for k, v in cfg.items()}
        # file values become defaults; flags given on the command line still win
        sub = subs[early.command]
        top = {a.dest for a in parser._actions}
        unknown = set(defaults) - {a.dest for a in sub._actions} - top
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**{k: v for k, v in defaults.items() if k not in top})
        parser.set_defaults(**{k: v for k, v in defaults.items() if k in top})
        for a in sub._actions:
            if a.dest in defaults:
                a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    from .circuit import CircuitError
    from .dataset import DatasetError
    from .device import CalibrationError
    from .losses import DegenerateBatch
    from .trainer import TrainingError

    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_IO if exc.code else EXIT_OK
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (DomainFailure, TrainingError, DegenerateBatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (OSError, json.JSONDecodeError, CalibrationError, CircuitError, DatasetError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
