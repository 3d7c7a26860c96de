"""Command-line front end.

Subcommands mirror the experiment pipeline: `gen` synthesizes datasets,
`train` fits the MLP, `certify` runs a sweep to CSV/JSON, `envelope` and
`report` post-process sweep CSVs, `bench` times certification, `soundness`
replays certificates at in-ball offsets, and `serve-oracle` exposes any
built-in classifier over the wire protocol for out-of-process use.

Angles are radians everywhere; a scale token may carry a `deg` suffix to
convert on the way in (e.g. --scales 3deg,6deg,12deg).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import classifiers, harness, oracle, shapes
from .flows import DeformationKind, make_distribution
from .harness import SCALE_PRESETS, SweepSpec

KIND_NAMES = {k.value: k for k in DeformationKind}


def _parse_kind(name: str) -> DeformationKind:
    try:
        return KIND_NAMES[name]
    except KeyError:
        raise SystemExit(f"unknown kind {name!r}; choose from {', '.join(KIND_NAMES)}") from None


def _parse_scales(text: str) -> tuple[float, ...]:
    out = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token.endswith("deg"):
            out.append(float(token[:-3]) * math.pi / 180.0)
        else:
            out.append(float(token))
    if not out:
        raise SystemExit(f"no scales in {text!r}")
    return tuple(out)


def _resolve_classifier(args):
    """Build the classifier named by --model or dial the one at --oracle."""
    if getattr(args, "oracle", None):
        return oracle.connect(args.oracle, timeout=args.timeout)
    spec = args.model
    if spec is None:
        raise SystemExit("one of --model or --oracle is required")
    if spec.startswith("mlp:"):
        return classifiers.load_weights(spec[4:])
    if spec.startswith("centroid:"):
        return classifiers.fit_centroids(shapes.load_dataset(spec[9:]))
    if spec.startswith("constant:"):
        return classifiers.ConstantClassifier(int(spec[9:]))
    raise SystemExit(f"unknown model {spec!r} (expected mlp:PATH, centroid:DATADIR, or constant:K)")


def _sweep_spec(args, kind: DeformationKind) -> SweepSpec:
    family, scales = SCALE_PRESETS[kind]
    if args.dist:
        family = args.dist
    if args.scales and args.scales != "preset":
        scales = _parse_scales(args.scales)
    return SweepSpec(kind=kind, family=family, scales=scales, n0=args.n0, n=args.n,
                     alpha=args.alpha, batch=args.batch, base_seed=args.seed,
                     workers=args.workers)


def _add_sweep_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", required=True, help="deformation kind, e.g. rotz")
    p.add_argument("--dist", choices=("uniform", "gaussian"), default=None,
                   help="smoothing family (default: the kind's preset)")
    p.add_argument("--scales", default="preset",
                   help="comma-separated scales, 'deg' suffix allowed (default: preset ladder)")
    p.add_argument("--n0", type=int, default=100, help="selection-round samples")
    p.add_argument("--n", type=int, default=1000, help="estimation-round samples")
    p.add_argument("--alpha", type=float, default=1e-3, help="confidence failure budget")
    p.add_argument("--batch", type=int, default=200, help="classifier batch size")
    p.add_argument("--seed", type=int, default=0, help="base seed for substreams")
    p.add_argument("--workers", type=int, default=1, help="parallel certification workers")
    p.add_argument("--data", required=True, help="dataset directory (labels.csv manifest)")
    p.add_argument("--model", default=None, help="mlp:PATH | centroid:DATADIR | constant:K")
    p.add_argument("--oracle", default=None, help="tcp:HOST:PORT | stdio:COMMAND")
    p.add_argument("--timeout", type=float, default=oracle.DEFAULT_TIMEOUT,
                   help="oracle response timeout in seconds")


def _cmd_gen(args) -> int:
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    dataset = shapes.make_dataset(families, args.per_class, args.points, args.jitter, args.seed)
    shapes.save_dataset(dataset, args.out, fmt=args.format)
    print(f"wrote {len(dataset)} clouds to {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = shapes.load_dataset(args.data)
    augment = None
    if args.augment:
        parts = args.augment.split(":")
        if len(parts) != 3:
            raise SystemExit("--augment takes KIND:FAMILY:SCALE, e.g. rotz:uniform:180deg")
        kind = _parse_kind(parts[0])
        scale = _parse_scales(parts[2])[0]
        augment = classifiers.Augmentation(kind, make_distribution(parts[1], scale))
    config = classifiers.TrainConfig(epochs=args.epochs, lr=args.lr, momentum=args.momentum,
                                     batch_size=args.batch_size, seed=args.seed, augment=augment)
    result = classifiers.train_mlp(dataset, config)
    classifiers.save_weights(result.model, args.out)
    if args.log:
        classifiers.write_train_log(result.log, args.log)
    last = result.log[-1]
    print(f"trained {args.epochs} epochs, final loss {last.loss:.4f}, "
          f"train accuracy {last.accuracy:.3f}, weights at {args.out}")
    return 0


def _cmd_certify(args) -> int:
    kind = _parse_kind(args.kind)
    dataset = shapes.load_dataset(args.data)
    classifier = _resolve_classifier(args)
    try:
        result = harness.run_sweep(classifier, dataset, _sweep_spec(args, kind))
    finally:
        if hasattr(classifier, "close"):
            classifier.close()
    harness.write_rows_csv(result.rows, args.out)
    if args.summary:
        harness.write_summary_json(result.rows, args.summary)
    errors = sum(r.error is not None for r in result.rows)
    env = harness.envelope(result.rows)
    print(f"certified {len(dataset)} samples x {len(result.spec.scales)} scales "
          f"-> {args.out} (envelope ACR {env.acr_envelope:.4f}, {errors} errors)")
    return 0


def _cmd_envelope(args) -> int:
    rows = harness.read_rows_csv(args.results)
    payload = json.dumps(harness.envelope(rows).to_json_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_report(args) -> int:
    rows = harness.read_rows_csv(args.results)
    payload = json.dumps(harness.summary_json(rows), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_bench(args) -> int:
    kind = _parse_kind(args.kind)
    dataset = shapes.load_dataset(args.data)
    classifier = _resolve_classifier(args)
    try:
        report = harness.bench(classifier, dataset, _sweep_spec(args, kind),
                               repeats=args.repeats, device_note=args.device_note)
    finally:
        if hasattr(classifier, "close"):
            classifier.close()
    payload = json.dumps(report.to_json_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_soundness(args) -> int:
    kind = _parse_kind(args.kind)
    dataset = shapes.load_dataset(args.data)
    classifier = _resolve_classifier(args)
    try:
        result = harness.run_sweep(classifier, dataset, _sweep_spec(args, kind))
        report = harness.soundness_check(classifier, dataset, result, offsets=args.offsets,
                                         vote_samples=args.vote_samples, seed=args.seed)
    finally:
        if hasattr(classifier, "close"):
            classifier.close()
    payload = json.dumps(report.to_json_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    if report.failure_fraction > args.max_failure_fraction:
        print(f"soundness failure fraction {report.failure_fraction:.4f} exceeds "
              f"{args.max_failure_fraction}", file=sys.stderr)
        return 1
    return 0


def _cmd_serve_oracle(args) -> int:
    classifier = _resolve_classifier(args)
    if args.stdio:
        oracle.serve_stdio(classifier)
        return 0
    host, sep, port = args.tcp.rpartition(":")
    if not sep:
        raise SystemExit(f"--tcp takes HOST:PORT, got {args.tcp!r}")
    server = oracle.OracleServer(classifier, host, int(port))
    bound_host, bound_port = server.address
    print(f"oracle listening tcp {bound_host} {bound_port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deformcert",
                                     description="certification of point-cloud classifiers "
                                                 "under parametric deformations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic shape dataset")
    p.add_argument("--families", default=",".join(shapes.FAMILIES))
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--jitter", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("xyz", "pcb"), default="xyz")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train the max-pool MLP")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--augment", default=None, help="KIND:FAMILY:SCALE, e.g. rotz:uniform:180deg")
    p.add_argument("--log", default=None, help="write per-epoch CSV here")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("certify", help="run a certification sweep")
    _add_sweep_flags(p)
    p.add_argument("--out", required=True, help="sweep CSV to write")
    p.add_argument("--summary", default=None, help="also write a JSON summary here")
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("envelope", help="envelope curves from a sweep CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_envelope)

    p = sub.add_parser("report", help="JSON summary from a sweep CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("bench", help="time certification per scale")
    _add_sweep_flags(p)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--device-note", default="")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("soundness", help="vote certified claims at in-ball offsets")
    _add_sweep_flags(p)
    p.add_argument("--offsets", type=int, default=20)
    p.add_argument("--vote-samples", type=int, default=1000)
    p.add_argument("--max-failure-fraction", type=float, default=0.01)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_soundness)

    p = sub.add_parser("serve-oracle", help="serve a built-in classifier over the wire protocol")
    p.add_argument("--model", required=True, help="mlp:PATH | centroid:DATADIR | constant:K")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--stdio", action="store_true")
    group.add_argument("--tcp", default=None, help="HOST:PORT (port 0 picks a free one)")
    p.set_defaults(func=_cmd_serve_oracle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
