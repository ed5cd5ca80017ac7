"""Command-line entry point: simulate, gen-dataset, eval, bench, serve.

Heavy imports happen inside ``main`` so the ``VISCID_THREADS`` environment
variable can cap the BLAS thread pools before numpy loads (0 = automatic).
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_cap() -> None:
    raw = os.environ.get("VISCID_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"VISCID_THREADS must be an integer, got {raw!r}")
    if n > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(n))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viscid",
        description="Hybrid particle/grid viscous fluid simulator and CNN-surrogate toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scene and write particle snapshots")
    sim.add_argument("--scene", required=True, help="scene JSON path or builtin name")
    sim.add_argument("--frames", type=int, required=True)
    sim.add_argument("--solver", choices=("classic", "neural"), default="classic")
    sim.add_argument("--weights", help="weight manifest (required for --solver neural)")
    sim.add_argument("--out", required=True, help="output directory for snapshots")

    gen = sub.add_parser("gen-dataset", help="generate a training dataset with the classical solver")
    gen.add_argument("--scene", required=True)
    gen.add_argument("--frames", type=int, required=True)
    gen.add_argument("--out", required=True, help="output dataset file (.vfd)")

    ev = sub.add_parser("eval", help="evaluate a weight manifest against dataset labels")
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--weights", required=True)

    bench = sub.add_parser("bench", help="time per-frame stages on a scene")
    bench.add_argument("--scene", required=True)
    bench.add_argument("--solver", choices=("classic", "neural"), default="classic")
    bench.add_argument("--weights")
    bench.add_argument("--frames", type=int, required=True)

    init = sub.add_parser("init-weights", help="write a seed-initialized or zero weight manifest")
    init.add_argument("--out", required=True)
    init.add_argument("--depth", type=int, choices=(2, 4), default=2)
    init.add_argument("--in-channels", type=int, choices=(6, 7), default=6)
    init.add_argument("--base-width", type=int, default=16)
    init.add_argument("--seed", type=int, default=0)
    init.add_argument("--zero", action="store_true", help="all parameters zero")

    serve = sub.add_parser("serve", help="run the HTTP stepping service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--weights-dir", help="directory of weight manifests served by name")
    serve.add_argument("--demo-dir", help="static demo directory to mount at /demo")
    return parser


def _cmd_simulate(args) -> int:
    from pathlib import Path

    from .scene import load_scene
    from .sim import run
    from .unet import load_weights

    scene = load_scene(args.scene)
    manifest = load_weights(args.weights) if args.weights else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run(
        scene, args.frames, solver=args.solver, manifest=manifest,
        snapshots_dir=out, progress=True,
    )
    for stage, stats in report.stage_stats().items():
        print(f"stage={stage} mean_ms={stats['mean_ms']:.3f} p90_ms={stats['p90_ms']:.3f}")
    print(f"frames={report.frames} out={out}")
    return 0


def _cmd_gen_dataset(args) -> int:
    from .scene import load_scene
    from .sim import run

    scene = load_scene(args.scene)
    report = run(scene, args.frames, solver="classic", dataset_path=args.out, progress=True)
    print(f"frames={report.frames} dataset={args.out}")
    return 0


def _cmd_eval(args) -> int:
    import numpy as np

    from . import symgrid
    from .dataset import read_dataset
    from .grid import Gradients2, MacVelocity2
    from .losses import l2_error, variational_loss_delta
    from .unet import forward, load_weights
    from .viscosity import FluidParams

    manifest = load_weights(args.weights)
    records = read_dataset(args.dataset)
    l2s, lvs = [], []
    for record in records:
        if record.stack.shape[0] != manifest.in_channels:
            raise SystemExit(
                f"dataset has {record.stack.shape[0]} channels, network expects "
                f"{manifest.in_channels}"
            )
        dims = record.dims
        stack = symgrid.ChannelStack(data=record.stack.astype(np.float64), dims=dims)
        spec = symgrid.PaddingSpec(multiple=1 << manifest.depth, mode="centered")
        padded, spec = symgrid.pad(stack, spec)
        out = forward(padded, manifest)
        delta = symgrid.decode(symgrid.unpad(out.astype(np.float64), spec, dims), dims)
        truth = MacVelocity2(record.label_du.astype(np.float64), record.label_dv.astype(np.float64))
        l2 = l2_error(delta, truth)
        grads_old = Gradients2(
            du_dx=stack.data[symgrid.CH_DU_DX][symgrid.CELLS],
            dv_dy=stack.data[symgrid.CH_DV_DY][symgrid.CELLS],
            du_dy=stack.data[symgrid.CH_DU_DY][symgrid.NODES],
            dv_dx=stack.data[symgrid.CH_DV_DX][symgrid.NODES],
        )
        params = FluidParams(rho=record.rho, mu=record.mu.astype(np.float64), dt=record.dt)
        report = variational_loss_delta(delta, grads_old, params, dims)
        print(f"frame={record.frame} l2={l2:.9e} lv={report.l_v:.9e}")
        l2s.append(l2)
        lvs.append(report.l_v)
    if l2s:
        print(
            f"frames={len(l2s)} l2_mean={np.mean(l2s):.9e} l2_median={np.median(l2s):.9e} "
            f"lv_mean={np.mean(lvs):.9e}"
        )
    return 0


def _cmd_bench(args) -> int:
    from .scene import load_scene
    from .sim import run
    from .unet import load_weights

    scene = load_scene(args.scene)
    manifest = load_weights(args.weights) if args.weights else None
    report = run(scene, args.frames, solver=args.solver, manifest=manifest)
    for stage, stats in report.stage_stats().items():
        print(
            f"stage={stage} mean_ms={stats['mean_ms']:.3f} p50_ms={stats['p50_ms']:.3f} "
            f"p90_ms={stats['p90_ms']:.3f} max_ms={stats['max_ms']:.3f}"
        )
    totals = [d.total_ms for d in report.diagnostics]
    import numpy as np

    print(
        f"stage=total mean_ms={np.mean(totals):.3f} p50_ms={np.median(totals):.3f} "
        f"p90_ms={np.percentile(totals, 90):.3f} max_ms={np.max(totals):.3f}"
    )
    return 0


def _cmd_init_weights(args) -> int:
    from .unet import UnetConfig, init_manifest, save_weights

    config = UnetConfig(in_channels=args.in_channels, base_width=args.base_width, depth=args.depth)
    manifest = init_manifest(config, seed=args.seed, zero=args.zero)
    save_weights(manifest, args.out)
    kind = "zero" if args.zero else f"seed={args.seed}"
    print(f"wrote {args.out} depth={args.depth} in_channels={args.in_channels} {kind}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    app = create_app(weights_dir=args.weights_dir, demo_dir=args.demo_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "gen-dataset": _cmd_gen_dataset,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "init-weights": _cmd_init_weights,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.solver == "neural" and not args.weights:
        parser.error("--solver neural requires --weights")
    if args.command == "bench" and args.solver == "neural" and not args.weights:
        parser.error("--solver neural requires --weights")
    from .errors import ViscidError

    try:
        return _COMMANDS[args.command](args)
    except (ViscidError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
