"""Command-line front door.

Subcommands: ``world build``, ``gen``, ``destroy``, ``sweep``, ``invert``,
``analyze-ratings``.  Exit codes: 0 success, 1 runtime error (missing files,
failed fits), 2 usage error.  Every run directory receives a ``run.cfg``
echo of the resolved parameters, sufficient to reproduce its outputs
byte-for-byte with the same binary; execution-only knobs (--out, --threads)
are deliberately left out of the echo so reruns compare clean.

Seed precedence: ``--seed`` flag, then config file (``world build`` only),
then the SCAPEGOAT_SEED environment variable, then 0.
"""

import argparse
import os
import sys

from . import backend
from .errors import ScapegoatError, UsageError
from .evaluate import (
    DEFAULT_EPS_LIST,
    DEFAULT_SAMPLES,
    DEFAULT_TARGETS,
    emit_report_csv,
    emit_report_markdown,
    epsilon_sweep,
)
from .kvfile import read_kv, write_kv
from .optimize import (
    DEFAULT_EPS,
    DEFAULT_ITERS,
    DEFAULT_STEP,
    MODES,
    PgdConfig,
    destruction_baseline,
    optimize_scapegoat,
    save_destruction_result,
    save_scapegoat_result,
)
from .stats import conditions, load_ratings, pair_conditions, wilcoxon_signed_rank
from .tensor import read_tensor, write_tensor
from .world import (
    DEFAULT_ALPHA,
    DEFAULT_CHANNELS,
    DEFAULT_ID_DIM,
    DEFAULT_IMAGE_DIM,
    DEFAULT_LAYERS,
    DEFAULT_RIDGE,
    WorldConfig,
    build_world,
    encode,
    generate,
    load_world,
    refine_latent,
    rng_stream,
    sample_latent,
    save_world,
    world_fingerprint,
)

_WORLD_CFG_FIELDS = {
    "seed": int, "L": int, "D": int, "dx": int, "did": int,
    "alpha": float, "ridge": float,
}


def _eps_list_arg(text):
    parts = [p.strip() for p in text.split(",")]
    try:
        vals = [float(p) for p in parts if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("eps list is empty")
    return vals


def _pair_arg(text):
    if text.count(":") != 1:
        raise argparse.ArgumentTypeError(f"expected LABEL:LABEL, got {text!r}")
    a, _, b = text.partition(":")
    if not a or not b:
        raise argparse.ArgumentTypeError(f"expected LABEL:LABEL, got {text!r}")
    return a, b


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scapegoat",
        description="Budgeted latent edits that hide a face's identity from swaps, "
                    "plus the pixel-space destruction baseline, on toy models.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p_world = sub.add_parser("world", help="toy world management")
    world_sub = p_world.add_subparsers(dest="world_command", metavar="ACTION")
    p_build = world_sub.add_parser("build", help="fit and save a toy world")
    p_build.add_argument("--out", required=True, help="output directory")
    p_build.add_argument("--config", help="key = value file with defaults for the flags below")
    p_build.add_argument("--seed", type=int)
    p_build.add_argument("--L", type=int, dest="L", help="latent layers")
    p_build.add_argument("--D", type=int, dest="D", help="channels per layer")
    p_build.add_argument("--dx", type=int, help="image dimension")
    p_build.add_argument("--did", type=int, help="identity embedding dimension")
    p_build.add_argument("--alpha", type=float, help="tanh mixing weight")
    p_build.add_argument("--ridge", type=float, help="ridge regularization")

    p_gen = sub.add_parser("gen", help="optimize a scapegoat for one sample")
    p_gen.add_argument("--world", required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p_gen.add_argument("--step", type=float, default=DEFAULT_STEP)
    p_gen.add_argument("--iters", type=int, default=DEFAULT_ITERS)
    p_gen.add_argument("--mode", choices=MODES, default="per-vector")
    p_gen.add_argument("--targets", type=int, default=DEFAULT_TARGETS)
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--verbose", action="store_true", help="log every PGD iteration")

    p_destroy = sub.add_parser("destroy", help="pixel-space destruction baseline")
    p_destroy.add_argument("--world", required=True)
    p_destroy.add_argument("--out", required=True)
    p_destroy.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p_destroy.add_argument("--step", type=float, default=DEFAULT_STEP)
    p_destroy.add_argument("--iters", type=int, default=DEFAULT_ITERS)
    p_destroy.add_argument("--seed", type=int)
    p_destroy.add_argument("--verbose", action="store_true", help="log every PGD iteration")

    p_sweep = sub.add_parser("sweep", help="similarity over a grid of edit budgets")
    p_sweep.add_argument("--world", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--eps-list", type=_eps_list_arg, default=list(DEFAULT_EPS_LIST))
    p_sweep.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p_sweep.add_argument("--targets", type=int, default=DEFAULT_TARGETS)
    p_sweep.add_argument("--threads", type=int, default=1)
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--mode", choices=MODES, default="per-vector")
    p_sweep.add_argument("--step", type=float, default=DEFAULT_STEP)
    p_sweep.add_argument("--iters", type=int, default=DEFAULT_ITERS)

    p_invert = sub.add_parser("invert", help="encode an image tensor and refine the latent")
    p_invert.add_argument("--world", required=True)
    p_invert.add_argument("--image", required=True, help="input .tnsr image")
    p_invert.add_argument("--out", required=True)
    p_invert.add_argument("--refine-steps", type=int, default=50)
    p_invert.add_argument("--lr", type=float, default=0.05)

    p_ratings = sub.add_parser("analyze-ratings", help="Wilcoxon test on paired ratings")
    p_ratings.add_argument("--input", required=True, help="ratings CSV")
    p_ratings.add_argument("--pair", required=True, type=_pair_arg,
                           help="two condition labels, LABEL:LABEL")
    return parser


def _resolve_seed(flag_value, config_map=None):
    if flag_value is not None:
        seed = flag_value
    elif config_map is not None and "seed" in config_map:
        seed = config_map["seed"]
    else:
        env = os.environ.get("SCAPEGOAT_SEED")
        if env is None:
            seed = 0
        else:
            try:
                seed = int(env)
            except ValueError:
                raise UsageError(f"SCAPEGOAT_SEED={env!r} is not an integer") from None
    if seed < 0:
        raise UsageError(f"seed must be >= 0, got {seed}")
    return seed


def _read_build_config(path):
    raw = read_kv(path)
    out = {}
    for key, text in raw.items():
        if key not in _WORLD_CFG_FIELDS:
            raise UsageError(
                f"{path}: unknown key {key!r} (expected one of "
                f"{', '.join(sorted(_WORLD_CFG_FIELDS))})"
            )
        try:
            out[key] = _WORLD_CFG_FIELDS[key](text)
        except ValueError:
            raise UsageError(f"{path}: bad value for {key!r}: {text!r}") from None
    return out


def _pick(flag_value, config_map, key, default):
    if flag_value is not None:
        return flag_value
    if key in config_map:
        return config_map[key]
    return default


def _write_run_cfg(out_dir, items):
    write_kv(os.path.join(out_dir, "run.cfg"), items)


def _cmd_world_build(args):
    config_map = _read_build_config(args.config) if args.config else {}
    seed = _resolve_seed(args.seed, config_map)
    cfg = WorldConfig(
        layers=_pick(args.L, config_map, "L", DEFAULT_LAYERS),
        channels=_pick(args.D, config_map, "D", DEFAULT_CHANNELS),
        image_dim=_pick(args.dx, config_map, "dx", DEFAULT_IMAGE_DIM),
        id_dim=_pick(args.did, config_map, "did", DEFAULT_ID_DIM),
        alpha=_pick(args.alpha, config_map, "alpha", DEFAULT_ALPHA),
        ridge_lambda=_pick(args.ridge, config_map, "ridge", DEFAULT_RIDGE),
        seed=seed,
    )
    world = build_world(cfg)
    save_world(world, args.out)
    _write_run_cfg(args.out, {
        "command": "world build",
        "seed": seed,
        "L": world.layers, "D": world.channels,
        "dx": world.image_dim, "did": world.id_dim,
        "alpha": float(world.alpha), "ridge": float(world.ridge_lambda),
    })
    print(
        f"world built: fidelity_recon={world.fidelity_recon:.4f} "
        f"fidelity_id={world.fidelity_id:.4f} fingerprint={world_fingerprint(world)}"
    )
    return 0


def _verbose_log(vector, iteration, value):
    tag = "joint" if vector is None else f"vector={vector}"
    print(f"{tag} iter={iteration} loss={value:.6f}")


def _cmd_gen(args):
    world = load_world(args.world)
    seed = _resolve_seed(args.seed)
    if args.targets < 1:
        raise UsageError(f"--targets must be >= 1, got {args.targets}")
    cfg = PgdConfig(eps=args.eps, step=args.step, iters=args.iters, mode=args.mode)
    cfg.validate()
    rng = rng_stream(seed, 0)
    origin = sample_latent(world, rng)
    targets = [sample_latent(world, rng) for _ in range(args.targets)]
    log = _verbose_log if args.verbose else None
    result = optimize_scapegoat(world, origin, targets, cfg, log=log)
    save_scapegoat_result(args.out, result, seed)
    _write_run_cfg(args.out, {
        "command": "gen",
        "world": args.world,
        "world_fingerprint": world_fingerprint(world),
        "seed": seed,
        "eps": float(args.eps), "step_a": float(args.step),
        "iters_k": args.iters, "mode": args.mode, "n_targets": args.targets,
    })
    print(f"scapegoat written: achieved_loss={result.achieved_loss:.6f} "
          f"(eps={args.eps:g}, mode={args.mode})")
    return 0


def _cmd_destroy(args):
    world = load_world(args.world)
    seed = _resolve_seed(args.seed)
    cfg = PgdConfig(eps=args.eps, step=args.step, iters=args.iters)
    cfg.validate()
    rng = rng_stream(seed, 0)
    origin = sample_latent(world, rng)
    swap = sample_latent(world, rng)
    x_org = generate(world, origin)
    x_swap = generate(world, swap)
    log = _verbose_log if args.verbose else None
    result = destruction_baseline(world, x_org, x_swap, cfg, log=log)
    save_destruction_result(args.out, result, cfg, seed)
    _write_run_cfg(args.out, {
        "command": "destroy",
        "world": args.world,
        "world_fingerprint": world_fingerprint(world),
        "seed": seed,
        "eps": float(args.eps), "step_a": float(args.step), "iters_k": args.iters,
    })
    print(f"baseline written: achieved_loss={result.achieved_loss:.6f} (eps={args.eps:g})")
    return 0


def _cmd_sweep(args):
    world = load_world(args.world)
    seed = _resolve_seed(args.seed)
    if args.threads < 1:
        raise UsageError(f"--threads must be >= 1, got {args.threads}")
    report = epsilon_sweep(
        world, eps_list=args.eps_list, n_samples=args.samples,
        n_targets=args.targets, seed=seed, step=args.step, iters=args.iters,
        mode=args.mode, threads=args.threads,
    )
    os.makedirs(args.out, exist_ok=True)
    csv_text = emit_report_csv(report)
    with open(os.path.join(args.out, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    with open(os.path.join(args.out, "sweep.md"), "w", encoding="utf-8") as fh:
        fh.write(emit_report_markdown(report))
    # --threads is excluded on purpose: any thread count yields these bytes
    _write_run_cfg(args.out, {
        "command": "sweep",
        "world": args.world,
        "world_fingerprint": report.world_fingerprint,
        "seed": seed,
        "eps_list": ",".join(repr(float(e)) for e in args.eps_list),
        "n_samples": args.samples, "n_targets": args.targets,
        "step_a": float(args.step), "iters_k": args.iters, "mode": args.mode,
    })
    sys.stdout.write(csv_text)
    return 0


def _cmd_invert(args):
    world = load_world(args.world)
    if args.refine_steps < 0:
        raise UsageError(f"--refine-steps must be >= 0, got {args.refine_steps}")
    if args.lr <= 0:
        raise UsageError(f"--lr must be > 0, got {args.lr}")
    x = read_tensor(args.image)
    start = encode(world, x)
    refined = refine_latent(world, x, start, steps=args.refine_steps, lr=args.lr)
    recon = generate(world, refined)
    k = backend.kernels
    num = float(k.sumsq(k.ew_sub(recon, x))) ** 0.5
    den = float(k.sumsq(x)) ** 0.5
    recon_error = num / den if den > 0 else float("inf")
    os.makedirs(args.out, exist_ok=True)
    write_tensor(os.path.join(args.out, "latent.tnsr"), refined.w)
    write_tensor(os.path.join(args.out, "recon.tnsr"), recon)
    write_kv(os.path.join(args.out, "result.cfg"), {
        "recon_error": float(recon_error),
        "refine_steps": args.refine_steps,
        "lr": float(args.lr),
    })
    _write_run_cfg(args.out, {
        "command": "invert",
        "world": args.world,
        "world_fingerprint": world_fingerprint(world),
        "image": args.image,
        "refine_steps": args.refine_steps, "lr": float(args.lr),
    })
    print(f"inverted: recon_error={recon_error:.6f}")
    return 0


def _cmd_analyze_ratings(args):
    rows = load_ratings(args.input)
    cond_a, cond_b = args.pair
    present = conditions(rows)
    for name in (cond_a, cond_b):
        if name not in present:
            raise UsageError(
                f"condition {name!r} not in file (has: {', '.join(present)})"
            )
    rating_set = pair_conditions(rows, cond_a, cond_b)
    result = wilcoxon_signed_rank(rating_set.a, rating_set.b)
    dropped = len(rating_set.keys) - result.n_effective
    print(f"pair {cond_a}:{cond_b} n={result.n_effective} "
          f"dropped={dropped} method={result.method}")
    print(f"W-plus={result.w_plus:g}, p={result.p_value:g}")
    return 0


_HANDLERS = {
    "gen": _cmd_gen,
    "destroy": _cmd_destroy,
    "sweep": _cmd_sweep,
    "invert": _cmd_invert,
    "analyze-ratings": _cmd_analyze_ratings,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.command == "world":
        if getattr(args, "world_command", None) != "build":
            print("error: expected 'world build'", file=sys.stderr)
            return 2
        handler = _cmd_world_build
    else:
        handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ScapegoatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
