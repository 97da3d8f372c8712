"""``rcan`` command line: train / sr / eval / params / gradcheck / ablate."""

import argparse
import itertools
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint, data, gradcheck, metrics, network, optim
from .config import RunConfig, load_config
from .errors import RcanError, TrainingDiverged
from .rng import SplitMix64

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


def _training_images(cfg):
    if cfg.train_manifest is not None:
        return [data.read_ppm(p) for p in data.read_manifest(cfg.train_manifest)]
    rng = SplitMix64(cfg.seed + 2)
    size = cfg.synthetic_size
    return [data.synthetic_image(size, size, rng) for _ in range(cfg.synthetic_images)]


def make_dataset(cfg):
    images = _training_images(cfg)
    spec = cfg.degradation_spec
    dtype = cfg.np_dtype
    if cfg.fixed_pairs:
        return optim.FixedPairs.from_images(images, spec, cfg.patch_size, cfg.fixed_pairs,
                                            SplitMix64(cfg.seed + 3), dtype=dtype)
    return optim.PatchSampler(images, spec, cfg.patch_size, cfg.batch_size, cfg.augment, dtype)


def run_training(cfg, out=sys.stdout):
    """Train per ``cfg``; writes the loss log and checkpoints. Returns the TrainResult."""
    model = cfg.model
    params = network.build(model, cfg.seed, dtype=cfg.np_dtype)
    cfg.checkpoint.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save_checkpoint(params, model, cfg.checkpoint)
    if cfg.steps == 0:
        cfg.log_path.write_text("")
        return optim.TrainResult(params, [], optim.AdamState())

    dataset = make_dataset(cfg)
    with open(cfg.log_path, "w") as log:
        def report(it, loss, lr):
            line = f"{it} {loss:.8g} {lr:.8g}"
            log.write(line + "\n")
            log.flush()
            print(line, file=out)

        def save(p, it):
            checkpoint.save_checkpoint(p, model, cfg.checkpoint)

        result = optim.train(model, dataset, cfg.steps, cfg.seed, cfg.hyper, cfg.np_dtype,
                             params=params, report_every=max(cfg.report_interval, 1),
                             on_report=report, checkpoint_every=cfg.checkpoint_interval,
                             on_checkpoint=save)
    checkpoint.save_checkpoint(result.params, model, cfg.checkpoint)
    return result


def cmd_train(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    try:
        run_training(cfg)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"checkpoint written to {cfg.checkpoint}")
    return EXIT_OK


def cmd_sr(args):
    params, model = checkpoint.load_checkpoint(args.checkpoint)
    img = data.read_ppm(args.inp)
    x = data.to_float(img)[None].astype(np.float32)
    if args.ensemble:
        y = network.self_ensemble_forward(x, params, model)
    else:
        y = network.predict(x, params, model)
    if y.shape[2:] != (img.h * model.scale, img.w * model.scale):
        print(f"error: output {y.shape[2:]} is not x{model.scale} of input", file=sys.stderr)
        return EXIT_FAIL
    data.write_ppm(data.quantize(y[0]), args.out)
    return EXIT_OK


def cmd_eval(args):
    params, model = checkpoint.load_checkpoint(args.checkpoint)
    scale = args.scale if args.scale is not None else model.scale
    if scale != model.scale:
        print(f"error: checkpoint is x{model.scale}, --scale asks for x{scale}", file=sys.stderr)
        return EXIT_USAGE
    spec = data.DegradationSpec(args.degradation.upper(), scale, args.sigma, args.ksize)
    report = metrics.evaluate(params, model, args.manifest, spec, ensemble=args.ensemble)
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_csv())
    return EXIT_OK if not report.errors else EXIT_FAIL


def _model_from(args):
    if args.config:
        model = load_config(args.config).model
    else:
        model = RunConfig().model
    if getattr(args, "scale", None) is not None:
        model = model.replace(scale=args.scale)
    return model


def format_millions(n):
    return f"{n / 1e6:.1f} M" if n >= 1e6 else f"{n / 1e3:.1f} k"


def cmd_params(args):
    n = network.param_count(_model_from(args))
    print(f"{n} ({format_millions(n)})")
    return EXIT_OK


def cmd_gradcheck(args):
    model = load_config(args.config).model if args.config else gradcheck.TINY
    seeds = range(args.seed, args.seed + args.seeds)
    t0 = time.perf_counter()
    results = gradcheck.run_suite(seeds, per_tensor=args.per_tensor, config=model)
    worst = 0.0
    for r in results:
        worst = max(worst, r.max_rel_err)
        status = "ok" if r.ok else "FAIL"
        print(f"{status:4}  {r.name:<44} max rel err {r.max_rel_err:.3e}  "
              f"checked {r.checked:5d}  skipped {r.skipped}")
    print(f"max relative error {worst:.3e} (tolerance {gradcheck.TOLERANCE:g}), "
          f"{time.perf_counter() - t0:.1f} s")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


ABLATION_COLUMNS = [
    # column order: LSC alternates fastest, then SSC, then CA
    (lsc, ssc, ca) for ca, ssc, lsc in itertools.product((False, True), repeat=3)
]


def ablation_grid(base, steps=None, out=None):
    """Train each LSC x SSC x CA variant of ``base``; returns rows of
    ``(lsc, ssc, ca, initial_loss, final_loss)``.

    CA off means the MDSR-style block (channel scale fixed at 1).
    """
    rows = []
    for lsc, ssc, ca in ABLATION_COLUMNS:
        cfg = RunConfig(**{**vars(base), "use_lsc": lsc, "use_ssc": ssc,
                           "ca_mode": "learned" if ca else "constant(1)"})
        if steps is not None:
            cfg.steps = steps
        model = cfg.model
        result = optim.train(model, make_dataset(cfg), cfg.steps, cfg.seed, cfg.hyper,
                             cfg.np_dtype)
        hist = result.history
        rows.append((lsc, ssc, ca, hist[0][1], hist[-1][1]))
        if out is not None:
            print(f"  LSC={int(lsc)} SSC={int(ssc)} CA={int(ca)}: "
                  f"{hist[0][1]:.5f} -> {hist[-1][1]:.5f}", file=out, flush=True)
    return rows


def format_ablation(rows, steps):
    mark = {True: "yes", False: "no"}
    head = ["", *[f"({i + 1})" for i in range(len(rows))]]
    table = [
        head,
        ["LSC", *[mark[r[0]] for r in rows]],
        ["SSC", *[mark[r[1]] for r in rows]],
        ["CA", *[mark[r[2]] for r in rows]],
        ["initial L1", *[f"{r[3]:.5f}" for r in rows]],
        [f"L1 @ {steps}", *[f"{r[4]:.5f}" for r in rows]],
        ["reduction", *[f"{100 * (1 - r[4] / r[3]):.1f}%" for r in rows]],
    ]
    widths = [max(len(row[i]) for row in table) for i in range(len(head))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in table]
    note = ("# desk-scale training losses on the synthetic fixture; these are not "
            "the Set5 PSNR values of the original ablation")
    return note + "\n" + "\n".join(lines) + "\n"


def cmd_ablate(args):
    base = load_config(args.config)
    steps = args.steps if args.steps is not None else base.steps
    try:
        rows = ablation_grid(base, steps, out=sys.stderr)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    text = format_ablation(rows, steps)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="rcan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True, type=Path)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sr", help="super-resolve one PPM image")
    s.add_argument("--checkpoint", required=True, type=Path)
    s.add_argument("--in", dest="inp", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--ensemble", action="store_true", help="average over 8 dihedral transforms")
    s.set_defaults(func=cmd_sr)

    e = sub.add_parser("eval", help="PSNR/SSIM over a manifest of HR images")
    e.add_argument("--checkpoint", required=True, type=Path)
    e.add_argument("--manifest", required=True, type=Path)
    e.add_argument("--scale", type=int)
    e.add_argument("--degradation", choices=("bi", "bd"), default="bi")
    e.add_argument("--sigma", type=float, default=1.6, help="BD blur sigma")
    e.add_argument("--ksize", type=int, default=7, help="BD blur kernel size")
    e.add_argument("--ensemble", action="store_true")
    e.add_argument("--out", type=Path, help="also write the report as CSV")
    e.set_defaults(func=cmd_eval)

    pc = sub.add_parser("params", help="print the parameter count")
    pc.add_argument("--config", type=Path)
    pc.add_argument("--scale", type=int)
    pc.set_defaults(func=cmd_params)

    g = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    g.add_argument("--config", type=Path, help="architecture (default: G=2 B=2 C=8 r=4 x2)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--seeds", type=int, default=10)
    g.add_argument("--per-tensor", type=int, default=64)
    g.set_defaults(func=cmd_gradcheck)

    a = sub.add_parser("ablate", help="train the 8 LSC/SSC/CA variants of a base config")
    a.add_argument("--config", required=True, type=Path)
    a.add_argument("--steps", type=int)
    a.add_argument("--out", type=Path)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RcanError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ValueError) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
