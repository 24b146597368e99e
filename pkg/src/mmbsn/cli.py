"""Command-line interface.

Subcommands: train, denoise, verify-blindspot, analyze-noise,
count-params, gen-synthetic, bench.  Every run prints its resolved
configuration (including the seed); reports are CSV with a one-line
human summary so they can be parsed directly.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 I/O
error.  MMBSN_THREADS caps the BLAS worker threads.

Heavy imports happen inside the handlers so the thread cap can be applied
before numpy initializes its backend.
"""

from __future__ import annotations

import argparse
import os
import sys
import time


def _apply_thread_cap():
    cap = os.environ.get("MMBSN_THREADS")
    if not cap:
        return
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _csv_ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _csv_words(text):
    return tuple(w.strip().lower() for w in text.split(",") if w.strip())


def _print_config(args, extra=None):
    skip = {"func"}
    pairs = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    if extra:
        pairs.update(extra)
    line = " ".join(f"{k}={v}" for k, v in pairs.items())
    print(f"config: {line}")


def _arch_flags(p, channels=128):
    p.add_argument("--arch", default="mmbsn", choices=("mmbsn", "apbsn", "smmbsn"),
                   help="architecture builder (default: mmbsn)")
    p.add_argument("--masks", type=_csv_words, default=("slash", "backslash"),
                   metavar="TAGS", help="comma-separated mask tags (default: slash,backslash)")
    p.add_argument("--channels", type=int, default=channels,
                   help=f"base feature channels (default: {channels})")
    p.add_argument("--kernel-sizes", type=_csv_ints, default=(3, 5), metavar="K,K",
                   help="masked-conv kernel sizes (default: 3,5)")
    p.add_argument("--dilations", type=_csv_ints, default=(2, 3), metavar="D,D",
                   help="dilation per kernel size (default: 2,3)")
    p.add_argument("--cdcl-depth", type=int, default=2,
                   help="dilated blocks in each branch skip stack (default: 2)")
    p.add_argument("--trunk-depth", type=int, default=7,
                   help="dilated blocks in each size trunk (default: 7)")
    p.add_argument("--in-channels", type=int, default=3,
                   help="image channels (default: 3)")


def _build_arch_config(args):
    from .models import ArchitectureConfig

    return ArchitectureConfig(
        base_channels=args.channels,
        masks=args.masks,
        cdcl_depth=args.cdcl_depth,
        trunk_depth=args.trunk_depth,
        kernel_sizes=args.kernel_sizes,
        dilations=args.dilations,
        in_channels=args.in_channels,
    )


def _fmt_offsets(offsets):
    return " ".join(f"({a},{b})" for a, b in sorted(offsets)) or "(none)"


# ---- subcommand handlers -------------------------------------------------


def cmd_gen_synthetic(args):
    from .metrics import psnr
    from .noise import NoiseSpec, gen_clean, gen_correlated_noise
    from .pngio import save_png
    import numpy as np

    _print_config(args)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        clean = gen_clean(args.pattern, args.size, seed=args.seed + i)
        spec = NoiseSpec(sigma=args.sigma, kernel=args.noise, support=args.support,
                         seed=args.seed + 1000 + i)
        noisy = np.clip(clean + gen_correlated_noise(spec, args.size), 0.0, 1.0)
        suffix = "" if args.count == 1 else f"_{i:03d}"
        clean_path = os.path.join(args.out, f"clean{suffix}.png")
        noisy_path = os.path.join(args.out, f"noisy{suffix}.png")
        save_png(clean_path, clean)
        save_png(noisy_path, noisy)
        print(f"wrote {clean_path} {noisy_path} psnr={psnr(noisy, clean):.3f}")
    return 0


def cmd_count_params(args):
    from .models import build

    _print_config(args)
    model = build(args.arch, _build_arch_config(args))
    rows = []
    for name, p in model.param_items():
        kind = f"{p.k}x{p.k}" + (f" d{p.dilation}" if p.dilation > 1 else "")
        if p.kernel_mask is not None:
            kind += " masked"
        rows.append((name, kind, p.num_params()))
    total = model.count_params()
    lines = ["layer,kind,params"]
    lines += [f"{n},{k},{c}" for n, k, c in rows]
    lines.append(f"total,,{total}")
    report = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report)
    else:
        print(report, end="")
    print(f"count-params: arch={args.arch} total={total}")
    if args.expect is not None:
        rel = abs(total / args.expect - 1.0)
        ok = rel <= args.tol
        print(f"count-params: expected={args.expect:.6g} rel_err={rel:.4f} "
              f"tol={args.tol} -> {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 1
    return 0


def cmd_verify_blindspot(args):
    from .masks import (
        combined_exclusion,
        empirical_exclusion,
        exclusion_set,
        min_hops_required,
    )
    from .models import build

    _print_config(args)
    model = build(args.arch, _build_arch_config(args))
    hops = args.cdcl_depth + args.trunk_depth
    for mask, d in model.branch_masks():
        needed = min_hops_required(mask, d, args.radius)
        if hops < needed:
            raise ValueError(
                f"radius {args.radius} needs {needed} dilated blocks per branch "
                f"but cdcl_depth + trunk_depth = {hops}; empirical probing would "
                f"undershoot the unbounded-depth analysis"
            )
    if args.test_unmask_center:
        # Testing hook: deliberately punch the center tap open so the
        # empirical check must fail.
        for _, p in model.param_items():
            if p.kernel_mask is not None:
                p.kernel_mask[(p.k - 1) // 2, (p.k - 1) // 2] = 1.0
    branches = model.branch_masks()
    for (tag, k, d), (mask, _) in zip(model.branches, branches):
        theo = exclusion_set(mask, d, args.radius)
        print(f"branch mask={tag} k={k} d={d} excluded={len(theo)}: {_fmt_offsets(theo)}")
    theoretical = combined_exclusion(branches, args.radius)
    print(f"theoretical combined excluded={len(theoretical)}: {_fmt_offsets(theoretical)}")
    empirical = empirical_exclusion(model, args.radius, trials=args.trials,
                                    probes=args.probes, seed=args.seed)
    print(f"empirical  combined excluded={len(empirical)}: {_fmt_offsets(empirical)}")
    if empirical == theoretical:
        print("verify-blindspot: PASS")
        return 0
    only_theo = theoretical - empirical
    only_emp = empirical - theoretical
    if only_theo:
        print(f"verify-blindspot: theoretical-only offsets: {_fmt_offsets(only_theo)}")
    if only_emp:
        print(f"verify-blindspot: empirical-only offsets: {_fmt_offsets(only_emp)}")
    print("verify-blindspot: FAIL")
    return 1


def cmd_analyze_noise(args):
    from .noise import analyze_regions
    from .pngio import load_png
    import numpy as np

    _print_config(args)
    img = load_png(args.input)
    if args.reference:
        residual = img - load_png(args.reference)
    else:
        residual = img - np.median(img)
    threshold = None if args.threshold == "auto" else float(args.threshold)
    stats = analyze_regions(residual, threshold=threshold)
    lines = ["component_area,count"]
    lines += [f"{area},{count}" for area, count in stats.area_histogram()]
    lines.append(f"large_fraction={stats.large_fraction}")
    report = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report)
    else:
        print(report, end="")
    print(f"analyze-noise: components={len(stats.areas)} "
          f"noisy_pixels={stats.total_noisy_pixels} threshold={stats.threshold:.6g} "
          f"large_fraction={stats.large_fraction:.6f}")
    return 0


def _load_dataset(directory):
    from .pngio import load_png

    paths = sorted(
        os.path.join(directory, f)
        for f in os.listdir(directory)
        if f.lower().endswith(".png")
    )
    if not paths:
        raise FileNotFoundError(f"no .png files in {directory}")
    return [load_png(p) for p in paths]


def cmd_train(args):
    from .configfile import parse_config
    from .train import TrainingConfig, train

    overrides = {}
    if args.config:
        overrides = parse_config(args.config)
    merged = dict(
        arch=args.arch, masks=args.masks, channels=args.channels,
        kernel_sizes=args.kernel_sizes, dilations=args.dilations,
        cdcl_depth=args.cdcl_depth, trunk_depth=args.trunk_depth,
        in_channels=args.in_channels, batch=args.batch, epochs=args.epochs,
        steps_per_epoch=args.steps_per_epoch, lr=args.lr, lr_decay=args.lr_decay,
        lr_decay_every=args.lr_decay_every, crop=args.crop, pd_train=args.pd_train,
        pd_test=args.pd_test, augment=args.augment, seed=args.seed,
    )
    for key, value in overrides.items():
        if key not in merged:
            raise ValueError(f"unknown config key {key!r} in {args.config}")
        if key in ("masks",):
            value = tuple(value) if isinstance(value, list) else _csv_words(str(value))
        elif key in ("kernel_sizes", "dilations"):
            value = tuple(int(v) for v in value) if isinstance(value, list) \
                else _csv_ints(str(value))
        merged[key] = value
    _print_config(args, extra={f"resolved_{k}": v for k, v in merged.items()})

    from .models import ArchitectureConfig

    arch_cfg = ArchitectureConfig(
        base_channels=merged["channels"], masks=merged["masks"],
        cdcl_depth=merged["cdcl_depth"], trunk_depth=merged["trunk_depth"],
        kernel_sizes=merged["kernel_sizes"], dilations=merged["dilations"],
        in_channels=merged["in_channels"],
    )
    config = TrainingConfig(
        architecture=arch_cfg, arch=merged["arch"], batch=merged["batch"],
        epochs=merged["epochs"], steps_per_epoch=merged["steps_per_epoch"],
        lr=merged["lr"], lr_decay=merged["lr_decay"],
        lr_decay_every=merged["lr_decay_every"], crop=merged["crop"],
        pd_train=merged["pd_train"], pd_test=merged["pd_test"],
        augment=merged["augment"], seed=merged["seed"],
    )
    images = _load_dataset(args.data)
    t0 = time.perf_counter()
    log = (lambda e, s, l: print(f"epoch {e} step {s} loss {l:.6f}")) if args.verbose else None
    checkpoint, losses = train(config, images, ckpt_dir=args.ckpt_dir, log_fn=log)
    checkpoint.save(args.out)
    if args.loss_csv:
        with open(args.loss_csv, "w", encoding="utf-8") as fh:
            fh.write("step,loss\n")
            fh.writelines(f"{i + 1},{l}\n" for i, l in enumerate(losses))
    last = losses[-1] if losses else float("nan")
    print(f"train: steps={len(losses)} final_loss={last:.6f} "
          f"elapsed={time.perf_counter() - t0:.1f}s checkpoint={args.out}")
    return 0


def cmd_denoise(args):
    from .metrics import psnr, ssim
    from .models import load_checkpoint
    from .pngio import load_png, save_png
    from .train import denoise

    _print_config(args)
    model, _, _ = load_checkpoint(args.ckpt)
    noisy = load_png(args.input)
    out = denoise(model, noisy, s_test=args.pd_test, refine=args.refine,
                  refine_p=args.refine_p, refine_T=args.refine_T, seed=args.seed)
    save_png(args.output, out)
    line = f"denoise: wrote {args.output}"
    if args.reference:
        ref = load_png(args.reference)
        line += (f" psnr={psnr(out, ref):.3f} ssim={ssim(out, ref):.4f}"
                 f" noisy_psnr={psnr(noisy, ref):.3f}")
    print(line)
    return 0


def cmd_bench(args):
    import numpy as np

    from .models import ArchitectureConfig
    from .ops import ConvParams, conv2d, conv2d_backward
    from .train import TrainingConfig, train_step, train

    _print_config(args)
    rng = np.random.default_rng(args.seed)
    x = rng.uniform(0, 1, (args.batch, args.channels, args.size, args.size))
    params = ConvParams.create(args.channels, args.channels, 3, dilation=2, rng=rng)
    conv2d(x, params)  # warm up
    t0 = time.perf_counter()
    for _ in range(args.reps):
        y = conv2d(x, params)
    fwd = (time.perf_counter() - t0) / args.reps
    t0 = time.perf_counter()
    for _ in range(args.reps):
        conv2d_backward(y, x, params)
    bwd = (time.perf_counter() - t0) / args.reps
    taps = args.batch * args.size * args.size * 9 * args.channels * args.channels
    print(f"bench: conv3x3 c={args.channels} size={args.size} batch={args.batch} "
          f"forward={fwd * 1e3:.2f}ms backward={bwd * 1e3:.2f}ms "
          f"throughput={taps / fwd / 1e6:.1f} Mpixel-tap/s")

    cfg = TrainingConfig(
        architecture=ArchitectureConfig(
            base_channels=args.channels, masks=("slash", "backslash"),
            in_channels=3,
        ),
        batch=args.batch, crop=args.size, pd_train=2, epochs=0, seed=args.seed,
    )
    checkpoint, _ = train(cfg, [rng.uniform(0, 1, (1, 3, args.size, args.size))])
    model, adam = checkpoint.model, checkpoint.adam
    batch = rng.uniform(0, 1, (args.batch, 3, args.size, args.size))
    train_step(model, adam, batch, cfg.pd_train)  # warm up
    t0 = time.perf_counter()
    for _ in range(max(1, args.reps // 4)):
        train_step(model, adam, batch, cfg.pd_train)
    step = (time.perf_counter() - t0) / max(1, args.reps // 4)
    print(f"bench: mmbsn train-step c={args.channels} crop={args.size} "
          f"batch={args.batch} latency={step * 1e3:.1f}ms")
    return 0


# ---- parser --------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmbsn",
        description="Multi-mask blind-spot networks for self-supervised denoising.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write clean/noisy synthetic image pairs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pattern", default="disks",
                   choices=("stripes", "checker", "gradient", "disks"))
    p.add_argument("--noise", default="iso",
                   help="noise kernel: white, iso, or a mask tag (default: iso)")
    p.add_argument("--support", type=int, default=5, help="noise kernel support (default: 5)")
    p.add_argument("--sigma", type=float, default=0.2, help="noise std (default: 0.2)")
    p.add_argument("--size", type=int, default=128, help="image size (default: 128)")
    p.add_argument("--count", type=int, default=1, help="number of pairs (default: 1)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("count-params", help="per-layer and total parameter counts")
    _arch_flags(p)
    p.add_argument("--csv", default=None, help="write the per-layer report to a file")
    p.add_argument("--expect", type=float, default=None,
                   help="reference total; exit 1 if outside --tol")
    p.add_argument("--tol", type=float, default=0.10,
                   help="relative tolerance for --expect (default: 0.10)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("verify-blindspot",
                       help="compare theoretical vs measured exclusion sets")
    _arch_flags(p, channels=8)
    p.add_argument("--radius", type=int, default=6, help="probe radius (default: 6)")
    p.add_argument("--trials", type=int, default=3,
                   help="independent weight draws (default: 3)")
    p.add_argument("--probes", type=int, default=5,
                   help="perturbed positions per trial (default: 5)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-unmask-center", action="store_true",
                   help="testing hook: open the center tap (verification must fail)")
    p.set_defaults(func=cmd_verify_blindspot)

    p = sub.add_parser("analyze-noise", help="connected-region census of a residual map")
    p.add_argument("--input", required=True, help="image whose residual is analyzed")
    p.add_argument("--reference",
                   help="clean reference; the residual is input - reference "
                        "(default: input minus its median)")
    p.add_argument("--threshold", default="auto",
                   help="binarization threshold, or 'auto' for 2x a robust std estimate")
    p.add_argument("--csv", default=None, help="write the report to a file")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze_noise)

    p = sub.add_parser("train", help="train a denoiser on a directory of noisy PNGs")
    _arch_flags(p)
    p.add_argument("--data", required=True, help="directory of noisy .png files")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--config", default=None, help="key=value config file (flags override)")
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--steps-per-epoch", type=int, default=None)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lr-decay", type=float, default=0.1)
    p.add_argument("--lr-decay-every", type=int, default=8)
    p.add_argument("--crop", type=int, default=128)
    p.add_argument("--pd-train", type=int, default=5)
    p.add_argument("--pd-test", type=int, default=2)
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--ckpt-dir", default=None, help="directory for per-epoch checkpoints")
    p.add_argument("--loss-csv", default=None, help="write step,loss CSV")
    p.add_argument("--verbose", action="store_true", help="log every step")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise a PNG with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--pd-test", type=int, default=2)
    p.add_argument("--refine", action=argparse.BooleanOptionalAction, default=False,
                   help="random-replacement refinement (default: off)")
    p.add_argument("--refine-p", type=float, default=0.16,
                   help="per-pixel replacement probability (default: 0.16)")
    p.add_argument("--refine-T", type=int, default=8,
                   help="number of refinement passes (default: 8)")
    p.add_argument("--reference", default=None, help="clean image for PSNR/SSIM report")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("bench", help="conv throughput and train-step latency")
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--reps", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
