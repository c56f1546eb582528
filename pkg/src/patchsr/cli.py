"""Command-line interface: synth, train, infer, replay, eval, oracle, gradcheck.

Every subcommand accepts ``--config FILE`` (JSON, keys matching the flags)
with explicit flags taking precedence. Exits nonzero on bad usage or failed
checks.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .agents import init_params
from .autodiff import load_checkpoint
from .imaging import DegradationKind, DegradationSpec, load_image, psnr, save_image
from .learn import TrainConfig, desk_config, make_optimizers, train
from .runtime import (
    EvalReport,
    InferConfig,
    checkpoint_hash,
    evaluate,
    greedy_oracle,
    infer,
    load_corpus,
    load_trace,
    replay,
    save_trace,
    synth_corpus,
    write_trace_visualizations,
)

KIND_NAMES = {k.value: k for k in DegradationKind}


def _config_overlay(args, keys):
    """Merge config-file values under explicit CLI flags."""
    overlay = {}
    if getattr(args, "config", None):
        overlay.update(json.loads(Path(args.config).read_text()))
    out = {}
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in overlay:
            out[key] = overlay[key]
    return out


def _degradation_from(args) -> DegradationSpec:
    merged = _config_overlay(
        args, ["kind", "scale", "blur_sigma", "blur_ksize", "noise_level", "degradation_seed"]
    )
    kind = KIND_NAMES[merged.get("kind", "blur")]
    return DegradationSpec(
        kind=kind,
        scale=int(merged.get("scale", 2)),
        blur_sigma=float(merged.get("blur_sigma", 1.0)),
        blur_ksize=int(merged.get("blur_ksize", 3)),
        noise_level=float(merged.get("noise_level", 0.05)),
        seed=int(merged.get("degradation_seed", 0)),
    )


def _train_config_from(args) -> TrainConfig:
    keys = [f.name for f in TrainConfig.__dataclass_fields__.values()]
    merged = _config_overlay(args, keys)
    if getattr(args, "preset", None) == "desk":
        return desk_config(**merged)
    return TrainConfig(**merged)


def _load_model(checkpoint, cfg: TrainConfig):
    store = init_params(np.random.default_rng(cfg.seed), cfg.net())
    episode = load_checkpoint(checkpoint, store)
    return store, episode


def _infer_config(train_cfg: TrainConfig, args, digest=b"\x00" * 16) -> InferConfig:
    return InferConfig(
        patch_size=train_cfg.patch_size,
        outer_steps=train_cfg.outer_steps,
        inner_steps=train_cfg.inner_steps,
        stop_threshold=getattr(args, "stop_threshold", None) or 0.5,
        early_stop=not getattr(args, "no_early_stop", False),
        checkpoint_digest=digest,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = _degradation_from(args)
    manifest = synth_corpus(args.count, args.size, spec, args.seed, args.out)
    print(f"wrote {args.count} pairs under {Path(args.out)} (manifest: {manifest})")
    return 0


def cmd_train(args) -> int:
    cfg = _train_config_from(args)
    pairs = load_corpus(args.manifest, split="train")
    val_pairs = load_corpus(args.manifest, split="val")

    def val_fn(store):
        subset = val_pairs[: cfg.val_subset]
        icfg = InferConfig(patch_size=cfg.patch_size, outer_steps=cfg.outer_steps,
                           inner_steps=cfg.inner_steps)
        report = evaluate(subset, store, icfg)
        return {"psnr": report.mean("psnr_out"), "ssim": report.mean("ssim_out"),
                "gmsd": report.mean("gmsd_out")}

    result = train(pairs, cfg, args.out, val_fn=val_fn if val_pairs else None,
                   resume_from=args.resume, quiet=args.quiet)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics:    {result.csv_path}")
    return 0


def cmd_infer(args) -> int:
    cfg = _train_config_from(args)
    store, _ = _load_model(args.checkpoint, cfg)
    icfg = _infer_config(cfg, args, digest=checkpoint_hash(args.checkpoint))
    img = load_image(args.input)
    out, trace = infer(img, store, icfg)
    save_image(out, args.output)
    print(f"restored image -> {args.output}")
    if args.emit_trace:
        trace_path = Path(args.output).with_suffix(".trace")
        save_trace(trace, trace_path)
        vis = write_trace_visualizations(trace, Path(args.output).parent / "trace_vis")
        print(f"trace -> {trace_path} ({len(vis)} action-map images)")
    return 0


def cmd_replay(args) -> int:
    trace = load_trace(args.trace)
    img = load_image(args.input)
    out = replay(img, trace)
    save_image(out, args.output)
    print(f"replayed {len(trace.records)} outer loops -> {args.output}")
    return 0


def cmd_eval(args) -> int:
    cfg = _train_config_from(args)
    store, _ = _load_model(args.checkpoint, cfg)
    icfg = _infer_config(cfg, args)
    pairs = load_corpus(args.manifest, split=args.split)
    report = evaluate(pairs, store, icfg)
    if args.out:
        report.write_csv(args.out)
    s = report.summary()
    print(f"baseline: psnr {s['psnr_in']:.4f}  ssim {s['ssim_in']:.4f}  gmsd {s['gmsd_in']:.4f}")
    print(f"restored: psnr {s['psnr_out']:.4f}  ssim {s['ssim_out']:.4f}  gmsd {s['gmsd_out']:.4f}")
    return 0


def cmd_oracle(args) -> int:
    pairs = load_corpus(args.manifest, split=args.split)
    cfg = _train_config_from(args)
    rng = np.random.default_rng(args.seed)
    gains = []
    for pair in pairs[: args.limit]:
        h, w = pair.hr.shape
        y = int(rng.integers(0, h - cfg.patch_size + 1))
        x = int(rng.integers(0, w - cfg.patch_size + 1))
        patch = pair.lr_up[y : y + cfg.patch_size, x : x + cfg.patch_size]
        hr_patch = pair.hr[y : y + cfg.patch_size, x : x + cfg.patch_size]
        restored, _, _ = greedy_oracle(patch, hr_patch, steps=cfg.inner_steps,
                                       param_levels=args.param_levels)
        gains.append(psnr(restored, hr_patch) - psnr(patch, hr_patch))
    print(f"greedy oracle on {len(gains)} patches: mean gain {np.mean(gains):.3f} dB "
          f"(min {np.min(gains):.3f}, max {np.max(gains):.3f})")
    return 0


def cmd_gradcheck(args) -> int:
    """Finite-difference checks of every training loss.

    Each loss is checked against exactly the groups it trains; paths that the
    losses deliberately detach are replaced by constants, since numeric
    differentiation cannot honor a stop-gradient.
    """
    from .agents import (
        NetConfig, pw_backbone_features, pw_forward, pw_policy_logits,
        pw_value, spm_forward, tpm_forward,
    )
    from . import learn

    rng = np.random.default_rng(args.seed)
    st = init_params(np.random.default_rng(args.seed), NetConfig(backbone_channels=6, head_channels=4))
    for _, _, t in st.items():
        if not t.data.any():
            t.data = rng.normal(0.0, 0.1, t.data.shape)
    patch = rng.random((1, 8, 8))
    img = rng.random((1, 16, 16))
    action_map = rng.integers(1, 11, size=(1, 8, 8))
    adv = rng.normal(size=(1, 1, 8, 8))
    p_const = rng.random((1, 1, 8, 8))

    checks = {}

    def run_params(name, fn, params):
        report = ad.gradcheck(fn, params, rng=np.random.default_rng(1), tol=args.tol,
                              max_entries=args.entries)
        checks[name] = report
        flag = "ok" if report.passed else "FAIL"
        print(f"{name:22s} max rel err {report.max_rel_err:.3e}  [{flag}]")

    def run(name, fn, groups):
        run_params(name, fn, {f"{g}/{n}": t for g, n, t in st.items() if g in groups})

    x = ad.Tensor(rng.normal(size=(2, 3, 6, 6)), requires_grad=True)
    cw = ad.Tensor(rng.normal(size=(2, 3, 3, 3)) * 0.4, requires_grad=True)
    cb = ad.Tensor(rng.normal(size=(2,)) * 0.1, requires_grad=True)
    v = ad.Tensor(rng.normal(size=(3, 8)), requires_grad=True)
    dw = ad.Tensor(rng.normal(size=(4, 8)) * 0.4, requires_grad=True)
    db = ad.Tensor(rng.normal(size=(4,)) * 0.1, requires_grad=True)
    mix = rng.normal(size=(3, 8))
    run_params("layer conv2d", lambda: ad.mean(ad.square(ad.conv2d(x, cw, cb))),
               {"x": x, "w": cw, "b": cb})
    run_params("layer maxpool", lambda: ad.mean(ad.square(ad.maxpool2d(x, (2, 2), (2, 2)))), {"x": x})
    run_params("layer reflect_pad", lambda: ad.mean(ad.square(ad.reflect_pad2d(x, 1, 2))), {"x": x})
    run_params("layer axis_pool", lambda: ad.mean(ad.square(ad.axis_avg_pool(x)[0])), {"x": x})
    run_params("layer dense", lambda: ad.mean(ad.square(ad.linear(v, dw, db))),
               {"v": v, "w": dw, "b": db})
    run_params("layer relu", lambda: ad.mean(ad.relu(v)), {"v": v})
    run_params("layer sigmoid", lambda: ad.mean(ad.sigmoid(v)), {"v": v})
    run_params("layer softmax", lambda: ad.mean(ad.mul(ad.softmax(v, axis=1), mix)), {"v": v})
    run_params("layer log_softmax", lambda: ad.mean(ad.mul(ad.log_softmax(v, axis=1), mix)), {"v": v})

    run("worker_policy", lambda: learn.loss_policy_worker(
        adv, np.zeros_like(adv),
        learn.select_log_probs(
            ad.log_softmax(pw_policy_logits(st, pw_backbone_features(st, patch)), axis=1),
            action_map)),
        ("pw_policy", "pw_backbone"))
    run("worker_value", lambda: learn.loss_value_worker(
        adv, pw_value(st, pw_backbone_features(st, patch), ad.Tensor(p_const))),
        ("pw_value", "pw_backbone"))

    def param_loss():
        out = pw_forward(st, patch)
        return learn.loss_param_worker(pw_value(st, out.feats.detach(), out.params))

    run("worker_param", param_loss, ("pw_param",))

    def manager_policy():
        out = spm_forward(st, img)
        lp_h = learn.select_axis_log_prob(ad.log_softmax(out.logits_h, axis=1), np.array([3]))
        lp_v = learn.select_axis_log_prob(ad.log_softmax(out.logits_v, axis=1), np.array([5]))
        return learn.loss_policy_manager(np.array([0.7]), np.array([0.1]), lp_h, lp_v)

    run("manager_policy", manager_policy,
        ("spm_backbone", "spm_policy_h", "spm_policy_v"))
    run("manager_value", lambda: learn.loss_value_manager(
        np.array([0.7]), spm_forward(st, img, with_value=True).value),
        ("spm_value",))

    g = rng.random((1, 16))
    g /= g.sum()
    run("temporal", lambda: learn.loss_temporal(tpm_forward(st, g, g), np.array([1.0])),
        ("tpm",))

    return 0 if all(r.passed for r in checks.values()) else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchsr",
        description="Patch-level image restoration by hierarchical RL over classical filters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--preset", choices=["desk"], help="start from the desk-scale preset")
        for f in TrainConfig.__dataclass_fields__.values():
            if f.name in ("seed",):
                continue
            flag = "--" + f.name.replace("_", "-")
            kind = type(f.default)
            p.add_argument(flag, type=float if kind is float else (str if kind is str else int),
                           default=None, help=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth", help="generate a synthetic degraded/clean corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=int, default=48)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--kind", choices=sorted(KIND_NAMES), default=None)
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--blur-sigma", dest="blur_sigma", type=float, default=None)
    p.add_argument("--blur-ksize", dest="blur_ksize", type=int, default=None)
    p.add_argument("--noise-level", dest="noise_level", type=float, default=None)
    p.add_argument("--degradation-seed", dest="degradation_seed", type=int, default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train on a corpus manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    p.add_argument("--quiet", action="store_true")
    add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("infer", help="restore one image with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--emit-trace", action="store_true")
    p.add_argument("--stop-threshold", dest="stop_threshold", type=float, default=None)
    p.add_argument("--no-early-stop", dest="no_early_stop", action="store_true")
    add_common(p)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("replay", help="re-apply a recorded trace (no networks)")
    p.add_argument("--trace", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("eval", help="metrics for baseline and restored images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", default=None)
    p.add_argument("--stop-threshold", dest="stop_threshold", type=float, default=None)
    p.add_argument("--no-early-stop", dest="no_early_stop", action="store_true")
    add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("oracle", help="greedy planning bound on corpus patches")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--limit", type=int, default=50)
    p.add_argument("--param-levels", dest="param_levels", type=int, default=8)
    add_common(p)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every loss")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--entries", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
