"""Inference with early stopping, tamper-evident action traces with bit-exact
replay, a greedy per-pixel planning oracle, synthetic corpus generation, and
the evaluation harness.

Inference applies 16-bit-quantized gain maps (the trace stores the quantized
plane), so replaying a trace reproduces the inference output exactly.
"""

from __future__ import annotations

import csv
import hashlib
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .actions import PARAMETERIZED, ActionKind, N_ACTIONS, all_responses, apply_actions
from .agents import pw_forward, select_actions, select_goal, spm_forward, tpm_forward
from .autodiff import ParamStore
from .imaging import (
    DegradationSpec,
    ImageGeometryError,
    ImagePair,
    as_image,
    degrade,
    gaussian_blur,
    gmsd,
    load_image,
    psnr,
    save_image,
    ssim,
)

DEFAULT_STOP_THRESHOLD = 0.5
PARAM_QUANT = 65535


class TraceError(Exception):
    """Raised for malformed, corrupted, or mismatched trace files."""


# ---------------------------------------------------------------------------
# Trace structures
# ---------------------------------------------------------------------------

@dataclass
class InnerRecord:
    actions: np.ndarray      # (P, P) uint8, values 1..10
    params_q: np.ndarray     # (P, P) uint16, gain * 65535


@dataclass
class OuterRecord:
    crop_y: int
    crop_x: int
    b: float
    stopped: bool
    inner: list[InnerRecord] = field(default_factory=list)


@dataclass
class EpisodeTrace:
    """Everything needed to reproduce one inference output bit-exactly."""

    height: int
    width: int
    patch_size: int
    outer_steps: int
    inner_steps: int
    stop_threshold: float
    checkpoint_hash: bytes   # 16 bytes
    records: list[OuterRecord] = field(default_factory=list)


TRACE_MAGIC = b"PSRTRAC1"
TRACE_VERSION = 1


def save_trace(trace: EpisodeTrace, path) -> None:
    """Serialize a trace; a CRC-32 of the payload trails the file, so any
    single corrupted byte is detected on load."""
    out = bytearray()
    out += TRACE_MAGIC
    out += struct.pack("<I", TRACE_VERSION)
    out += struct.pack(
        "<HHHHHd",
        trace.height, trace.width, trace.patch_size,
        trace.outer_steps, trace.inner_steps, trace.stop_threshold,
    )
    if len(trace.checkpoint_hash) != 16:
        raise TraceError("checkpoint hash must be 16 bytes")
    out += trace.checkpoint_hash
    out += struct.pack("<H", len(trace.records))
    for rec in trace.records:
        out += struct.pack("<HHdB", rec.crop_y, rec.crop_x, rec.b, int(rec.stopped))
        out += struct.pack("<H", len(rec.inner))
        for inner in rec.inner:
            out += inner.actions.astype("<u1").tobytes()
            out += inner.params_q.astype("<u2").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    Path(path).write_bytes(bytes(out))


def load_trace(path) -> EpisodeTrace:
    blob = Path(path).read_bytes()
    if len(blob) < 16:
        raise TraceError("trace file too short")
    payload, crc_stored = blob[:-4], struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(payload) != crc_stored:
        raise TraceError("trace checksum mismatch (file corrupted)")

    view = memoryview(payload)
    if bytes(view[:8]) != TRACE_MAGIC:
        raise TraceError("not a trace file")
    (version,) = struct.unpack("<I", view[8:12])
    if version != TRACE_VERSION:
        raise TraceError(f"unsupported trace version {version}")
    pos = 12
    h, w, p, n_max, t_max, thresh = struct.unpack("<HHHHHd", view[pos : pos + 18])
    pos += 18
    ck_hash = bytes(view[pos : pos + 16])
    pos += 16
    (n_records,) = struct.unpack("<H", view[pos : pos + 2])
    pos += 2
    trace = EpisodeTrace(h, w, p, n_max, t_max, thresh, ck_hash)
    for _ in range(n_records):
        cy, cx, b, stopped = struct.unpack("<HHdB", view[pos : pos + 13])
        pos += 13
        (n_inner,) = struct.unpack("<H", view[pos : pos + 2])
        pos += 2
        rec = OuterRecord(crop_y=cy, crop_x=cx, b=b, stopped=bool(stopped))
        plane = p * p
        for _ in range(n_inner):
            actions = np.frombuffer(view[pos : pos + plane], dtype="<u1").reshape(p, p).copy()
            pos += plane
            params_q = np.frombuffer(view[pos : pos + 2 * plane], dtype="<u2").reshape(p, p).copy()
            pos += 2 * plane
            if actions.min() < 1 or actions.max() > N_ACTIONS:
                raise TraceError("trace holds an out-of-range action index")
            rec.inner.append(InnerRecord(actions=actions, params_q=params_q))
        trace.records.append(rec)
    if pos != len(payload):
        raise TraceError("trailing bytes in trace file")
    return trace


def checkpoint_hash(path) -> bytes:
    """16-byte digest binding traces to the checkpoint that produced them."""
    h = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.digest()


# ---------------------------------------------------------------------------
# Inference and replay
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InferConfig:
    patch_size: int = 96
    outer_steps: int = 8
    inner_steps: int = 3
    stop_threshold: float = DEFAULT_STOP_THRESHOLD
    early_stop: bool = True
    checkpoint_digest: bytes = b"\x00" * 16


def quantize_params(params: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(params, 0.0, 1.0) * PARAM_QUANT).astype(np.uint16)


def dequantize_params(params_q: np.ndarray) -> np.ndarray:
    return params_q.astype(np.float64) / PARAM_QUANT


def infer(img, store: ParamStore, cfg: InferConfig) -> tuple[np.ndarray, EpisodeTrace]:
    """Restore one image with greedy (argmax) decisions, recording the trace.

    Before each outer loop the stop signal is evaluated; when it falls below
    the threshold the remaining loops are skipped and the loop's record keeps
    zero inner steps. Gain maps are quantized to 16 bits before application.
    """
    img = as_image(img)
    height, width = img.shape
    if min(height, width) < cfg.patch_size:
        raise ImageGeometryError(
            f"image {img.shape} smaller than patch {cfg.patch_size}"
        )
    trace = EpisodeTrace(
        height=height, width=width, patch_size=cfg.patch_size,
        outer_steps=cfg.outer_steps, inner_steps=cfg.inner_steps,
        stop_threshold=cfg.stop_threshold, checkpoint_hash=cfg.checkpoint_digest,
    )
    current = img.copy()
    p = cfg.patch_size
    with ad.no_grad():
        for n in range(cfg.outer_steps):
            out = spm_forward(store, current)
            goal = select_goal(out.g_h.data[0], out.g_v.data[0], p, height, width,
                               mode="argmax")
            b = float(tpm_forward(store, out.g_h.data, out.g_v.data).data[0])
            if cfg.early_stop and b < cfg.stop_threshold:
                trace.records.append(OuterRecord(
                    crop_y=goal.crop_y, crop_x=goal.crop_x, b=b, stopped=True))
                break
            rec = OuterRecord(crop_y=goal.crop_y, crop_x=goal.crop_x, b=b, stopped=False)
            patch = current[goal.crop_y : goal.crop_y + p,
                            goal.crop_x : goal.crop_x + p]
            for _ in range(cfg.inner_steps):
                pw = pw_forward(store, patch)
                actions = select_actions(pw.probs.data, mode="argmax")[0]
                params_q = quantize_params(pw.params.data[0, 0])
                patch = apply_actions(patch, actions, dequantize_params(params_q))
                rec.inner.append(InnerRecord(actions=actions, params_q=params_q))
            current[goal.crop_y : goal.crop_y + p,
                    goal.crop_x : goal.crop_x + p] = patch
            trace.records.append(rec)
    return current, trace


def replay(img, trace: EpisodeTrace) -> np.ndarray:
    """Re-apply a recorded trace with no network evaluation."""
    img = as_image(img)
    if img.shape != (trace.height, trace.width):
        raise TraceError(
            f"trace recorded for {(trace.height, trace.width)}, got {img.shape}"
        )
    current = img.copy()
    p = trace.patch_size
    for rec in trace.records:
        if rec.stopped:
            break
        patch = current[rec.crop_y : rec.crop_y + p, rec.crop_x : rec.crop_x + p]
        for inner in rec.inner:
            patch = apply_actions(patch, inner.actions, dequantize_params(inner.params_q))
        current[rec.crop_y : rec.crop_y + p, rec.crop_x : rec.crop_x + p] = patch
    return current


# ---------------------------------------------------------------------------
# Greedy planning oracle
# ---------------------------------------------------------------------------

def greedy_oracle(patch, hr_patch, steps: int = 3, param_levels: int = 8):
    """Exhaustive per-pixel one-step-lookahead planner with target access.

    For each step, every pixel independently tries all actions (parameterized
    ones over a uniform gain grid) and keeps the choice with the largest
    per-pixel error decrease. Ties prefer doing nothing, then the lowest
    action index and gain. Returns (restored, per-step (actions, params),
    per-step scalar rewards).
    """
    patch = as_image(patch)
    hr_patch = as_image(hr_patch)
    if patch.shape != hr_patch.shape:
        raise ImageGeometryError("patch/target shape mismatch")
    levels = np.linspace(0.0, 1.0, param_levels)
    plan: list[tuple[np.ndarray, np.ndarray]] = []
    rewards: list[float] = []
    current = patch.copy()
    for _ in range(steps):
        responses = all_responses(current)
        # candidate 0 is DO_NOTHING so ties fall back to it
        cand_actions = [int(ActionKind.DO_NOTHING)]
        cand_params = [0.0]
        cand_out = [current]
        for kind in ActionKind:
            if kind is ActionKind.DO_NOTHING:
                continue
            resp = responses[kind - 1]
            gains = levels if kind in PARAMETERIZED else np.array([1.0])
            for g in gains:
                cand_actions.append(int(kind))
                cand_params.append(float(g))
                cand_out.append(np.clip(current + g * resp, 0.0, 1.0))
        stack = np.stack(cand_out)                       # (C, P, P)
        err = np.abs(stack - hr_patch[None])
        best = err.argmin(axis=0)                        # first minimum wins
        actions = np.asarray(cand_actions)[best]
        params = np.asarray(cand_params)[best]
        nxt = np.take_along_axis(stack, best[None], axis=0)[0]
        rewards.append(float((np.abs(current - hr_patch) - np.abs(nxt - hr_patch)).mean()))
        plan.append((actions.astype(np.uint8), params))
        current = nxt
    return current, plan, rewards


# ---------------------------------------------------------------------------
# Evaluation harness
# ---------------------------------------------------------------------------

@dataclass
class EvalRow:
    index: int
    psnr_in: float
    ssim_in: float
    gmsd_in: float
    psnr_out: float
    ssim_out: float
    gmsd_out: float


@dataclass
class EvalReport:
    rows: list[EvalRow]

    def mean(self, name: str) -> float:
        return float(np.mean([getattr(r, name) for r in self.rows]))

    def summary(self) -> dict[str, float]:
        keys = ("psnr_in", "ssim_in", "gmsd_in", "psnr_out", "ssim_out", "gmsd_out")
        return {k: self.mean(k) for k in keys}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "psnr_in", "ssim_in", "gmsd_in",
                             "psnr_out", "ssim_out", "gmsd_out"])
            for r in self.rows:
                writer.writerow([r.index, f"{r.psnr_in:.6f}", f"{r.ssim_in:.6f}",
                                 f"{r.gmsd_in:.6f}", f"{r.psnr_out:.6f}",
                                 f"{r.ssim_out:.6f}", f"{r.gmsd_out:.6f}"])


def evaluate(pairs, store: ParamStore, cfg: InferConfig,
             outputs=None) -> EvalReport:
    """Metrics for the resampled input (baseline) and the restored output.

    `outputs` may carry precomputed restored images; otherwise each pair is
    inferred here.
    """
    if len(pairs) == 0:
        raise ValueError("empty evaluation corpus")
    rows = []
    for i, pair in enumerate(pairs):
        out_img = outputs[i] if outputs is not None else infer(pair.lr_up, store, cfg)[0]
        rows.append(EvalRow(
            index=i,
            psnr_in=psnr(pair.lr_up, pair.hr),
            ssim_in=ssim(pair.lr_up, pair.hr),
            gmsd_in=gmsd(pair.lr_up, pair.hr),
            psnr_out=psnr(out_img, pair.hr),
            ssim_out=ssim(out_img, pair.hr),
            gmsd_out=gmsd(out_img, pair.hr),
        ))
    return EvalReport(rows=rows)


# ---------------------------------------------------------------------------
# Synthetic paired corpus
# ---------------------------------------------------------------------------

def synth_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Cell-like texture: dark soft-edged ellipses with speckled interiors on
    a smooth bright background plus fine grain everywhere."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    bg = 0.78 + 0.05 * np.cos(
        2 * np.pi * (rng.uniform(0.5, 2.0) * xx + rng.uniform(0.5, 2.0) * yy)
        + rng.uniform(0, 2 * np.pi)
    )
    img = bg.copy()
    y, x = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(4, 9))):
        cy, cx = rng.random(2) * size
        ax_a, ax_b = rng.uniform(size / 14, size / 5, 2)
        theta = rng.random() * np.pi
        depth = rng.uniform(0.25, 0.5)
        yr = (y - cy) * np.cos(theta) + (x - cx) * np.sin(theta)
        xr = -(y - cy) * np.sin(theta) + (x - cx) * np.cos(theta)
        q = np.clip(((yr / ax_a) ** 2 + (xr / ax_b) ** 2 - 1.0) / 0.08, -60.0, 60.0)
        mask = 1.0 / (1.0 + np.exp(q))
        img -= depth * mask
        img += 0.06 * mask * rng.standard_normal((size, size))
    grain = np.clip(rng.standard_normal((size, size)) * 0.5 + 0.5, 0.0, 1.0)
    img += 0.025 * gaussian_blur(grain, 0.6, 3)
    return np.clip(img, 0.0, 1.0)


def split_counts(count: int) -> tuple[int, int, int]:
    """3:1:1 train/val/test partition sizes."""
    n_train = (3 * count) // 5
    n_val = count // 5
    return n_train, n_val, count - n_train - n_val


@dataclass
class CorpusEntry:
    ident: str
    hr_path: Path
    lr_path: Path
    split: str


def synth_corpus(count: int, image_size: int, spec: DegradationSpec, seed: int,
                 out_dir) -> Path:
    """Generate `count` degraded/clean pairs on disk plus a manifest.

    The manifest is line-delimited "id,hr_path,lr_path,split" with paths
    relative to its own directory; splits follow the 3:1:1 convention.
    """
    out_dir = Path(out_dir)
    (out_dir / "hr").mkdir(parents=True, exist_ok=True)
    (out_dir / "lr").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_train, n_val, _ = split_counts(count)
    lines = []
    for i in range(count):
        hr = synth_image(rng, image_size)
        pair_spec = DegradationSpec(
            kind=spec.kind, scale=spec.scale, blur_sigma=spec.blur_sigma,
            blur_ksize=spec.blur_ksize, noise_level=spec.noise_level,
            seed=int(rng.integers(0, 2**31 - 1)),
        )
        pair = degrade(hr, pair_spec)
        ident = f"img{i:05d}"
        hr_rel = f"hr/{ident}.png"
        lr_rel = f"lr/{ident}.png"
        save_image(pair.hr, out_dir / hr_rel)
        save_image(pair.lr_up, out_dir / lr_rel)
        split = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
        lines.append(f"{ident},{hr_rel},{lr_rel},{split}")
    manifest = out_dir / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_manifest(manifest_path) -> list[CorpusEntry]:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    entries = []
    for line in manifest_path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        ident, hr_rel, lr_rel, split = line.split(",")
        entries.append(CorpusEntry(
            ident=ident, hr_path=root / hr_rel, lr_path=root / lr_rel, split=split
        ))
    return entries


def load_corpus(manifest_path, split: str | None = None) -> list[ImagePair]:
    """Load pairs from a manifest; any user-supplied paired set in the same
    manifest format drops in unchanged."""
    pairs = []
    for entry in read_manifest(manifest_path):
        if split is not None and entry.split != split:
            continue
        pairs.append(ImagePair(lr_up=load_image(entry.lr_path), hr=load_image(entry.hr_path)))
    return pairs


# ---------------------------------------------------------------------------
# Trace visualization
# ---------------------------------------------------------------------------

#: One RGB color per action index 1..10, in order:
#: Sobel left/right/up/down, Laplace, Gaussian, sharp, add, subtract, none.
ACTION_PALETTE = np.array([
    (230, 25, 75),    # 1 Sobel left
    (245, 130, 48),   # 2 Sobel right
    (255, 225, 25),   # 3 Sobel up
    (210, 245, 60),   # 4 Sobel down
    (60, 180, 75),    # 5 Laplace
    (70, 240, 240),   # 6 Gaussian
    (0, 130, 200),    # 7 sharp
    (145, 30, 180),   # 8 addition
    (240, 50, 230),   # 9 subtraction
    (128, 128, 128),  # 10 do nothing
], dtype=np.uint8)


def action_map_image(actions: np.ndarray) -> np.ndarray:
    """Indexed-color (P, P, 3) visualization of one action map."""
    return ACTION_PALETTE[np.asarray(actions, dtype=np.int64) - 1]


def write_trace_visualizations(trace: EpisodeTrace, out_dir) -> list[Path]:
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for n, rec in enumerate(trace.records):
        for t, inner in enumerate(rec.inner):
            path = out_dir / f"actions_n{n}_t{t}.png"
            Image.fromarray(action_map_image(inner.actions), "RGB").save(path)
            written.append(path)
    return written
