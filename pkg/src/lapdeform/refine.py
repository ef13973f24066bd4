"""Per-sequence refinement: Adam over per-frame handles and cameras, with
camera-multiplex initialization/pruning, plus PCA over recovered deformations."""

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .camera import WeakPerspectiveCamera, init_multiplex, multiplex_probabilities
from .losses import FrameSample, LossWeights, build_neighborhoods, total_loss


class RefineError(ValueError):
    pass


class NonFiniteLossError(RefineError):
    pass


@dataclass
class RefineConfig:
    iterations: int = 500
    lr_handles: float = None  # None -> 1e-2 * template bbox diagonal
    lr_scale: float = 1e-2
    lr_translation: float = 1e-1
    lr_quaternion: float = 1e-2
    weights: LossWeights = field(default_factory=LossWeights)
    multiplex_n_c: int = 1
    # (fraction of iterations, hypotheses kept) pairs, strictly increasing fractions
    prune_schedule: tuple = ((0.25, 4), (0.6, 2), (1.0, 1))
    tolerance: float = 0.0  # relative loss-decrease convergence threshold
    seed: int = 0
    tau_rel: float = 1e-3

    def __post_init__(self):
        if self.iterations < 1:
            raise RefineError("iterations must be >= 1")
        for name in ("lr_scale", "lr_translation", "lr_quaternion"):
            if getattr(self, name) <= 0:
                raise RefineError(f"{name} must be > 0")
        if self.lr_handles is not None and self.lr_handles <= 0:
            raise RefineError("lr_handles must be > 0")
        fracs = [f for f, _ in self.prune_schedule]
        if any(b <= a for a, b in zip(fracs, fracs[1:])) or any(
            not 0 < f <= 1 for f in fracs
        ):
            raise RefineError("prune schedule fractions must be strictly increasing in (0,1]")

    @classmethod
    def from_json(cls, obj):
        kwargs = dict(obj)
        if "weights" in kwargs:
            kwargs["weights"] = LossWeights.from_json(kwargs["weights"])
        if "prune_schedule" in kwargs:
            kwargs["prune_schedule"] = tuple(tuple(p) for p in kwargs["prune_schedule"])
        return cls(**kwargs)

    def to_json(self):
        return {
            "iterations": self.iterations,
            "lr_handles": self.lr_handles,
            "lr_scale": self.lr_scale,
            "lr_translation": self.lr_translation,
            "lr_quaternion": self.lr_quaternion,
            "weights": self.weights.to_json(),
            "multiplex_n_c": self.multiplex_n_c,
            "prune_schedule": [list(p) for p in self.prune_schedule],
            "tolerance": self.tolerance,
            "seed": self.seed,
            "tau_rel": self.tau_rel,
        }


@dataclass
class SequenceState:
    frames: list  # of FrameSample
    system: object  # shared DeformSystem

    def __post_init__(self):
        k = self.system.handle_count
        for f in self.frames:
            f.offsets = np.asarray(f.offsets, dtype=np.float64).reshape(k, 3)


@dataclass
class RefineReport:
    loss_trace: list
    initial_total: float
    final_total: float
    best_iteration: int
    per_frame: list
    flags: dict
    wall_clock_sec: float = 0.0

    def to_json(self, include_timing=False):
        obj = {
            "loss_trace": self.loss_trace,
            "initial_total": self.initial_total,
            "final_total": self.final_total,
            "best_iteration": self.best_iteration,
            "per_frame": self.per_frame,
            "flags": self.flags,
        }
        if include_timing:
            obj["wall_clock_sec"] = self.wall_clock_sec
        return obj


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, value, grad):
        grad = np.asarray(grad, dtype=np.float64)
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return value - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _check_finite(value, frame_id, term):
    if not np.isfinite(value):
        raise NonFiniteLossError(f"non-finite loss at frame {frame_id} (term {term})")


def _apply_camera_step(cam, adam_s, adam_t, adam_q, d_s, d_t, d_q):
    s = float(adam_s.step(np.array(cam.s), np.array(d_s)))
    t = adam_t.step(cam.t, d_t)
    q = adam_q.step(cam.q, d_q)
    s = max(s, 1e-4)
    q = q / np.linalg.norm(q)
    return WeakPerspectiveCamera(s, t, q)


def _handle_lr(cfg, system):
    if cfg.lr_handles is not None:
        return cfg.lr_handles
    return 1e-2 * system.template.bbox_diagonal()


def refine(seq, cfg):
    """Minimize the total loss over per-frame handle offsets and cameras.

    Adam updates per parameter block; quaternions renormalized and scales
    clamped after each step; the best iterate by total loss is returned.
    """
    if len(seq.frames) < 1:
        raise RefineError("sequence must contain at least one frame")
    if cfg.multiplex_n_c > 1:
        return _refine_multiplex(seq, cfg)
    return _refine_plain(seq, cfg)


def refine_single_image(seq, cfg):
    """Single-frame refinement with the motion term disabled."""
    if len(seq.frames) != 1:
        raise RefineError("refine_single_image expects a 1-frame sequence")
    weights = dataclasses.replace(cfg.weights, motion=0.0)
    cfg2 = dataclasses.replace(cfg, weights=weights)
    state, report = refine(seq, cfg2)
    report.flags["motion_absent"] = True
    return state, report


def _refine_plain(seq, cfg):
    t0 = time.perf_counter()
    system = seq.system
    neighborhoods = build_neighborhoods(system.template) if cfg.weights.rigid > 0 else None
    frames = [
        FrameSample(f.frame_id, np.array(f.offsets), f.camera, f.observation)
        for f in seq.frames
    ]
    lr_h = _handle_lr(cfg, system)
    opts = []
    for _ in frames:
        opts.append({
            "dh": Adam(lr_h),
            "s": Adam(cfg.lr_scale),
            "t": Adam(cfg.lr_translation),
            "q": Adam(cfg.lr_quaternion),
        })

    trace = []
    best_total = np.inf
    best_iter = 0
    best_snapshot = None
    flat_streak = 0
    prev_total = None
    flags = {}
    for it in range(cfg.iterations):
        bd = total_loss(frames, cfg.weights, system, neighborhoods, cfg.tau_rel)
        _check_finite(bd.total, frames[0].frame_id, "total")
        trace.append(bd.total)
        flags = bd.flags
        if bd.total < best_total:
            best_total = bd.total
            best_iter = it
            best_snapshot = [
                (np.array(f.offsets), f.camera) for f in frames
            ]
        if prev_total is not None and cfg.tolerance > 0:
            rel = abs(prev_total - bd.total) / max(abs(prev_total), 1e-12)
            flat_streak = flat_streak + 1 if rel < cfg.tolerance else 0
            if flat_streak >= 10:
                break
        prev_total = bd.total
        for f, o, g in zip(frames, opts, bd.frame_grads):
            f.offsets = o["dh"].step(f.offsets, g["d_dh"])
            f.camera = _apply_camera_step(
                f.camera, o["s"], o["t"], o["q"], g["d_s"], g["d_t"], g["d_q"]
            )

    for f, (dh, cam) in zip(frames, best_snapshot):
        f.offsets = dh
        f.camera = cam
    final_bd = total_loss(frames, cfg.weights, system, neighborhoods, cfg.tau_rel)
    per_frame = _per_frame_report(frames, cfg, system, neighborhoods)
    report = RefineReport(
        loss_trace=trace,
        initial_total=trace[0],
        final_total=min(best_total, final_bd.total),
        best_iteration=best_iter,
        per_frame=per_frame,
        flags=dict(flags),
        wall_clock_sec=time.perf_counter() - t0,
    )
    return SequenceState(frames, system), report


def _per_frame_report(frames, cfg, system, neighborhoods, chosen=None):
    out = []
    for idx, f in enumerate(frames):
        bd = total_loss([f], cfg.weights, system, neighborhoods, cfg.tau_rel)
        entry = {
            "frame_id": f.frame_id,
            "losses": {k: bd.values[k] for k in sorted(bd.values)},
            "frame_total": bd.total,
        }
        if chosen is not None:
            entry["chosen_hypothesis"] = int(chosen[idx])
        out.append(entry)
    return out


def _refine_multiplex(seq, cfg):
    """Multiplex refinement: per-frame hypotheses over frame-local losses.

    The motion term needs a single camera trajectory, so it is skipped while
    multiple hypotheses are alive; handle offsets are shared per frame and
    updated with probability-weighted gradients.
    """
    t0 = time.perf_counter()
    system = seq.system
    neighborhoods = build_neighborhoods(system.template) if cfg.weights.rigid > 0 else None
    lr_h = _handle_lr(cfg, system)

    per_frame_state = []
    for f in seq.frames:
        mux = init_multiplex(cfg.multiplex_n_c, f.camera.s)
        hyps = []
        for h in mux.hypotheses:
            cam = WeakPerspectiveCamera(h.camera.s, f.camera.t, h.camera.q)
            hyps.append({
                "camera": cam,
                "s": Adam(cfg.lr_scale),
                "t": Adam(cfg.lr_translation),
                "q": Adam(cfg.lr_quaternion),
            })
        per_frame_state.append({
            "frame": FrameSample(f.frame_id, np.array(f.offsets), f.camera, f.observation),
            "dh_opt": Adam(lr_h),
            "hyps": hyps,
            "probs": np.full(len(hyps), 1.0 / len(hyps)),
        })

    local_weights = LossWeights(0.0, cfg.weights.kp, cfg.weights.rigid, cfg.weights.boundary)
    prune_iters = {
        max(0, int(np.ceil(frac * cfg.iterations)) - 1): keep
        for frac, keep in cfg.prune_schedule
    }

    trace = []
    best_total = np.inf
    best_iter = 0
    best_snapshot = None
    for it in range(cfg.iterations):
        iteration_total = 0.0
        for st in per_frame_state:
            frame = st["frame"]
            losses, grads = [], []
            for hyp in st["hyps"]:
                sample = FrameSample(frame.frame_id, frame.offsets, hyp["camera"], frame.observation)
                bd = total_loss([sample], local_weights, system, neighborhoods, cfg.tau_rel)
                _check_finite(bd.total, frame.frame_id, "total")
                losses.append(bd.total)
                grads.append(bd.frame_grads[0])
            probs = multiplex_probabilities(losses)
            st["probs"] = probs
            iteration_total += float(np.dot(probs, losses))
            d_dh = sum(p * g["d_dh"] for p, g in zip(probs, grads))
            frame.offsets = st["dh_opt"].step(frame.offsets, d_dh)
            for hyp, g in zip(st["hyps"], grads):
                hyp["camera"] = _apply_camera_step(
                    hyp["camera"], hyp["s"], hyp["t"], hyp["q"],
                    g["d_s"], g["d_t"], g["d_q"],
                )
        trace.append(iteration_total)
        if iteration_total < best_total:
            best_total = iteration_total
            best_iter = it
            best_snapshot = [
                {
                    "offsets": np.array(st["frame"].offsets),
                    "cams": [h["camera"] for h in st["hyps"]],
                    "probs": np.array(st["probs"]),
                }
                for st in per_frame_state
            ]
        if it in prune_iters:
            keep = prune_iters[it]
            for st in per_frame_state:
                if keep < len(st["hyps"]):
                    order = np.argsort(-st["probs"], kind="stable")[:keep]
                    order = np.sort(order)
                    st["hyps"] = [st["hyps"][i] for i in order]
                    p = st["probs"][order]
                    st["probs"] = p / p.sum()
            # snapshots refer to pruned hypothesis sets from here on
            best_snapshot = None
            best_total = np.inf

    frames = []
    chosen = []
    for st, snap in zip(per_frame_state, best_snapshot or [None] * len(per_frame_state)):
        frame = st["frame"]
        if snap is not None:
            frame.offsets = snap["offsets"]
            cams, probs = snap["cams"], snap["probs"]
        else:
            cams = [h["camera"] for h in st["hyps"]]
            probs = st["probs"]
        top = int(np.argmax(probs))
        chosen.append(top)
        frames.append(FrameSample(frame.frame_id, frame.offsets, cams[top], frame.observation))

    per_frame = _per_frame_report(frames, RefineConfig.from_json({**cfg.to_json(), "weights": local_weights.to_json()}),
                                  system, neighborhoods, chosen)
    final_total = sum(e["frame_total"] for e in per_frame)
    report = RefineReport(
        loss_trace=trace,
        initial_total=trace[0],
        final_total=final_total,
        best_iteration=best_iter,
        per_frame=per_frame,
        flags={"motion_absent": True, "multiplex": True},
        wall_clock_sec=time.perf_counter() - t0,
    )
    return SequenceState(frames, system), report


def pca_deformations(samples, modes):
    """PCA over flattened handle-offset samples.

    Returns (mean (K,3), modes (m,K,3), variances (m,)); modes are unit norm
    with the largest-magnitude component made positive, variances descending
    (1/n convention).
    """
    samples = [np.asarray(s, dtype=np.float64) for s in samples]
    if len(samples) < 2:
        raise RefineError("need at least 2 samples for PCA")
    k3 = samples[0].size
    shape = samples[0].shape
    if modes < 1 or modes > min(len(samples) - 1, k3):
        raise RefineError("mode count out of range")
    x = np.stack([s.ravel() for s in samples])  # (n, 3K)
    mean = x.mean(axis=0)
    xc = x - mean
    # eigen-decomposition of the (1/n) covariance via SVD
    u, sing, vt = np.linalg.svd(xc, full_matrices=False)
    variances = sing ** 2 / x.shape[0]
    out_modes = []
    for i in range(modes):
        m = vt[i]
        j = int(np.argmax(np.abs(m)))
        if m[j] < 0:
            m = -m
        out_modes.append(m.reshape(shape))
    return mean.reshape(shape), np.stack(out_modes), variances[:modes]
