"""Budgeted sign-gradient ascent against the identity embedding.

Two attack surfaces share one optimizer:

  * scapegoat editing moves latent edit vectors inside an L-infinity ball so
    the edited face no longer matches the original's identity embedding;
  * the destruction baseline perturbs the original image in pixel space so a
    face swap built from it loses the identity instead.

The optimizer (``pgd_sign_ascent``) maximizes ``1 - cos`` identity loss with
fixed-size sign steps, projecting onto exact box bounds after every step and
returning the best iterate, never a worse one than the start.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from . import backend
from .autodiff import Graph
from .errors import ContractError, OptimizationError, ShapeError
from .kvfile import write_kv
from .tensor import box_bounds, cosine_similarity, validate_finite, write_tensor
from .world import (
    LatentCode,
    compose_latent,
    deepfake,
    deepfake_nodes,
    embed_identity,
    embed_identity_raw,
    embed_raw_nodes,
    generate,
    generate_nodes,
)

MODES = ("per-vector", "joint")

DEFAULT_STEP = 0.01
DEFAULT_ITERS = 100
DEFAULT_EPS = 0.05


@dataclass(frozen=True)
class PgdConfig:
    """Knobs for one projected sign-ascent run."""

    eps: float
    step: float = DEFAULT_STEP
    iters: int = DEFAULT_ITERS
    mode: str = "per-vector"

    def validate(self):
        if not (math.isfinite(self.eps) and self.eps >= 0):
            raise ContractError(f"pgd: eps must be finite and >= 0, got {self.eps!r}")
        if not (math.isfinite(self.step) and self.step > 0):
            raise ContractError(f"pgd: step must be finite and > 0, got {self.step!r}")
        if self.iters < 1:
            raise ContractError(f"pgd: iters must be >= 1, got {self.iters!r}")
        if self.mode not in MODES:
            raise ContractError(f"pgd: mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class PgdResult:
    """Best iterate of a sign-ascent run.

    ``delta = point - center`` is computed exactly in the tensor dtype and
    satisfies the L-infinity budget exactly, not merely to rounding error.
    ``trace`` holds the objective at the start and after every step.
    """

    point: np.ndarray
    delta: np.ndarray
    value: float
    trace: list


def pgd_sign_ascent(objective, center, cfg, log=None):
    """Maximize ``objective`` over the L-infinity ball of radius eps at center.

    ``objective(v) -> (value, gradient)`` must be side-effect free on ``v``.
    Iterate: ``v += step * sign(grad)``, clip to the exact box (see
    ``tensor.box_bounds``).  The best iterate (including the start) is
    returned, so the result value never falls below the starting value.
    With a zero budget the center is returned untouched after one
    evaluation.
    """
    cfg.validate()
    validate_finite(center, "pgd center")
    f0, grad = objective(center)
    _check_eval(f0, grad, center.shape, 0)
    if log is not None:
        log(0, f0)
    trace = [f0]
    eps_eff = center.dtype.type(cfg.eps)
    if eps_eff == 0:
        return PgdResult(center.copy(), np.zeros_like(center), f0, trace)

    lo, hi = box_bounds(center, cfg.eps)
    step_eff = float(center.dtype.type(cfg.step))
    k = backend.kernels
    best_val = f0
    best_v = center.copy()
    v = center
    for t in range(1, cfg.iters + 1):
        v = k.pgd_step(v, grad, step_eff, lo, hi)
        f, grad = objective(v)
        _check_eval(f, grad, center.shape, t)
        if log is not None:
            log(t, f)
        trace.append(f)
        if f > best_val:
            best_val = f
            best_v = v
    delta = k.ew_sub(best_v, center)
    return PgdResult(best_v, delta, best_val, trace)


def _check_eval(f, grad, shape, iteration):
    if not math.isfinite(f):
        raise OptimizationError(
            f"objective returned non-finite value at iteration {iteration}",
            iteration=iteration,
        )
    if grad.shape != shape:
        raise ShapeError(
            f"objective gradient shape {grad.shape} does not match point shape {shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise OptimizationError(
            f"objective returned non-finite gradient at iteration {iteration}",
            iteration=iteration,
        )


def identity_loss(world, x_ref, x_cand):
    """``1 - cos`` between the identity embeddings of two images; range [0, 2]."""
    return 1.0 - cosine_similarity(
        embed_identity(world, x_ref), embed_identity(world, x_cand)
    )


def edit_vector(origin, target):
    """Latent edit direction from origin toward target (their difference)."""
    if not isinstance(origin, LatentCode) or not isinstance(target, LatentCode):
        raise ContractError("edit_vector: expected LatentCode operands")
    if origin.w.shape != target.w.shape:
        raise ShapeError(
            f"edit_vector: latent shapes differ: {origin.w.shape} vs {target.w.shape}"
        )
    if (origin.id_start, origin.id_len) != (target.id_start, target.id_len):
        raise ContractError("edit_vector: latents belong to different identity blocks")
    return backend.kernels.ew_sub(target.w, origin.w)


@dataclass(frozen=True)
class ScapegoatResult:
    """Outcome of optimizing edit vectors against the original's identity.

    ``traces`` has one series per vector in per-vector mode and a single
    shared series in joint mode.  ``achieved_loss`` is the identity loss of
    the final composed scapegoat versus the original image, recomputed
    through the public value-level path.
    """

    origin: LatentCode
    directions: list
    optimized: list
    deltas: list
    scapegoat: np.ndarray
    traces: list
    achieved_loss: float
    eps: float
    step: float
    iters: int
    mode: str


def _edit_loss_graph(world, origin_flat, ref_raw, n_vectors):
    """Tape for ``1 - cos(ref, f(G(w_org + mean of packed rows)))``.

    The leaf is a [n_vectors, latent_dim] pack; per-vector mode uses packs
    of one row, joint mode packs all vectors, so both modes run the same
    optimizer over one tensor.
    """
    g = Graph()
    pack = g.input(np.zeros((n_vectors, world.latent_dim), dtype=np.float32))
    mean = g.mean_axis(pack, 0)
    shifted = g.add(g.input(origin_flat), mean)
    x_node = generate_nodes(g, world, shifted)
    e_node = embed_raw_nodes(g, world, x_node)
    cos_node = g.cosine(g.input(ref_raw), e_node)
    loss = g.sub(g.input(np.ones(1, dtype=np.float32)), cos_node)
    return g, pack, loss


def _graph_objective(g, leaf, loss):
    def objective(v):
        g.set_input(leaf, v)
        g.recompute()
        g.backward(loss)
        return float(g.value(loss)[0]), g.grad(leaf)

    return objective


def optimize_scapegoat(world, origin, targets, cfg, log=None):
    """Optimize one edit vector per target and compose the scapegoat.

    Per-vector mode (default) optimizes each vector against its own
    single-vector composition; joint mode takes the gradient of the loss on
    the full averaged composition, stepping every vector each iteration.
    With one target the two modes produce bit-identical results.

    ``log(vector, iteration, value)`` is called per objective evaluation if
    given; ``vector`` is None in joint mode.
    """
    cfg.validate()
    if not targets:
        raise ContractError("optimize_scapegoat: need at least one target")
    x_org = generate(world, origin)
    embed_identity(world, x_org)  # raises DegenerateVectorError when unusable
    ref_raw = embed_identity_raw(world, x_org)
    directions = [edit_vector(origin, t) for t in targets]
    ld = world.latent_dim

    if cfg.mode == "per-vector":
        g, pack, loss = _edit_loss_graph(world, origin.flat, ref_raw, 1)
        obj = _graph_objective(g, pack, loss)
        optimized, deltas, traces = [], [], []
        for n, d in enumerate(directions):
            cb = None if log is None else (lambda t, f, _n=n: log(_n, t, f))
            res = pgd_sign_ascent(obj, d.reshape(1, ld), cfg, log=cb)
            optimized.append(res.point.reshape(world.layers, world.channels))
            deltas.append(res.delta.reshape(world.layers, world.channels))
            traces.append(res.trace)
    else:
        g, pack, loss = _edit_loss_graph(world, origin.flat, ref_raw, len(directions))
        obj = _graph_objective(g, pack, loss)
        center = np.stack([d.reshape(-1) for d in directions])
        cb = None if log is None else (lambda t, f: log(None, t, f))
        res = pgd_sign_ascent(obj, center, cfg, log=cb)
        optimized = [res.point[i].reshape(world.layers, world.channels)
                     for i in range(len(directions))]
        deltas = [res.delta[i].reshape(world.layers, world.channels)
                  for i in range(len(directions))]
        traces = [res.trace]

    final_latent = compose_latent(world, origin, optimized)
    scapegoat = generate(world, final_latent)
    achieved = identity_loss(world, x_org, scapegoat)
    return ScapegoatResult(
        origin=origin, directions=directions, optimized=optimized, deltas=deltas,
        scapegoat=scapegoat, traces=traces, achieved_loss=achieved,
        eps=cfg.eps, step=cfg.step, iters=cfg.iters, mode=cfg.mode,
    )


@dataclass(frozen=True)
class DestructionResult:
    """Outcome of the pixel-space baseline: perturb the original so the swap
    built from it loses the identity."""

    perturbed: np.ndarray
    delta: np.ndarray
    fake: np.ndarray
    achieved_loss: float
    trace: list


def destruction_baseline(world, x_org, x_swap, cfg, log=None):
    """Maximize identity loss of ``deepfake(x_org + delta, x_swap)`` in pixel space.

    The swap image stays fixed; only the source pixels move, under the same
    budgeted sign ascent as the latent attack (cfg.mode is ignored).
    """
    cfg.validate()
    embed_identity(world, x_org)
    ref_raw = embed_identity_raw(world, x_org)
    g = Graph()
    v = g.input(x_org)
    fake_node = deepfake_nodes(g, world, v, x_swap)
    e_node = embed_raw_nodes(g, world, fake_node)
    cos_node = g.cosine(g.input(ref_raw), e_node)
    loss = g.sub(g.input(np.ones(1, dtype=np.float32)), cos_node)
    cb = None if log is None else (lambda t, f: log(None, t, f))
    res = pgd_sign_ascent(_graph_objective(g, v, loss), x_org, cfg, log=cb)
    fake = deepfake(world, res.point, x_swap)
    achieved = identity_loss(world, x_org, fake)
    return DestructionResult(
        perturbed=res.point, delta=res.delta, fake=fake,
        achieved_loss=achieved, trace=res.trace,
    )


def brute_force_box_oracle(objective_value, center, eps, grid=41):
    """Exhaustive grid maximum of a value-only objective over the eps box.

    For small dimensions only (center.size <= 4).  Each axis gets ``grid``
    evenly spaced points between the exact box bounds, plus the center
    coordinate.  Deterministic: the first maximizer in lexicographic grid
    order wins.  Returns (point, value).
    """
    if center.size > 4:
        raise ContractError(f"brute_force_box_oracle: dimension {center.size} > 4")
    if grid < 2:
        raise ContractError(f"brute_force_box_oracle: grid must be >= 2, got {grid}")
    validate_finite(center, "oracle center")
    flat = center.reshape(-1)
    lo, hi = box_bounds(flat, eps)
    axes = []
    for i in range(flat.size):
        pts = np.linspace(lo[i], hi[i], grid).astype(center.dtype)
        pts = np.unique(np.concatenate([pts, flat[i:i + 1]]))
        axes.append(pts)
    best_val = -math.inf
    best_pt = None
    point = np.empty_like(flat)
    for idx in np.ndindex(*[len(a) for a in axes]):
        for i, j in enumerate(idx):
            point[i] = axes[i][j]
        val = float(objective_value(point.reshape(center.shape)))
        if val > best_val:
            best_val = val
            best_pt = point.copy()
    return best_pt.reshape(center.shape), best_val


# ---------------------------------------------------------------------------
# result serialization
# ---------------------------------------------------------------------------

def _write_trace_csv(path, traces):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iter,vector,loss\n")
        for vec, series in enumerate(traces):
            for it, val in enumerate(series):
                fh.write(f"{it},{vec},{val!r}\n")


def save_scapegoat_result(dirpath, result, seed):
    """Write scapegoat.tnsr, u_opt_<n>.tnsr, result.cfg and trace.csv."""
    os.makedirs(dirpath, exist_ok=True)
    write_tensor(os.path.join(dirpath, "scapegoat.tnsr"), result.scapegoat)
    for n, u in enumerate(result.optimized):
        write_tensor(os.path.join(dirpath, f"u_opt_{n}.tnsr"), u)
    write_kv(os.path.join(dirpath, "result.cfg"), {
        "achieved_loss": float(result.achieved_loss),
        "mode": result.mode,
        "eps": float(result.eps),
        "step_a": float(result.step),
        "iters_k": result.iters,
        "n_targets": len(result.directions),
        "seed": seed,
    })
    _write_trace_csv(os.path.join(dirpath, "trace.csv"), result.traces)


def save_destruction_result(dirpath, result, cfg, seed):
    """Write perturbed.tnsr, fake.tnsr, result.cfg and trace.csv.

    result.cfg keeps the same key set as the latent attack; mode is "pixel"
    and n_targets is 0.
    """
    os.makedirs(dirpath, exist_ok=True)
    write_tensor(os.path.join(dirpath, "perturbed.tnsr"), result.perturbed)
    write_tensor(os.path.join(dirpath, "fake.tnsr"), result.fake)
    write_kv(os.path.join(dirpath, "result.cfg"), {
        "achieved_loss": float(result.achieved_loss),
        "mode": "pixel",
        "eps": float(cfg.eps),
        "step_a": float(cfg.step),
        "iters_k": cfg.iters,
        "n_targets": 0,
        "seed": seed,
    })
    _write_trace_csv(os.path.join(dirpath, "trace.csv"), [result.trace])
