"""Self-contained differentiable toy face world.

A world bundles four fitted maps on small dense tensors:

    generate        latent [layers, channels] -> image [image_dim]
                    ``A @ w + alpha * tanh(B @ w)`` with fixed random A, B
    encode          image -> latent, closed-form ridge fit of the inverse
    embed_identity  image -> unit vector [id_dim], ridge fit onto the true
                    identity coordinates (a designated block of the latent)
    deepfake        face swap: keep the source's identity block, take the
                    style block from the swap target, regenerate

Everything is float32 with float64 accumulation inside kernels, fully
deterministic per seed, and differentiable through the taped graphs in
``autodiff`` (graph builders below).
"""

import dataclasses
import hashlib
import math
import os
from dataclasses import dataclass

import numpy as np

from . import backend
from .autodiff import Graph
from .errors import ContractError, DegenerateVectorError, FormatError, ShapeError, WorldFitError
from .kvfile import read_kv, require_keys, write_kv
from .tensor import cosine_similarity, NORM_FLOOR, read_tensor, validate_finite, write_tensor

DEFAULT_LAYERS = 4
DEFAULT_CHANNELS = 16
DEFAULT_IMAGE_DIM = 128
DEFAULT_ID_DIM = 16
DEFAULT_ALPHA = 0.3
DEFAULT_RIDGE = 1e-3
DEFAULT_PROBE = 256

# reconstruction fidelity a freshly built world must reach
FIDELITY_GATE = 0.1

_MASK64 = (1 << 64) - 1
_BUILD_SALT = 1
_STREAM_SALT = 2

_WORLD_FILES = {
    "A.tnsr": "lin_weight",
    "B.tnsr": "tanh_weight",
    "enc_w.tnsr": "enc_weight",
    "enc_b.tnsr": "enc_bias",
    "idmap.tnsr": "id_map",
}

_CFG_KEYS = (
    "version", "L", "D", "d_x", "d_id", "alpha", "ridge_lambda", "seed",
    "id_block_start", "id_block_len", "fidelity_recon", "fidelity_id",
)


@dataclass(frozen=True)
class WorldConfig:
    """Build-time parameters for a toy world."""

    layers: int = DEFAULT_LAYERS
    channels: int = DEFAULT_CHANNELS
    image_dim: int = DEFAULT_IMAGE_DIM
    id_dim: int = DEFAULT_ID_DIM
    alpha: float = DEFAULT_ALPHA
    ridge_lambda: float = DEFAULT_RIDGE
    probe_size: int = DEFAULT_PROBE
    seed: int = 0
    id_block_start: int = 0
    id_block_len: int = None  # None -> latent_dim // 4

    @property
    def latent_dim(self):
        return self.layers * self.channels

    def resolved_id_block(self):
        start = self.id_block_start
        length = self.id_block_len if self.id_block_len is not None else self.latent_dim // 4
        return start, length

    def validate(self):
        if self.layers < 1 or self.channels < 1:
            raise ContractError("world: layers and channels must be >= 1")
        if self.latent_dim < 4:
            raise ContractError(f"world: latent dim {self.latent_dim} too small (need >= 4)")
        if self.image_dim <= self.latent_dim:
            raise ContractError(
                f"world: image_dim {self.image_dim} must exceed latent dim {self.latent_dim}"
            )
        start, length = self.resolved_id_block()
        if length < 1 or start < 0 or start + length > self.latent_dim:
            raise ContractError(
                f"world: identity block [{start}, {start + length}) outside latent of "
                f"size {self.latent_dim}"
            )
        if not 1 <= self.id_dim <= length:
            raise ContractError(
                f"world: id_dim {self.id_dim} must be in 1..{length} (identity block length)"
            )
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ContractError(f"world: alpha must be finite and >= 0, got {self.alpha!r}")
        if not (math.isfinite(self.ridge_lambda) and self.ridge_lambda >= 0):
            raise ContractError(
                f"world: ridge_lambda must be finite and >= 0, got {self.ridge_lambda!r}"
            )
        if self.probe_size < self.latent_dim:
            raise ContractError(
                f"world: probe_size {self.probe_size} must be >= latent dim {self.latent_dim}"
            )
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ContractError(f"world: seed must be a non-negative int, got {self.seed!r}")


@dataclass(frozen=True)
class LatentCode:
    """A latent point plus the world's identity/style block split.

    ``w`` is float32 [layers, channels]; treat it as immutable.
    """

    w: np.ndarray
    id_start: int
    id_len: int

    @property
    def flat(self):
        return self.w.reshape(-1)

    def id_block(self):
        return self.flat[self.id_start:self.id_start + self.id_len]


@dataclass(frozen=True)
class ToyWorld:
    """A fitted toy world; build with ``build_world``, persist with ``save_world``."""

    layers: int
    channels: int
    image_dim: int
    id_dim: int
    alpha: float
    ridge_lambda: float
    seed: int
    id_start: int
    id_len: int
    lin_weight: np.ndarray   # [image_dim, latent_dim]
    tanh_weight: np.ndarray  # [image_dim, latent_dim]
    enc_weight: np.ndarray   # [latent_dim, image_dim]
    enc_bias: np.ndarray     # [latent_dim]
    id_map: np.ndarray       # [id_dim, image_dim]
    fidelity_recon: float
    fidelity_id: float

    @property
    def latent_dim(self):
        return self.layers * self.channels

    def id_mask(self):
        mask = np.zeros(self.latent_dim, dtype=bool)
        mask[self.id_start:self.id_start + self.id_len] = True
        return mask

    def latent(self, w):
        """Wrap a [layers, channels] or flat array as a LatentCode of this world."""
        arr = np.ascontiguousarray(w, dtype=np.float32)
        if arr.size != self.latent_dim:
            raise ShapeError(
                f"latent: expected {self.layers}x{self.channels} values, got shape {arr.shape}"
            )
        validate_finite(arr, "latent")
        return LatentCode(arr.reshape(self.layers, self.channels), self.id_start, self.id_len)


def rng_stream(seed, index=0):
    """Independent generator for one sample; stream id is ``seed XOR index``."""
    if seed < 0 or index < 0:
        raise ContractError("rng_stream: seed and index must be non-negative")
    return np.random.default_rng([(seed ^ index) & _MASK64, _STREAM_SALT])


def sample_latent(world, rng):
    """Draw a latent with i.i.d. uniform(-1, 1) coordinates."""
    w = rng.uniform(-1.0, 1.0, size=(world.layers, world.channels)).astype(np.float32)
    return LatentCode(w, world.id_start, world.id_len)


def _generate_flat(lin_weight, tanh_weight, alpha, w_flat):
    k = backend.kernels
    bent = k.ew_scale(k.tanh_fwd(k.matvec(tanh_weight, w_flat)), alpha)
    return k.ew_add(k.matvec(lin_weight, w_flat), bent)


def _check_latent(world, latent):
    if not isinstance(latent, LatentCode):
        raise ContractError(f"expected a LatentCode, got {type(latent).__name__}")
    if latent.w.shape != (world.layers, world.channels):
        raise ShapeError(
            f"latent shape {latent.w.shape} does not match world "
            f"({world.layers}, {world.channels})"
        )
    if (latent.id_start, latent.id_len) != (world.id_start, world.id_len):
        raise ContractError("latent identity block does not match this world")


def _check_image(world, x, what="image"):
    if x.shape != (world.image_dim,):
        raise ShapeError(f"{what} shape {x.shape} does not match world ({world.image_dim},)")
    validate_finite(x, what)


def generate(world, latent):
    """Render a latent to an image: ``A @ w + alpha * tanh(B @ w)``."""
    _check_latent(world, latent)
    alpha32 = float(np.float32(world.alpha))
    return _generate_flat(world.lin_weight, world.tanh_weight, alpha32, latent.flat)


def encode(world, x):
    """Closed-form approximate inverse of generate."""
    _check_image(world, x)
    flat = backend.kernels.affine(world.enc_weight, x, world.enc_bias)
    return LatentCode(flat.reshape(world.layers, world.channels), world.id_start, world.id_len)


def embed_identity_raw(world, x):
    """Identity features before normalization (linear in the image)."""
    _check_image(world, x)
    return backend.kernels.matvec(world.id_map, x)


def embed_identity(world, x):
    """Unit-norm identity embedding of an image."""
    raw = embed_identity_raw(world, x)
    norm = math.sqrt(backend.kernels.sumsq(raw))
    if norm <= NORM_FLOOR:
        raise DegenerateVectorError(
            f"embed_identity: feature norm at or below {NORM_FLOOR:g}"
        )
    return backend.kernels.ew_scale(raw, float(np.float32(1.0 / norm)))


def deepfake(world, src, swap):
    """Face swap: source identity block, swap style block, regenerated."""
    _check_image(world, src, "source image")
    _check_image(world, swap, "swap image")
    e_src = encode(world, src).flat
    e_swp = encode(world, swap).flat
    comp = np.where(world.id_mask(), e_src, e_swp)
    return generate(world, world.latent(comp))


def compose_latent(world, origin, directions):
    """Origin shifted by the mean of the given edit directions.

    This is the one canonical composition path; optimizers and reports both
    call it so recomputation is bit-exact.
    """
    _check_latent(world, origin)
    if not directions:
        raise ContractError("compose_latent: need at least one direction")
    flats = []
    for i, d in enumerate(directions):
        arr = np.ascontiguousarray(d, dtype=np.float32)
        if arr.size != world.latent_dim:
            raise ShapeError(f"compose_latent: direction {i} has shape {arr.shape}")
        validate_finite(arr, f"direction {i}")
        flats.append(arr.reshape(-1))
    stack = np.stack(flats)
    mean = backend.kernels.mean_mid(stack.reshape(1, len(flats), world.latent_dim))[0]
    shifted = backend.kernels.ew_add(origin.flat, mean)
    return world.latent(shifted)


def refine_latent(world, x, start, steps=50, lr=0.05):
    """Gradient-descent polish of a latent toward ``generate(w) == x``.

    Keeps the best iterate, so the squared reconstruction error never
    exceeds the starting point's.
    """
    _check_image(world, x)
    _check_latent(world, start)
    if steps < 0:
        raise ContractError(f"refine_latent: steps must be >= 0, got {steps}")
    if not (math.isfinite(lr) and lr > 0):
        raise ContractError(f"refine_latent: lr must be finite and > 0, got {lr!r}")
    if steps == 0:
        return world.latent(start.flat.copy())

    g = Graph()
    w_leaf = g.input(start.flat)
    xhat = generate_nodes(g, world, w_leaf)
    target = g.input(x)
    resid = g.sub(xhat, target)
    loss = g.dot(resid, resid)

    k = backend.kernels
    lr32 = float(np.float32(lr))
    best_err = float(g.value(loss)[0])
    best_w = start.flat.copy()
    cur = start.flat
    for _ in range(steps):
        g.backward(loss)
        step_vec = k.ew_scale(g.grad(w_leaf), lr32)
        cur = k.ew_sub(cur, step_vec)
        g.set_input(w_leaf, cur)
        g.recompute()
        err = float(g.value(loss)[0])
        if err < best_err:
            best_err = err
            best_w = cur.copy()
    return world.latent(best_w)


# ---------------------------------------------------------------------------
# graph builders (differentiable paths)
# ---------------------------------------------------------------------------

def generate_nodes(g, world, latent_node):
    """Record generate() on the tape; latent_node is a flat [latent_dim] node."""
    dt = g.value(latent_node).dtype
    a = g.input(np.asarray(world.lin_weight, dtype=dt))
    b = g.input(np.asarray(world.tanh_weight, dtype=dt))
    lin = g.matmul(a, latent_node)
    bent = g.scale(g.tanh(g.matmul(b, latent_node)), world.alpha)
    return g.add(lin, bent)


def embed_raw_nodes(g, world, image_node):
    """Record the pre-normalization identity features on the tape."""
    dt = g.value(image_node).dtype
    idm = g.input(np.asarray(world.id_map, dtype=dt))
    return g.matmul(idm, image_node)


def deepfake_nodes(g, world, src_node, swap_image):
    """Record deepfake() with a fixed swap image; src_node is an image node.

    The identity block is selected with a constant 0/1 diagonal matrix and
    the swap's style block enters as a constant vector, so the composition
    equals the value-level ``np.where`` exactly.
    """
    _check_image(world, swap_image, "swap image")
    dt = g.value(src_node).dtype
    mask = world.id_mask()
    e_swp = encode(world, swap_image).flat
    style_vec = np.where(mask, np.float32(0.0), e_swp).astype(dt)
    id_diag = np.diag(mask.astype(dt))

    e_src = g.affine(
        g.input(np.asarray(world.enc_weight, dtype=dt)),
        src_node,
        g.input(np.asarray(world.enc_bias, dtype=dt)),
    )
    comp = g.add(g.matmul(g.input(id_diag), e_src), g.input(style_vec))
    return generate_nodes(g, world, comp)


# ---------------------------------------------------------------------------
# construction, persistence
# ---------------------------------------------------------------------------

def build_world(cfg=WorldConfig()):
    """Fit a world: random generator weights, ridge encoder, ridge identity map.

    Deterministic per seed.  Raises WorldFitError if reconstruction fidelity
    misses the gate.
    """
    cfg.validate()
    ld = cfg.latent_dim
    id_start, id_len = cfg.resolved_id_block()
    rng = np.random.default_rng([cfg.seed & _MASK64, _BUILD_SALT])
    scale = 1.0 / math.sqrt(ld)
    lin_weight = (rng.standard_normal((cfg.image_dim, ld)) * scale).astype(np.float32)
    tanh_weight = (rng.standard_normal((cfg.image_dim, ld)) * scale).astype(np.float32)
    probe_w = rng.uniform(-1.0, 1.0, size=(cfg.probe_size, ld)).astype(np.float32)

    alpha32 = float(np.float32(cfg.alpha))
    images = np.stack([
        _generate_flat(lin_weight, tanh_weight, alpha32, probe_w[i])
        for i in range(cfg.probe_size)
    ])

    # ridge fits in float64; the encoder is centered, the identity map is not
    x64 = images.astype(np.float64)
    w64 = probe_w.astype(np.float64)
    lam = float(cfg.ridge_lambda)
    x_mean = x64.mean(axis=0)
    w_mean = w64.mean(axis=0)
    xc = x64 - x_mean
    wc = w64 - w_mean
    gram_c = xc.T @ xc + lam * np.eye(cfg.image_dim)
    enc_coef = np.linalg.solve(gram_c, xc.T @ wc)          # [image_dim, ld]
    enc_weight = np.ascontiguousarray(enc_coef.T, dtype=np.float32)
    enc_bias = (w_mean - enc_coef.T @ x_mean).astype(np.float32)

    id_cols = slice(id_start, id_start + cfg.id_dim)
    gram = x64.T @ x64 + lam * np.eye(cfg.image_dim)
    id_coef = np.linalg.solve(gram, x64.T @ w64[:, id_cols])  # [image_dim, id_dim]
    id_map = np.ascontiguousarray(id_coef.T, dtype=np.float32)

    world = ToyWorld(
        layers=cfg.layers, channels=cfg.channels, image_dim=cfg.image_dim,
        id_dim=cfg.id_dim, alpha=cfg.alpha, ridge_lambda=cfg.ridge_lambda,
        seed=cfg.seed, id_start=id_start, id_len=id_len,
        lin_weight=lin_weight, tanh_weight=tanh_weight,
        enc_weight=enc_weight, enc_bias=enc_bias, id_map=id_map,
        fidelity_recon=0.0, fidelity_id=0.0,
    )

    recon_errs = np.empty(cfg.probe_size, dtype=np.float64)
    id_coss = np.empty(cfg.probe_size, dtype=np.float64)
    k = backend.kernels
    for i in range(cfg.probe_size):
        x = images[i]
        x_rt = generate(world, encode(world, x))
        num = math.sqrt(k.sumsq(k.ew_sub(x_rt, x)))
        den = math.sqrt(k.sumsq(x))
        recon_errs[i] = num / den
        true_id = probe_w[i].reshape(-1)[id_cols]
        id_coss[i] = cosine_similarity(embed_identity_raw(world, x), true_id)
    fidelity_recon = float(recon_errs.mean())
    fidelity_id = float(id_coss.mean())
    if fidelity_recon > FIDELITY_GATE:
        raise WorldFitError(
            f"world reconstruction fidelity {fidelity_recon:.4f} exceeds "
            f"{FIDELITY_GATE}; reduce the tanh mixing weight (alpha) or enlarge "
            f"the probe"
        )

    return dataclasses.replace(
        world, fidelity_recon=fidelity_recon, fidelity_id=fidelity_id
    )


def save_world(world, dirpath):
    """Write the five parameter tensors plus world.cfg into a directory."""
    os.makedirs(dirpath, exist_ok=True)
    for fname, attr in _WORLD_FILES.items():
        write_tensor(os.path.join(dirpath, fname), getattr(world, attr))
    write_kv(os.path.join(dirpath, "world.cfg"), {
        "version": 1,
        "L": world.layers,
        "D": world.channels,
        "d_x": world.image_dim,
        "d_id": world.id_dim,
        "alpha": float(world.alpha),
        "ridge_lambda": float(world.ridge_lambda),
        "seed": world.seed,
        "id_block_start": world.id_start,
        "id_block_len": world.id_len,
        "fidelity_recon": float(world.fidelity_recon),
        "fidelity_id": float(world.fidelity_id),
    })


def load_world(dirpath):
    """Read a directory written by save_world, validating shapes and keys."""
    cfg_path = os.path.join(dirpath, "world.cfg")
    if not os.path.isfile(cfg_path):
        raise FormatError(f"{dirpath}: world.cfg not found")
    raw = require_keys(read_kv(cfg_path), _CFG_KEYS, cfg_path)
    try:
        version = int(raw["version"])
        layers = int(raw["L"])
        channels = int(raw["D"])
        image_dim = int(raw["d_x"])
        id_dim = int(raw["d_id"])
        alpha = float(raw["alpha"])
        ridge_lambda = float(raw["ridge_lambda"])
        seed = int(raw["seed"])
        id_start = int(raw["id_block_start"])
        id_len = int(raw["id_block_len"])
        fidelity_recon = float(raw["fidelity_recon"])
        fidelity_id = float(raw["fidelity_id"])
    except ValueError as exc:
        raise FormatError(f"{cfg_path}: {exc}") from None
    if version != 1:
        raise FormatError(f"{cfg_path}: unsupported version {version}")

    tensors = {}
    for fname, attr in _WORLD_FILES.items():
        tensors[attr] = read_tensor(os.path.join(dirpath, fname))
    ld = layers * channels
    expected = {
        "lin_weight": (image_dim, ld),
        "tanh_weight": (image_dim, ld),
        "enc_weight": (ld, image_dim),
        "enc_bias": (ld,),
        "id_map": (id_dim, image_dim),
    }
    for attr, shape in expected.items():
        if tensors[attr].shape != shape:
            raise FormatError(
                f"{dirpath}: {attr} has shape {tensors[attr].shape}, expected {shape}"
            )
    return ToyWorld(
        layers=layers, channels=channels, image_dim=image_dim, id_dim=id_dim,
        alpha=alpha, ridge_lambda=ridge_lambda, seed=seed,
        id_start=id_start, id_len=id_len,
        fidelity_recon=fidelity_recon, fidelity_id=fidelity_id,
        **tensors,
    )


def world_fingerprint(world):
    """Short stable hash of everything that defines the world's behavior."""
    h = hashlib.sha256()
    desc = (
        f"{world.layers},{world.channels},{world.image_dim},{world.id_dim},"
        f"{world.alpha!r},{world.ridge_lambda!r},{world.seed},"
        f"{world.id_start},{world.id_len}"
    )
    h.update(desc.encode("ascii"))
    for attr in ("lin_weight", "tanh_weight", "enc_weight", "enc_bias", "id_map"):
        h.update(getattr(world, attr).tobytes())
    return h.hexdigest()[:16]
