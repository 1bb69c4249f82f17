"""Scapegoat generation: identity-hiding latent edits under an L-infinity
budget, with a pixel-space deepfake-destruction baseline, evaluated on
self-contained differentiable toy face models."""

from .autodiff import Graph
from .errors import (
    ContractError,
    DegenerateTestError,
    DegenerateVectorError,
    EmptyReportError,
    FormatError,
    NonFiniteError,
    OptimizationError,
    ScapegoatError,
    ShapeError,
    UsageError,
    WorldFitError,
)
from .evaluate import (
    SweepReport,
    SweepRow,
    emit_report_csv,
    emit_report_markdown,
    epsilon_sweep,
)
from .optimize import (
    DestructionResult,
    PgdConfig,
    PgdResult,
    ScapegoatResult,
    brute_force_box_oracle,
    destruction_baseline,
    edit_vector,
    identity_loss,
    optimize_scapegoat,
    pgd_sign_ascent,
)
from .stats import (
    RatingSet,
    WilcoxonResult,
    load_ratings,
    pair_conditions,
    similarity_stats,
    wilcoxon_signed_rank,
)
from .tensor import (
    box_bounds,
    clamp_box,
    cosine_similarity,
    finite_diff_gradient,
    read_tensor,
    sign_map,
    write_tensor,
)
from .world import (
    LatentCode,
    ToyWorld,
    WorldConfig,
    build_world,
    compose_latent,
    deepfake,
    embed_identity,
    encode,
    generate,
    load_world,
    refine_latent,
    rng_stream,
    sample_latent,
    save_world,
    world_fingerprint,
)

__version__ = "0.1.0"
