"""Epsilon sweeps: how identity similarity falls as the edit budget grows.

For every sample (an original identity, a fresh set of edit targets and a
swap partner, all drawn from a per-sample RNG stream) and every budget, the
sweep measures cosine similarity between identity embeddings of the
original and (a) the optimized scapegoat, (b) the deepfake built from it.
The zero-budget row scores the unedited original: its edit cell is empty
and its deepfake column is the swap of the original itself.

Aggregation is keyed by sample index, so results are byte-identical for any
thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from io import StringIO

import numpy as np

from .errors import ContractError, DegenerateVectorError, EmptyReportError
from .optimize import PgdConfig, edit_vector, optimize_scapegoat
from .stats import similarity_stats
from .tensor import cosine_similarity
from .world import (
    compose_latent,
    deepfake,
    embed_identity,
    generate,
    rng_stream,
    sample_latent,
    world_fingerprint,
)

DEFAULT_EPS_LIST = (0.0, 0.01, 0.03, 0.05)
DEFAULT_SAMPLES = 200
DEFAULT_TARGETS = 3

# Published results of the full-scale experiments this toy world
# miniaturizes (3000 CelebA-HQ test images, StyleGAN editing, SimSwap):
# (eps, edit mean, edit std, deepfake mean, deepfake std).  Kept for
# orientation and for rendering reference tables; the toy world reproduces
# the qualitative trend, not these magnitudes.
FULL_SCALE_REFERENCE = (
    (0.00, None, None, 0.855, 0.116),
    (0.01, 0.569, 0.147, 0.484, 0.154),
    (0.03, 0.490, 0.163, 0.342, 0.141),
    (0.05, 0.254, 0.132, 0.203, 0.130),
)
FULL_SCALE_SAMPLES = 3000

CSV_HEADER = "eps,n,edit_mean,edit_std,deepfake_mean,deepfake_std,excluded"


@dataclass(frozen=True)
class SweepRow:
    """Aggregates for one budget; edit fields are None on the eps=0 row."""

    eps: float
    n: int
    edit_mean: float
    edit_std: float
    deepfake_mean: float
    deepfake_std: float
    excluded: int


@dataclass(frozen=True)
class SweepReport:
    """All rows of a sweep plus enough provenance to reproduce it.

    ``plain_edit_mean``/``plain_edit_std`` score the zero-budget composition
    of the raw edit vectors (no optimization); they are auxiliary context
    for the eps=0 row, whose edit cell is empty by construction.
    """

    rows: list
    n_samples: int
    n_targets: int
    mode: str
    step: float
    iters: int
    seed: int
    world_fingerprint: str
    plain_edit_mean: float = None
    plain_edit_std: float = None


def _sweep_sample(world, eps_list, n_targets, seed, step, iters, mode, index):
    rng = rng_stream(seed, index)
    origin = sample_latent(world, rng)
    targets = [sample_latent(world, rng) for _ in range(n_targets)]
    swap = sample_latent(world, rng)
    x_org = generate(world, origin)
    x_swap = generate(world, swap)
    edit_sim = {}
    deep_sim = {}
    plain = None
    try:
        e_org = embed_identity(world, x_org)
        directions = [edit_vector(origin, t) for t in targets]
        x_plain = generate(world, compose_latent(world, origin, directions))
        plain = cosine_similarity(e_org, embed_identity(world, x_plain))
        for eps in eps_list:
            if eps == 0:
                fake = deepfake(world, x_org, x_swap)
                edit_sim[eps] = None
            else:
                cfg = PgdConfig(eps=eps, step=step, iters=iters, mode=mode)
                res = optimize_scapegoat(world, origin, targets, cfg)
                fake = deepfake(world, res.scapegoat, x_swap)
                edit_sim[eps] = cosine_similarity(e_org, embed_identity(world, res.scapegoat))
            deep_sim[eps] = cosine_similarity(e_org, embed_identity(world, fake))
    except DegenerateVectorError:
        return {"excluded": True, "edit": {}, "deep": {}, "plain": None}
    return {"excluded": False, "edit": edit_sim, "deep": deep_sim, "plain": plain}


def epsilon_sweep(world, eps_list=DEFAULT_EPS_LIST, n_samples=DEFAULT_SAMPLES,
                  n_targets=DEFAULT_TARGETS, seed=0, step=0.01, iters=100,
                  mode="per-vector", threads=1):
    """Run the full budget grid over fresh samples; see module docstring.

    Samples that raise DegenerateVectorError anywhere are excluded from
    every row (and counted in the ``excluded`` column), keeping row
    populations aligned.  Raises EmptyReportError if nothing survives.
    """
    eps_list = list(eps_list)
    if not eps_list:
        raise ContractError("epsilon_sweep: eps_list is empty")
    for e in eps_list:
        PgdConfig(eps=e, step=step, iters=iters, mode=mode).validate()
    if n_samples < 1:
        raise ContractError(f"epsilon_sweep: n_samples must be >= 1, got {n_samples}")
    if n_targets < 1:
        raise ContractError(f"epsilon_sweep: n_targets must be >= 1, got {n_targets}")
    if threads < 1:
        raise ContractError(f"epsilon_sweep: threads must be >= 1, got {threads}")
    if seed < 0:
        raise ContractError(f"epsilon_sweep: seed must be >= 0, got {seed}")

    def work(index):
        return _sweep_sample(world, eps_list, n_targets, seed, step, iters, mode, index)

    if threads == 1:
        results = [work(i) for i in range(n_samples)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(n_samples)))

    included = [r for r in results if not r["excluded"]]
    excluded = n_samples - len(included)
    if not included:
        raise EmptyReportError(f"all {n_samples} samples were excluded")

    rows = []
    for eps in eps_list:
        deep_vals = [r["deep"][eps] for r in included]
        deep_mean, deep_std = similarity_stats(deep_vals)
        edit_vals = [r["edit"][eps] for r in included if r["edit"][eps] is not None]
        if edit_vals:
            edit_mean, edit_std = similarity_stats(edit_vals)
        else:
            edit_mean = edit_std = None
        rows.append(SweepRow(
            eps=float(eps), n=len(included), edit_mean=edit_mean, edit_std=edit_std,
            deepfake_mean=deep_mean, deepfake_std=deep_std, excluded=excluded,
        ))

    plain_vals = [r["plain"] for r in included if r["plain"] is not None]
    plain_mean, plain_std = similarity_stats(plain_vals) if plain_vals else (None, None)
    return SweepReport(
        rows=rows, n_samples=n_samples, n_targets=n_targets, mode=mode,
        step=step, iters=iters, seed=seed,
        world_fingerprint=world_fingerprint(world),
        plain_edit_mean=plain_mean, plain_edit_std=plain_std,
    )


def _fmt(v):
    return "" if v is None else f"{v:.3f}"


def emit_report_csv(report):
    """Three-decimal CSV of the sweep grid; empty cells where no value exists."""
    out = StringIO()
    out.write(CSV_HEADER + "\n")
    for r in report.rows:
        out.write(
            f"{r.eps:.3f},{r.n},{_fmt(r.edit_mean)},{_fmt(r.edit_std)},"
            f"{_fmt(r.deepfake_mean)},{_fmt(r.deepfake_std)},{r.excluded}\n"
        )
    return out.getvalue()


def _cell(mean, std):
    if mean is None:
        return "-"
    return f"{mean:.3f} (±{std:.3f})"


def emit_report_markdown(report):
    """Markdown mirror of the grid with explanatory footnotes."""
    out = StringIO()
    out.write("| eps | edit similarity | deepfake similarity |\n")
    out.write("|----:|----------------:|--------------------:|\n")
    for r in report.rows:
        out.write(
            f"| {r.eps:.3f} | {_cell(r.edit_mean, r.edit_std)} | "
            f"{_cell(r.deepfake_mean, r.deepfake_std)} |\n"
        )
    out.write("\n")
    excluded = report.rows[0].excluded if report.rows else 0
    included = report.rows[0].n if report.rows else 0
    out.write(
        "Cells are mean (±population std) cosine similarity between identity\n"
        "embeddings of the original image and the candidate; higher means the\n"
        "identity survives.  The edit column scores the composed scapegoat,\n"
        "the deepfake column scores the face swap built from it.\n\n"
    )
    out.write(
        f"{included} samples per row ({excluded} excluded); {report.n_targets}\n"
        f"targets, {report.mode} mode, step {report.step:g}, {report.iters}\n"
        f"iterations, seed {report.seed}, world {report.world_fingerprint}.\n"
    )
    out.write(
        "\nThe eps=0.000 edit cell is empty: with a zero budget nothing is\n"
        "edited and the deepfake column scores the swap of the original\n"
        "itself.\n"
    )
    if report.plain_edit_mean is not None:
        out.write(
            f"\nFor reference, composing the raw (unoptimized) edit vectors\n"
            f"scores {report.plain_edit_mean:.3f} (±{report.plain_edit_std:.3f}).\n"
        )
    return out.getvalue()


def reference_report():
    """The published full-scale grid as a SweepReport (for rendering only)."""
    rows = [
        SweepRow(eps=e, n=FULL_SCALE_SAMPLES, edit_mean=em, edit_std=es,
                 deepfake_mean=dm, deepfake_std=ds, excluded=0)
        for e, em, es, dm, ds in FULL_SCALE_REFERENCE
    ]
    return SweepReport(
        rows=rows, n_samples=FULL_SCALE_SAMPLES, n_targets=3, mode="per-vector",
        step=0.01, iters=100, seed=0, world_fingerprint="full-scale-reference",
    )
