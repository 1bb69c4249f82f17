"""Statistics for similarity sweeps and paired human ratings.

The Wilcoxon signed-rank test here follows the classic recipe: drop zero
differences, rank absolute differences with average ranks for ties, sum the
ranks of positive differences.  For n <= 20 the two-sided p-value is exact,
computed over the full distribution of rank sums (doubled ranks keep
everything in integers); above that a normal approximation with tie
correction and continuity correction takes over.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateTestError, FormatError
from .tensor import validate_finite

EXACT_LIMIT = 20

SCORE_MIN = 1
SCORE_MAX = 7


def similarity_stats(values):
    """Mean and population standard deviation (float64) of a nonempty sequence."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("similarity_stats: empty input")
    validate_finite(arr, "similarity values")
    mean = float(arr.mean())
    std = float(np.sqrt(np.mean((arr - mean) ** 2)))
    return mean, std


def average_ranks(values):
    """Ranks 1..n with ties sharing the average of their positions."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size, dtype=np.float64)
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


@dataclass(frozen=True)
class WilcoxonResult:
    w_plus: float
    n_effective: int
    p_value: float
    method: str  # "exact" or "normal"


def wilcoxon_signed_rank(a, b):
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Returns the positive-rank sum W+, the effective n after dropping zero
    differences, and the two-sided p-value.  Raises DegenerateTestError when
    every difference is zero.
    """
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise ContractError(
            f"wilcoxon: expected two 1-d sequences of equal length, "
            f"got {av.shape} and {bv.shape}"
        )
    if av.size == 0:
        raise ContractError("wilcoxon: empty input")
    validate_finite(av, "wilcoxon sample a")
    validate_finite(bv, "wilcoxon sample b")
    d = av - bv
    nz = d[d != 0]
    n = nz.size
    if n == 0:
        raise DegenerateTestError("wilcoxon: all paired differences are zero")
    ranks = average_ranks(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())

    if n <= EXACT_LIMIT:
        p = _exact_two_sided(ranks, w_plus, n)
        return WilcoxonResult(w_plus, n, p, "exact")
    p = _normal_two_sided(nz, ranks, w_plus, n)
    return WilcoxonResult(w_plus, n, p, "normal")


def _exact_two_sided(ranks, w_plus, n):
    # doubled ranks are integers even with average ranks for ties
    r2 = np.rint(2.0 * ranks).astype(np.int64)
    if not np.array_equal(r2.astype(np.float64), 2.0 * ranks):
        raise ContractError("wilcoxon: ranks are not half-integers")  # unreachable
    total = int(r2.sum())
    dp = np.zeros(total + 1, dtype=np.int64)
    dp[0] = 1
    for r in r2:
        r = int(r)
        dp[r:] = dp[r:] + dp[:total + 1 - r]
    w2 = int(np.rint(2.0 * w_plus))
    count_le = int(dp[:w2 + 1].sum())
    count_ge = int(dp[w2:].sum())
    denom = 1 << n
    return min(1.0, 2.0 * min(count_le, count_ge) / denom)


def _normal_two_sided(nz, ranks, w_plus, n):
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(nz), return_counts=True)
    var -= float(((tie_counts ** 3) - tie_counts).sum()) / 48.0
    if var <= 0:
        raise DegenerateTestError("wilcoxon: zero variance under ties")
    diff = w_plus - mu
    if diff == 0:
        return 1.0
    z = (diff - math.copysign(0.5, diff)) / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# paired ratings files
# ---------------------------------------------------------------------------

_RATING_HEADER = ["rater", "item", "condition", "score"]


@dataclass(frozen=True)
class RatingSet:
    """Scores for two conditions aligned on (rater, item) pairs."""

    cond_a: str
    cond_b: str
    keys: list
    a: np.ndarray
    b: np.ndarray


def load_ratings(path):
    """Read a ratings CSV with columns rater,item,condition,score (1..7)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty ratings file")
        if [h.strip() for h in header] != _RATING_HEADER:
            raise FormatError(
                f"{path}: expected header {','.join(_RATING_HEADER)}, "
                f"got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            rater, item, cond, score_s = (f.strip() for f in row)
            if not rater or not item or not cond:
                raise FormatError(f"{path}:{lineno}: empty field")
            try:
                score = int(score_s)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: score {score_s!r} is not an integer") from None
            if not SCORE_MIN <= score <= SCORE_MAX:
                raise FormatError(
                    f"{path}:{lineno}: score {score} outside {SCORE_MIN}..{SCORE_MAX}"
                )
            rows.append((rater, item, cond, score))
    if not rows:
        raise FormatError(f"{path}: no rating rows")
    return rows


def conditions(rows):
    """Sorted unique condition labels present in loaded rating rows."""
    return sorted({cond for _, _, cond, _ in rows})


def pair_conditions(rows, cond_a, cond_b):
    """Align two conditions' scores on (rater, item) keys.

    Every key present for one condition must be present for the other;
    duplicated (rater, item, condition) entries are rejected.
    """
    if cond_a == cond_b:
        raise ContractError(f"pair_conditions: conditions are both {cond_a!r}")
    by_cond = {cond_a: {}, cond_b: {}}
    for rater, item, cond, score in rows:
        if cond not in by_cond:
            continue
        key = (rater, item)
        if key in by_cond[cond]:
            raise FormatError(f"duplicate rating for {rater!r}, {item!r}, {cond!r}")
        by_cond[cond][key] = score
    for name in (cond_a, cond_b):
        if not by_cond[name]:
            raise ContractError(f"pair_conditions: no rows for condition {name!r}")
    keys_a = set(by_cond[cond_a])
    keys_b = set(by_cond[cond_b])
    if keys_a != keys_b:
        odd = sorted(keys_a ^ keys_b)[0]
        raise FormatError(
            f"unpaired rating: rater {odd[0]!r}, item {odd[1]!r} is missing one condition"
        )
    keys = sorted(keys_a)
    a = np.array([by_cond[cond_a][k] for k in keys], dtype=np.int64)
    b = np.array([by_cond[cond_b][k] for k in keys], dtype=np.int64)
    return RatingSet(cond_a, cond_b, keys, a, b)
