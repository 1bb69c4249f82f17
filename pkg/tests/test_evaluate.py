import numpy as np
import pytest

import scapegoat.evaluate as evaluate
from scapegoat.errors import ContractError, DegenerateVectorError, EmptyReportError
from scapegoat.evaluate import (
    CSV_HEADER,
    SweepReport,
    SweepRow,
    emit_report_csv,
    emit_report_markdown,
    epsilon_sweep,
    reference_report,
)
from scapegoat.world import generate, rng_stream, sample_latent, world_fingerprint

FAST = dict(eps_list=(0.0, 0.03), n_samples=4, n_targets=2, seed=5, iters=5)


class TestEpsilonSweep:
    def test_row_grid(self, small_world):
        report = epsilon_sweep(small_world, **FAST)
        assert [r.eps for r in report.rows] == [0.0, 0.03]
        assert all(r.n == 4 and r.excluded == 0 for r in report.rows)
        assert report.n_samples == 4
        assert report.world_fingerprint == world_fingerprint(small_world)

    def test_zero_budget_row(self, small_world):
        report = epsilon_sweep(small_world, **FAST)
        zero = report.rows[0]
        assert zero.edit_mean is None and zero.edit_std is None
        assert zero.deepfake_mean is not None
        # zero budget leaves the original untouched, so the swap of the
        # original keeps its identity almost perfectly
        assert zero.deepfake_mean > 0.9
        assert report.plain_edit_mean is not None
        assert report.plain_edit_std >= 0.0

    def test_edit_row_populated(self, small_world):
        report = epsilon_sweep(small_world, **FAST)
        row = report.rows[1]
        assert -1.0 <= row.edit_mean <= 1.0
        assert row.edit_std >= 0.0
        assert -1.0 <= row.deepfake_mean <= 1.0

    def test_deterministic_rerun(self, small_world):
        a = epsilon_sweep(small_world, **FAST)
        b = epsilon_sweep(small_world, **FAST)
        assert emit_report_csv(a) == emit_report_csv(b)
        assert emit_report_markdown(a) == emit_report_markdown(b)

    def test_thread_count_invisible(self, small_world):
        a = epsilon_sweep(small_world, threads=1, **FAST)
        b = epsilon_sweep(small_world, threads=4, **FAST)
        assert emit_report_csv(a) == emit_report_csv(b)
        assert emit_report_markdown(a) == emit_report_markdown(b)

    def test_seed_changes_rows(self, small_world):
        a = epsilon_sweep(small_world, eps_list=(0.03,), n_samples=3,
                          n_targets=2, seed=5, iters=5)
        b = epsilon_sweep(small_world, eps_list=(0.03,), n_samples=3,
                          n_targets=2, seed=6, iters=5)
        assert a.rows[0].deepfake_mean != b.rows[0].deepfake_mean

    @pytest.mark.parametrize("kw", [
        dict(eps_list=()),
        dict(eps_list=(-0.01,)),
        dict(n_samples=0),
        dict(n_targets=0),
        dict(threads=0),
        dict(seed=-1),
    ])
    def test_rejects(self, small_world, kw):
        args = dict(eps_list=(0.01,), n_samples=2, n_targets=1, seed=0, iters=2)
        args.update(kw)
        with pytest.raises(ContractError):
            epsilon_sweep(small_world, **args)


class TestExclusion:
    def _poisoned(self, world, index, seed):
        # the image whose embedding will be made to fail: the origin drawn
        # for this sample index
        rng = rng_stream(seed, index)
        return generate(world, sample_latent(world, rng))

    def test_one_sample_excluded_everywhere(self, small_world, monkeypatch):
        bad = self._poisoned(small_world, 1, FAST["seed"])
        real = evaluate.embed_identity

        def patched(world, image):
            if np.array_equal(image, bad):
                raise DegenerateVectorError("poisoned sample")
            return real(world, image)

        monkeypatch.setattr(evaluate, "embed_identity", patched)
        report = epsilon_sweep(small_world, **FAST)
        assert all(r.n == 3 for r in report.rows)
        assert all(r.excluded == 1 for r in report.rows)

    def test_all_excluded_raises(self, small_world, monkeypatch):
        def patched(world, image):
            raise DegenerateVectorError("poisoned sample")

        monkeypatch.setattr(evaluate, "embed_identity", patched)
        with pytest.raises(EmptyReportError):
            epsilon_sweep(small_world, eps_list=(0.01,), n_samples=2,
                          n_targets=1, seed=0, iters=2)


def _fixed_report():
    rows = [
        SweepRow(eps=0.0, n=10, edit_mean=None, edit_std=None,
                 deepfake_mean=0.9876, deepfake_std=0.0123, excluded=2),
        SweepRow(eps=0.05, n=10, edit_mean=-0.25, edit_std=0.5,
                 deepfake_mean=-0.1005, deepfake_std=0.25, excluded=2),
    ]
    return SweepReport(rows=rows, n_samples=12, n_targets=3, mode="per-vector",
                       step=0.01, iters=100, seed=7,
                       world_fingerprint="0123456789abcdef",
                       plain_edit_mean=0.1234, plain_edit_std=0.2)


class TestCsvFormat:
    def test_exact_layout(self):
        text = emit_report_csv(_fixed_report())
        lines = text.splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[1] == "0.000,10,,,0.988,0.012,2"
        assert lines[2] == "0.050,10,-0.250,0.500,-0.101,0.250,2"
        assert text.endswith("\n")

    def test_header_constant(self):
        assert CSV_HEADER == "eps,n,edit_mean,edit_std,deepfake_mean,deepfake_std,excluded"

    def test_sweep_csv_parses(self, small_world):
        text = emit_report_csv(epsilon_sweep(small_world, **FAST))
        lines = text.splitlines()
        assert len(lines) == 3
        cells = lines[1].split(",")
        assert cells[0] == "0.000"
        assert cells[2] == "" and cells[3] == ""
        float(cells[4]), float(cells[5])


class TestMarkdownFormat:
    def test_table_and_footnotes(self):
        md = emit_report_markdown(_fixed_report())
        lines = md.splitlines()
        assert lines[0] == "| eps | edit similarity | deepfake similarity |"
        assert lines[2] == "| 0.000 | - | 0.988 (±0.012) |"
        assert lines[3] == "| 0.050 | -0.250 (±0.500) | -0.101 (±0.250) |"
        assert "10 samples per row (2 excluded)" in md
        assert "world 0123456789abcdef" in md
        assert "seed 7" in md
        assert "eps=0.000 edit cell is empty" in md
        assert "scores 0.123 (±0.200)" in md

    def test_no_plain_reference_without_value(self):
        md = emit_report_markdown(reference_report())
        assert "For reference" not in md


class TestReferenceReport:
    def test_grid_values(self):
        text = emit_report_csv(reference_report())
        lines = text.splitlines()
        assert lines[1] == "0.000,3000,,,0.855,0.116,0"
        assert lines[2] == "0.010,3000,0.569,0.147,0.484,0.154,0"
        assert lines[3] == "0.030,3000,0.490,0.163,0.342,0.141,0"
        assert lines[4] == "0.050,3000,0.254,0.132,0.203,0.130,0"

    def test_monotone_decay(self):
        report = reference_report()
        deep = [r.deepfake_mean for r in report.rows]
        assert all(a > b for a, b in zip(deep, deep[1:]))
        edit = [r.edit_mean for r in report.rows if r.edit_mean is not None]
        assert all(a > b for a, b in zip(edit, edit[1:]))
