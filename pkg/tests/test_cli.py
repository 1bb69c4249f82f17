import numpy as np
import pytest

from scapegoat.cli import main
from scapegoat.kvfile import read_kv
from scapegoat.optimize import edit_vector
from scapegoat.tensor import read_tensor, write_tensor
from scapegoat.world import (
    compose_latent,
    generate,
    load_world,
    rng_stream,
    sample_latent,
    world_fingerprint,
)

SMALL_FLAGS = ["--L", "2", "--D", "8", "--dx", "48", "--did", "4"]


@pytest.fixture(scope="module")
def cli_world(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "world"
    rc = main(["world", "build", "--out", str(out), "--seed", "3"] + SMALL_FLAGS)
    assert rc == 0
    return out


class TestParsing:
    def test_no_command(self, capsys):
        assert main([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 2

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "COMMAND" in capsys.readouterr().out

    def test_world_without_action(self, capsys):
        assert main(["world"]) == 2
        assert "world build" in capsys.readouterr().err

    def test_gen_missing_required(self):
        assert main(["gen"]) == 2

    def test_bad_eps_list(self, cli_world, tmp_path):
        rc = main(["sweep", "--world", str(cli_world), "--out", str(tmp_path / "s"),
                   "--eps-list", "banana"])
        assert rc == 2

    def test_bad_pair_format(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("rater,item,condition,score\nr1,i1,a,3\nr1,i1,b,4\n")
        assert main(["analyze-ratings", "--input", str(p), "--pair", "ab"]) == 2


class TestWorldBuild:
    def test_files_and_stdout(self, cli_world, capsys):
        out = tmp = cli_world.parent / "world2"
        rc = main(["world", "build", "--out", str(tmp), "--seed", "3"] + SMALL_FLAGS)
        assert rc == 0
        text = capsys.readouterr().out
        assert "fidelity_recon=" in text and "fingerprint=" in text
        names = sorted(p.name for p in out.iterdir())
        assert names == ["A.tnsr", "B.tnsr", "enc_b.tnsr", "enc_w.tnsr",
                         "idmap.tnsr", "run.cfg", "world.cfg"]
        world = load_world(out)
        assert world_fingerprint(world) in text

    def test_run_cfg_keys(self, cli_world):
        cfg = read_kv(cli_world / "run.cfg")
        assert set(cfg) == {"command", "seed", "L", "D", "dx", "did", "alpha", "ridge"}
        assert cfg["command"] == "world build"
        assert cfg["seed"] == "3"

    def test_same_seed_same_fingerprint(self, cli_world, tmp_path):
        other = tmp_path / "w"
        assert main(["world", "build", "--out", str(other), "--seed", "3"] + SMALL_FLAGS) == 0
        assert world_fingerprint(load_world(other)) == world_fingerprint(load_world(cli_world))

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfgfile = tmp_path / "build.cfg"
        cfgfile.write_text(
            "seed = 7\nL = 2\nD = 8\ndx = 48\ndid = 4\n", encoding="utf-8")
        out = tmp_path / "w"
        rc = main(["world", "build", "--out", str(out),
                   "--config", str(cfgfile), "--seed", "3"])
        assert rc == 0
        assert read_kv(out / "run.cfg")["seed"] == "3"

    def test_config_unknown_key(self, tmp_path, capsys):
        cfgfile = tmp_path / "build.cfg"
        cfgfile.write_text("probe = 9\n", encoding="utf-8")
        rc = main(["world", "build", "--out", str(tmp_path / "w"),
                   "--config", str(cfgfile)])
        assert rc == 2
        assert "unknown key" in capsys.readouterr().err

    def test_config_bad_value(self, tmp_path, capsys):
        cfgfile = tmp_path / "build.cfg"
        cfgfile.write_text("L = two\n", encoding="utf-8")
        rc = main(["world", "build", "--out", str(tmp_path / "w"),
                   "--config", str(cfgfile)])
        assert rc == 2
        assert "bad value" in capsys.readouterr().err


class TestGen:
    def test_files_and_run_cfg(self, cli_world, tmp_path, capsys):
        out = tmp_path / "gen"
        rc = main(["gen", "--world", str(cli_world), "--out", str(out),
                   "--targets", "2", "--iters", "10", "--seed", "5"])
        assert rc == 0
        assert "achieved_loss=" in capsys.readouterr().out
        names = sorted(p.name for p in out.iterdir())
        assert names == ["result.cfg", "run.cfg", "scapegoat.tnsr", "trace.csv",
                         "u_opt_0.tnsr", "u_opt_1.tnsr"]
        run = read_kv(out / "run.cfg")
        assert set(run) == {"command", "world", "world_fingerprint", "seed",
                            "eps", "step_a", "iters_k", "mode", "n_targets"}
        assert "out" not in run and "threads" not in run
        assert run["seed"] == "5"

    def test_eps_zero_is_plain_composition(self, cli_world, tmp_path):
        out = tmp_path / "gen0"
        rc = main(["gen", "--world", str(cli_world), "--out", str(out),
                   "--targets", "2", "--iters", "5", "--seed", "5",
                   "--eps", "0"])
        assert rc == 0
        world = load_world(cli_world)
        rng = rng_stream(5, 0)
        origin = sample_latent(world, rng)
        targets = [sample_latent(world, rng) for _ in range(2)]
        directions = [edit_vector(origin, t) for t in targets]
        plain = generate(world, compose_latent(world, origin, directions))
        assert np.array_equal(read_tensor(out / "scapegoat.tnsr"), plain)
        for i, d in enumerate(directions):
            assert np.array_equal(read_tensor(out / f"u_opt_{i}.tnsr"), d)
        cfg = read_kv(out / "result.cfg")
        assert float(cfg["eps"]) == 0.0

    def test_verbose_logs_iterations(self, cli_world, tmp_path, capsys):
        out = tmp_path / "genv"
        rc = main(["gen", "--world", str(cli_world), "--out", str(out),
                   "--targets", "1", "--iters", "2", "--seed", "5", "--verbose"])
        assert rc == 0
        text = capsys.readouterr().out
        assert "vector=0 iter=0 loss=" in text
        assert "vector=0 iter=2 loss=" in text

    def test_joint_verbose_tag(self, cli_world, tmp_path, capsys):
        out = tmp_path / "genj"
        rc = main(["gen", "--world", str(cli_world), "--out", str(out),
                   "--targets", "2", "--iters", "2", "--seed", "5",
                   "--mode", "joint", "--verbose"])
        assert rc == 0
        assert "joint iter=0 loss=" in capsys.readouterr().out

    def test_missing_world_dir(self, tmp_path, capsys):
        rc = main(["gen", "--world", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "g")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_targets_leaves_no_output(self, cli_world, tmp_path):
        out = tmp_path / "gbad"
        rc = main(["gen", "--world", str(cli_world), "--out", str(out),
                   "--targets", "0"])
        assert rc == 2
        assert not out.exists()

    def test_negative_seed(self, cli_world, tmp_path):
        rc = main(["gen", "--world", str(cli_world), "--out", str(tmp_path / "g"),
                   "--seed", "-1"])
        assert rc == 2


class TestSeedResolution:
    def test_env_seed_used(self, cli_world, tmp_path, monkeypatch):
        monkeypatch.setenv("SCAPEGOAT_SEED", "9")
        out = tmp_path / "g"
        rc = main(["gen", "--world", str(cli_world), "--out", str(out),
                   "--targets", "1", "--iters", "2"])
        assert rc == 0
        assert read_kv(out / "run.cfg")["seed"] == "9"

    def test_flag_beats_env(self, cli_world, tmp_path, monkeypatch):
        monkeypatch.setenv("SCAPEGOAT_SEED", "9")
        out = tmp_path / "g"
        rc = main(["gen", "--world", str(cli_world), "--out", str(out),
                   "--targets", "1", "--iters", "2", "--seed", "4"])
        assert rc == 0
        assert read_kv(out / "run.cfg")["seed"] == "4"

    def test_bad_env_seed(self, cli_world, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("SCAPEGOAT_SEED", "abc")
        rc = main(["gen", "--world", str(cli_world), "--out", str(tmp_path / "g"),
                   "--targets", "1", "--iters", "2"])
        assert rc == 2
        assert "SCAPEGOAT_SEED" in capsys.readouterr().err

    def test_default_zero(self, cli_world, tmp_path, monkeypatch):
        monkeypatch.delenv("SCAPEGOAT_SEED", raising=False)
        out = tmp_path / "g"
        rc = main(["destroy", "--world", str(cli_world), "--out", str(out),
                   "--iters", "2"])
        assert rc == 0
        assert read_kv(out / "run.cfg")["seed"] == "0"


class TestDestroy:
    def test_files(self, cli_world, tmp_path, capsys):
        out = tmp_path / "d"
        rc = main(["destroy", "--world", str(cli_world), "--out", str(out),
                   "--iters", "5", "--seed", "5"])
        assert rc == 0
        assert "baseline written" in capsys.readouterr().out
        names = sorted(p.name for p in out.iterdir())
        assert names == ["fake.tnsr", "perturbed.tnsr", "result.cfg",
                         "run.cfg", "trace.csv"]
        cfg = read_kv(out / "result.cfg")
        assert cfg["mode"] == "pixel"
        assert cfg["n_targets"] == "0"


class TestSweep:
    ARGS = ["--eps-list", "0,0.03", "--samples", "3", "--targets", "2",
            "--iters", "4", "--seed", "5"]

    def test_files_and_stdout(self, cli_world, tmp_path, capsys):
        out = tmp_path / "s"
        rc = main(["sweep", "--world", str(cli_world), "--out", str(out)] + self.ARGS)
        assert rc == 0
        stdout = capsys.readouterr().out
        assert (out / "sweep.csv").read_text() == stdout
        assert (out / "sweep.md").exists()
        run = read_kv(out / "run.cfg")
        assert set(run) == {"command", "world", "world_fingerprint", "seed",
                            "eps_list", "n_samples", "n_targets",
                            "step_a", "iters_k", "mode"}
        assert "threads" not in run and "out" not in run

    def test_threads_do_not_change_bytes(self, cli_world, tmp_path, capsys):
        out1 = tmp_path / "s1"
        out8 = tmp_path / "s8"
        assert main(["sweep", "--world", str(cli_world), "--out", str(out1)]
                    + self.ARGS) == 0
        assert main(["sweep", "--world", str(cli_world), "--out", str(out8),
                     "--threads", "8"] + self.ARGS) == 0
        capsys.readouterr()
        assert (out1 / "sweep.csv").read_bytes() == (out8 / "sweep.csv").read_bytes()
        assert (out1 / "sweep.md").read_bytes() == (out8 / "sweep.md").read_bytes()
        assert (out1 / "run.cfg").read_bytes() == (out8 / "run.cfg").read_bytes()

    def test_zero_threads(self, cli_world, tmp_path):
        rc = main(["sweep", "--world", str(cli_world), "--out", str(tmp_path / "s"),
                   "--threads", "0"] + self.ARGS)
        assert rc == 2


class TestInvert:
    def test_round_trip(self, cli_world, tmp_path, capsys):
        world = load_world(cli_world)
        x = generate(world, sample_latent(world, rng_stream(8, 0)))
        img = tmp_path / "image.tnsr"
        write_tensor(img, x)
        out = tmp_path / "inv"
        rc = main(["invert", "--world", str(cli_world), "--image", str(img),
                   "--out", str(out), "--refine-steps", "10"])
        assert rc == 0
        assert "recon_error=" in capsys.readouterr().out
        names = sorted(p.name for p in out.iterdir())
        assert names == ["latent.tnsr", "recon.tnsr", "result.cfg", "run.cfg"]
        cfg = read_kv(out / "result.cfg")
        assert float(cfg["recon_error"]) < 0.1
        latent = read_tensor(out / "latent.tnsr")
        assert latent.shape == (world.layers, world.channels)

    def test_missing_image(self, cli_world, tmp_path):
        rc = main(["invert", "--world", str(cli_world),
                   "--image", str(tmp_path / "nope.tnsr"),
                   "--out", str(tmp_path / "inv")])
        assert rc == 1

    def test_bad_lr(self, cli_world, tmp_path):
        world = load_world(cli_world)
        img = tmp_path / "image.tnsr"
        write_tensor(img, generate(world, sample_latent(world, rng_stream(8, 0))))
        rc = main(["invert", "--world", str(cli_world), "--image", str(img),
                   "--out", str(tmp_path / "inv"), "--lr", "0"])
        assert rc == 2


class TestAnalyzeRatings:
    def _csv(self, tmp_path):
        p = tmp_path / "ratings.csv"
        p.write_text(
            "rater,item,condition,score\n"
            "r1,i1,real,2\nr2,i1,real,3\nr3,i1,real,4\n"
            "r1,i1,fake,1\nr2,i1,fake,1\nr3,i1,fake,1\n",
            encoding="utf-8")
        return p

    def test_pinned_output(self, tmp_path, capsys):
        rc = main(["analyze-ratings", "--input", str(self._csv(tmp_path)),
                   "--pair", "real:fake"])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "pair real:fake n=3 dropped=0 method=exact"
        assert lines[1] == "W-plus=6, p=0.25"

    def test_unknown_condition(self, tmp_path, capsys):
        rc = main(["analyze-ratings", "--input", str(self._csv(tmp_path)),
                   "--pair", "real:missing"])
        assert rc == 2
        assert "not in file" in capsys.readouterr().err

    def test_malformed_file_is_runtime_error(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("rater,item,condition,score\nr1,i1,a,11\n", encoding="utf-8")
        rc = main(["analyze-ratings", "--input", str(p), "--pair", "a:b"])
        assert rc == 1

    def test_missing_file(self, tmp_path):
        rc = main(["analyze-ratings", "--input", str(tmp_path / "nope.csv"),
                   "--pair", "a:b"])
        assert rc == 1
