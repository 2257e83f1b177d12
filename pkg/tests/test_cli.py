import json

import numpy as np
import pytest

from simisac import ScenarioConfig
from simisac.cli import EXIT_OK, EXIT_TOLERANCE, EXIT_VALIDATION, main


@pytest.fixture()
def config_path(tmp_path):
    cfg = ScenarioConfig(
        m_x=3,
        m_z=3,
        num_layers=2,
        num_users=2,
        gamma_dbi=2.0,
        n_init=2,
        presolve_iters=30,
        shaping_iters=30,
        max_iters=40,
        rng_seed=9,
    )
    path = tmp_path / "scenario.json"
    cfg.save(path)
    return path


class TestRun:
    def test_writes_trace_and_state(self, config_path, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["run", "--config", str(config_path), "--out-dir", str(out)])
        assert code == EXIT_OK
        assert (out / "trace.csv").exists()
        payload = json.loads((out / "state.json").read_text())
        assert set(payload) == {"omega", "p", "psi", "alpha"}
        assert "converged=" in capsys.readouterr().out

    def test_seed_flag_overrides_config(self, config_path, tmp_path):
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        main(["run", "--config", str(config_path), "--out-dir", str(a)])
        main(["run", "--config", str(config_path), "--out-dir", str(b), "--seed", "9"])
        main(["run", "--config", str(config_path), "--out-dir", str(c), "--seed", "10"])
        trace_a = (a / "trace.csv").read_bytes()
        assert trace_a == (b / "trace.csv").read_bytes()
        assert trace_a != (c / "trace.csv").read_bytes()

    def test_comm_only_disables_penalty(self, config_path, tmp_path):
        out = tmp_path / "comm"
        code = main(
            ["run", "--config", str(config_path), "--out-dir", str(out), "--comm-only"]
        )
        assert code == EXIT_OK
        rows = (out / "trace.csv").read_text().splitlines()[4:]
        f_col = [float(r.split(",")[1]) for r in rows]
        r_col = [float(r.split(",")[2]) for r in rows]
        assert f_col == r_col  # no penalty contribution

    def test_missing_config_is_validation_error(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "nope.json")])
        assert code == EXIT_VALIDATION
        assert "error:" in capsys.readouterr().err


class TestSweep:
    def test_layer_sweep_outputs(self, config_path, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = main(
            [
                "sweep",
                "--config",
                str(config_path),
                "--out-dir",
                str(out),
                "--variable",
                "layers",
                "--values",
                "1,2",
                "--n-ch",
                "2",
            ]
        )
        assert code == EXIT_OK
        assert (out / "sweep.csv").exists()
        assert (out / "sweep_realizations.csv").exists()
        stdout = capsys.readouterr().out
        assert "num_layers=1" in stdout and "num_layers=2" in stdout

    def test_reruns_byte_identical(self, config_path, tmp_path):
        for name in ("s1", "s2"):
            main(
                [
                    "sweep",
                    "--config",
                    str(config_path),
                    "--out-dir",
                    str(tmp_path / name),
                    "--variable",
                    "gamma",
                    "--values",
                    "2,4",
                    "--n-ch",
                    "2",
                ]
            )
        assert (tmp_path / "s1" / "sweep.csv").read_bytes() == (
            tmp_path / "s2" / "sweep.csv"
        ).read_bytes()
        assert (tmp_path / "s1" / "sweep_realizations.csv").read_bytes() == (
            tmp_path / "s2" / "sweep_realizations.csv"
        ).read_bytes()


class TestBeampattern:
    def test_grid_and_profiles_from_state(self, config_path, tmp_path):
        run_dir = tmp_path / "run"
        main(["run", "--config", str(config_path), "--out-dir", str(run_dir)])
        beam_dir = tmp_path / "beam"
        code = main(
            [
                "beampattern",
                "--config",
                str(config_path),
                "--state",
                str(run_dir / "state.json"),
                "--out-dir",
                str(beam_dir),
            ]
        )
        assert code == EXIT_OK
        assert (beam_dir / "beampattern_isac.csv").exists()
        assert (beam_dir / "profile_horizontal_isac.csv").exists()
        assert (beam_dir / "profile_vertical_isac.csv").exists()

    def test_comm_only_baseline_emitted(self, config_path, tmp_path):
        run_dir = tmp_path / "run"
        main(["run", "--config", str(config_path), "--out-dir", str(run_dir)])
        beam_dir = tmp_path / "beam"
        code = main(
            [
                "beampattern",
                "--config",
                str(config_path),
                "--state",
                str(run_dir / "state.json"),
                "--out-dir",
                str(beam_dir),
                "--comm-only",
            ]
        )
        assert code == EXIT_OK
        assert (beam_dir / "beampattern_comm.csv").exists()
        assert (beam_dir / "state_comm.json").exists()

    def test_state_config_mismatch_rejected(self, config_path, tmp_path):
        run_dir = tmp_path / "run"
        main(["run", "--config", str(config_path), "--out-dir", str(run_dir)])
        other = ScenarioConfig(m_x=2, m_z=2, num_layers=3, num_users=2)
        other_path = tmp_path / "other.json"
        other.save(other_path)
        code = main(
            [
                "beampattern",
                "--config",
                str(other_path),
                "--state",
                str(run_dir / "state.json"),
                "--out-dir",
                str(tmp_path / "beam"),
            ]
        )
        assert code == EXIT_VALIDATION


class TestGradCheckCommand:
    def test_passes_at_default_tolerance(self, capsys):
        code = main(["grad-check", "--m", "4", "--q", "2", "--k", "2", "--trials", "2"])
        assert code == EXIT_OK
        assert "max relative gradient error" in capsys.readouterr().out

    def test_impossible_tolerance_exits_three(self):
        code = main(
            [
                "grad-check",
                "--m",
                "4",
                "--q",
                "2",
                "--k",
                "2",
                "--trials",
                "1",
                "--tol",
                "0",
            ]
        )
        assert code == EXIT_TOLERANCE

    def test_bad_atom_count_is_validation_error(self):
        assert main(["grad-check", "--m", "5"]) == EXIT_VALIDATION


class TestDumps:
    def test_propagation_matrices(self, config_path, tmp_path):
        out = tmp_path / "w"
        code = main(
            ["dump-propagation", "--config", str(config_path), "--out-dir", str(out)]
        )
        assert code == EXIT_OK
        win = (out / "w_in.csv").read_text().splitlines()
        assert win[3].split(",") == ["re_0", "im_0", "re_1", "im_1"]
        assert len(win) == 4 + 9  # one row per atom
        assert (out / "w_layer2.csv").exists()

    def test_channel_dump_deterministic(self, config_path, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            code = main(
                ["dump-channel", "--config", str(config_path), "--out-dir", str(out)]
            )
            assert code == EXIT_OK
        assert (a / "channel.csv").read_bytes() == (b / "channel.csv").read_bytes()

    def test_channel_dump_matches_seeded_draw(self, config_path, tmp_path):
        from simisac.channel import sample_channels
        from simisac.experiments import prepare, realization_streams

        out = tmp_path / "h"
        main(["dump-channel", "--config", str(config_path), "--out-dir", str(out)])
        cfg = ScenarioConfig.load(config_path)
        prep = prepare(cfg)
        rng, _ = realization_streams(cfg.rng_seed, 0)
        chan = sample_channels(cfg, prep.r_q_sqrt, rng)
        rows = (out / "channel.csv").read_text().splitlines()[4:]
        got = np.array([[float(v) for v in row.split(",")] for row in rows])
        want = got[:, 0::2] + 1j * got[:, 1::2]
        assert np.allclose(want, chan.h_rows, rtol=0, atol=1e-15)


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "simisac" in capsys.readouterr().out
