"""Monte-Carlo harness: reproducibility, accounting, CSV layer, CLI."""

import json
import subprocess
import sys

import numpy as np
import pytest

from mccdma.solver import SolverOptions

from mccdma.harness import (
    CSV_COLUMNS,
    UNCERTAINTY_COLUMNS,
    ExperimentConfig,
    collect_rows,
    load_rows_csv,
    run_operating_point,
    run_uncertainty_experiment,
    sigma_for_tau,
    write_rows_csv,
)

TINY = dict(n_users=4, n_subcarriers=8, nonzeros_per_user=4, slots=20,
            signature_realizations=4, noise_draws_per_slot=10)


def _config(**over):
    merged = {**TINY, **over}
    return ExperimentConfig(**merged)


class TestConfigValidation:
    def test_bad_modulation(self):
        with pytest.raises(ValueError, match="modulation"):
            _config(modulation=8)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="unknown schemes"):
            _config(schemes=("proposed", "MMSE"))

    def test_slots_not_multiple_of_realizations(self):
        with pytest.raises(ValueError, match="multiple"):
            _config(slots=21, signature_realizations=4)

    def test_negative_noise_draws(self):
        with pytest.raises(ValueError, match="nonnegative"):
            _config(noise_draws_per_slot=-1)

    def test_negative_sigma_e(self):
        with pytest.raises(ValueError):
            _config(sigma_e=-0.1)

    def test_noise_sigma_property(self):
        assert _config(noise_density=1.0).noise_sigma == pytest.approx(
            1.0 / np.sqrt(2.0))
        assert _config(noise_density=2.0).noise_sigma == pytest.approx(1.0)

    def test_slots_per_signature(self):
        assert _config().slots_per_signature == 5


class TestReproducibility:
    def test_identical_runs_are_bit_identical(self):
        cfg = _config(schemes=("proposed", "ZF", "RZF"))
        r1 = run_operating_point(cfg)
        r2 = run_operating_point(cfg)
        assert r1.rows == r2.rows
        assert r1.channel_redraws == r2.channel_redraws

    def test_seed_changes_results(self):
        base = run_operating_point(_config()).rows[0]
        moved = run_operating_point(_config(master_seed=777)).rows[0]
        assert base.power_linear != moved.power_linear

    def test_paired_slots_share_data_across_scheme_sets(self):
        # adding a scheme must not disturb the shared per-slot draws
        both = run_operating_point(_config(schemes=("proposed", "ZF")))
        alone = run_operating_point(_config(schemes=("ZF",)))
        zf_both = [r for r in both.rows if r.scheme == "ZF"][0]
        zf_alone = alone.rows[0]
        assert zf_both.power_linear == zf_alone.power_linear
        assert zf_both.sep == zf_alone.sep


@pytest.fixture(scope="module")
def logged():
    # tight solve so the per-slot dominance check is not tolerance noise
    cfg = _config(schemes=("proposed", "ZF"),
                  solver=SolverOptions(rel_tolerance=1e-8,
                                       max_iterations=50000))
    return cfg, run_operating_point(cfg, keep_slots=True)


class TestAccounting:
    def test_slot_log_covers_every_slot(self, logged):
        cfg, res = logged
        assert [e["slot"] for e in res.slot_log] == list(range(cfg.slots))

    def test_signature_index_schedule(self, logged):
        cfg, res = logged
        for entry in res.slot_log:
            assert entry["signature_index"] == \
                entry["slot"] // cfg.slots_per_signature

    def test_power_recomputes_from_slot_log(self, logged):
        cfg, res = logged
        for row in res.rows:
            powers = [float(np.vdot(e["x"][row.scheme], e["x"][row.scheme]).real)
                      for e in res.slot_log]
            assert row.power_linear == pytest.approx(np.mean(powers), rel=1e-12)
            assert row.power_db == pytest.approx(
                10 * np.log10(np.mean(powers)), abs=1e-9)
            assert row.stderr_power == pytest.approx(
                np.std(powers, ddof=1) / np.sqrt(len(powers)), rel=1e-9)

    def test_proposed_never_above_zero_forcing_per_slot(self, logged):
        cfg, res = logged
        for entry in res.slot_log:
            p_prop = float(np.vdot(entry["x"]["proposed"],
                                   entry["x"]["proposed"]).real)
            p_zf = float(np.vdot(entry["x"]["ZF"], entry["x"]["ZF"]).real)
            # primal error scales like sqrt(rel_tolerance) = 1e-4
            assert p_prop <= p_zf * (1 + 1e-3)

    def test_decision_volume(self, logged):
        cfg, res = logged
        want = cfg.slots * cfg.noise_draws_per_slot * cfg.n_users
        for scheme in cfg.schemes:
            assert res.diagnostics[scheme]["decisions"] == want

    def test_row_static_fields(self, logged):
        cfg, res = logged
        for row in res.rows:
            assert (row.K, row.N, row.L, row.M) == (
                cfg.n_users, cfg.n_subcarriers, cfg.nonzeros_per_user,
                cfg.modulation)
            assert row.slots == cfg.slots
            assert row.replica == (row.scheme in ("ZF-THP", "opt-THP"))
            assert row.sigma_e is None and row.tau_db is None


class TestUncertainty:
    def test_sigma_for_tau_inverts_expected_ratio(self):
        # E||dH||^2 = K L sigma_e^2 and E||H||^2 = K, so the mean
        # ratio in dB should land close to the requested tau
        tau = -12.0
        se = sigma_for_tau(tau, 8)
        assert 8 * se**2 == pytest.approx(10 ** (tau / 10.0), rel=1e-12)

    def test_measured_tau_tracks_target(self):
        cfg = _config(slots=40, signature_realizations=4, schemes=("ZF",),
                      noise_draws_per_slot=0)
        res = run_uncertainty_experiment(cfg, [-10.0])[0]
        row = res.rows[0]
        assert row.sigma_e == pytest.approx(sigma_for_tau(-10.0, 4))
        assert abs(row.tau_db - (-10.0)) < 1.5

    def test_zero_sigma_rows_have_no_uncertainty_fields(self):
        res = run_operating_point(_config(schemes=("ZF",)))
        assert res.rows[0].sigma_e is None

    def test_uncertainty_raises_error_rate(self):
        clean = run_operating_point(_config(schemes=("ZF",), pe_target=1e-2))
        noisy = run_uncertainty_experiment(
            _config(schemes=("ZF",), pe_target=1e-2), [-6.0])[0]
        assert noisy.rows[0].sep >= clean.rows[0].sep


class TestCsvLayer:
    def test_roundtrip(self, tmp_path):
        cfg = _config(schemes=("proposed", "ZF"))
        rows = run_operating_point(cfg).rows
        path = tmp_path / "rows.csv"
        write_rows_csv(path, rows, cfg)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        back = load_rows_csv(path)
        assert back == list(rows)
        meta = json.loads((tmp_path / "rows.csv.meta.json").read_text())
        assert meta["config"]["n_users"] == cfg.n_users
        assert len(meta["config_sha256"]) == 64

    def test_uncertainty_roundtrip(self, tmp_path):
        # keep noise draws on: NaN error rates would defeat row equality
        cfg = _config(schemes=("ZF",), noise_draws_per_slot=2)
        rows = collect_rows(run_uncertainty_experiment(cfg, [-12.0, -8.0]))
        path = tmp_path / "u.csv"
        write_rows_csv(path, rows)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(UNCERTAINTY_COLUMNS)
        back = load_rows_csv(path)
        assert back == rows
        assert all(r.sigma_e is not None for r in back)


def _cli(*argv):
    return subprocess.run(
        [sys.executable, "-m", "mccdma.cli", *argv],
        capture_output=True, text=True, timeout=600)


class TestCli:
    def test_power_sweep_writes_schema_csv(self, tmp_path):
        out = tmp_path / "sweep.csv"
        proc = _cli("power-sweep", "--users", "3", "4",
                    "--subcarriers", "8", "--nonzeros", "4",
                    "--slots", "8", "--realizations", "2",
                    "--noise-draws", "5", "--schemes", "proposed", "ZF",
                    "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + 2 * 2

    def test_validate_passes(self):
        proc = _cli("validate")
        assert proc.returncode == 0, proc.stdout + proc.stderr
        assert "FAIL" not in proc.stdout

    def test_solve_one_emits_json(self, tmp_path):
        trip = tmp_path / "qp.txt"
        proc = _cli("solve-one", "--users", "4", "--subcarriers", "8",
                    "--nonzeros", "4", "--slots", "8", "--realizations", "2",
                    "--slot", "3", "--dump-triplets", str(trip))
        assert proc.returncode == 0, proc.stderr
        payload = json.loads(proc.stdout)
        assert payload["converged"] is True
        assert payload["power"] > 0
        assert payload["power_db"] == pytest.approx(
            10 * np.log10(payload["power"]))
        assert trip.exists()

    def test_config_file_with_flag_override(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "n_subcarriers": 8, "nonzeros_per_user": 4, "slots": 8,
            "signature_realizations": 2, "noise_draws_per_slot": 4,
            "schemes": ["ZF"], "pe_target": 1e-2}))
        out = tmp_path / "o.csv"
        proc = _cli("power-sweep", "--users", "3", "--config", str(cfg_path),
                    "--pe", "1e-3", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        row = load_rows_csv(out)[0]
        assert row.pe_target == 1e-3  # flag beats file
        assert row.N == 8  # file beats default

    def test_unknown_scheme_is_rejected(self, tmp_path):
        proc = _cli("power-sweep", "--users", "3", "--schemes", "bogus",
                    "--out", str(tmp_path / "x.csv"))
        assert proc.returncode != 0
