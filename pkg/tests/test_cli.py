import json
import math

import numpy as np
import pytest

from kerrtpa import io
from kerrtpa.cli import cmd_herald, cmd_material, main
from kerrtpa.config import RunConfig

from conftest import FAST

FAST_SET = [f"--set={sec}.{k}={v}" for sec, vals in FAST.items() for k, v in vals.items()]


def kerrtpa(*args):
    return main([str(a) for a in args])


def load(path):
    return json.loads(path.read_text())


class TestSimulate:
    def test_five_mw_peak(self, tmp_path, capsys):
        assert kerrtpa("simulate", *FAST_SET, "-o", tmp_path, "--avg-mW", "5") == 0
        summary = load(tmp_path / "summary.json")
        assert summary["runs"][0]["peak_power_W"] == pytest.approx(18.0, abs=0.1)
        assert "P_peak=17.99 W" in capsys.readouterr().out
        for name in ("pulse_5mW.txt", "st_5mW.txt", "spec_5mW.txt", "transmission.csv"):
            assert (tmp_path / name).exists()

    def test_no_tpa_gives_flat_inverse_transmission(self, tmp_path):
        code = kerrtpa("simulate", *FAST_SET, "-o", tmp_path, "--avg-mW", "0.1,1,10",
                       "--set", "coefficients.beta_cm_per_GW=0", "--no-spectra")
        assert code == 0
        inv = [r["inverse_transmission"] for r in load(tmp_path / "summary.json")["runs"]]
        assert np.ptp(inv) < 1e-9 * inv[0]
        assert inv[0] == pytest.approx(math.exp(55.262 * 19.09e-3), rel=1e-4)

    def test_zero_coefficients_reproduce_input(self, tmp_path):
        code = kerrtpa("simulate", *FAST_SET, "-o", tmp_path, "--peak-W", "10", "--no-spectra",
                       "--set", "coefficients.beta_cm_per_GW=0", "--set", "coefficients.n2_m2_per_W=0",
                       "--set", "coefficients.sigma_fca_m2=0", "--set", "waveguide.loss_db_per_cm=0")
        assert code == 0
        data = np.loadtxt(next(tmp_path.glob("pulse_*.txt")))
        assert np.allclose(data[:, 2], data[:, 1], rtol=1e-12, atol=0)
        assert np.all(data[:, 3] == 0)

    def test_json_deterministic_across_workers(self, tmp_path):
        outs = []
        for k, workers in enumerate((1, 3, 1)):
            d = tmp_path / f"run{k}"
            assert kerrtpa("simulate", *FAST_SET, "-o", d, "--avg-mW", "0.5,2,5",
                           "--workers", workers, "--no-spectra") == 0
            outs.append((d / "summary.json").read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_exit_codes(self, tmp_path, capsys):
        # missing effective area
        assert kerrtpa("simulate", "-o", tmp_path) == 2
        # unknown configuration key
        assert kerrtpa("simulate", *FAST_SET, "--set", "solver.dz=3", "-o", tmp_path) == 2
        # tolerance that step halving can never reach
        assert kerrtpa("simulate", *FAST_SET, "--set", "solver.max_step_halvings=1",
                       "--set", "solver.tol=1e-15", "-o", tmp_path, "--no-spectra") == 4
        err = capsys.readouterr().err
        assert "solver failed" in err and "error:" in err


class TestFitTransmission:
    def test_unpaired_only_is_nothing_to_fit(self, tmp_path, capsys):
        path = tmp_path / "scans.csv"
        path.write_text("direction,temperature_K,p_in_mW,p_out_mW\non,300,1,0.1\non,300,2,0.2\n")
        assert kerrtpa("fit-transmission", *FAST_SET, "-o", tmp_path, path) == 3
        assert "no on/off" in capsys.readouterr().err

    def test_parse_error_exit(self, tmp_path):
        path = tmp_path / "scans.csv"
        path.write_text("direction,temperature_K,p_in_mW,p_out_mW\non,300,abc,0.1\n")
        assert kerrtpa("fit-transmission", *FAST_SET, "-o", tmp_path, path) == 2

    def test_four_temperatures(self, tmp_path):
        sim = tmp_path / "sim"
        assert kerrtpa("simulate", *FAST_SET, "-o", sim, "--scans", "--no-spectra",
                       "--set", "scan.n_points=8", "--set", "scan.temperatures_K=[5.5,50,150,300]",
                       "--set", "setup.eta_l=0.35", "--set", "setup.eta_r=0.25") == 0
        # append an unpaired scan at another temperature; it must be reported, not fitted
        with open(sim / "scans.csv", "a") as fh:
            fh.write("on,77,1,0.1\non,77,2,0.19\n")
        assert kerrtpa("fit-transmission", *FAST_SET, "-o", tmp_path / "fit", sim / "scans.csv") == 0
        rep = load(tmp_path / "fit" / "fit_transmission.json")
        assert rep["unpaired"] == [{"file": "scans.csv", "temperature_K": 77.0, "direction": "on"}]
        beta = {s["temperature_K"]: s["beta_cm_per_GW"] for s in rep["series"]}
        truth = {t: RunConfig.load(overrides=["waveguide.a_eff_um2=0.1"]).coefficients(t).beta_tpa * 1e11
                 for t in beta}
        for t in beta:
            assert beta[t] == pytest.approx(truth[t], rel=0.03)
        assert beta[300.0] > beta[150.0] > beta[50.0]
        assert beta[50.0] == pytest.approx(beta[5.5], rel=0.03)
        for pair in rep["pairs"]:
            assert pair["eta_l"] == pytest.approx(0.35, rel=0.02)
            assert pair["eta_r"] == pytest.approx(0.25, rel=0.02)
        header, rows = io.read_csv(tmp_path / "fit" / "beta_vs_T.csv")
        assert header == ["temperature_K", "beta_cm_per_GW", "std_cm_per_GW", "n_pairs"]
        assert len(rows) == 4


@pytest.fixture(scope="module")
def spectra(tmp_path_factory):
    d = tmp_path_factory.mktemp("spectra")
    assert kerrtpa("simulate", *FAST_SET, "-o", d, "--avg-mW", "0.2,2,5") == 0
    return d


class TestRetrievePhase:
    def test_reference_is_zero_and_round_trip(self, spectra, tmp_path):
        assert kerrtpa("retrieve-phase", *FAST_SET, "-o", tmp_path, spectra) == 0
        rep = load(tmp_path / "retrieve.json")
        assert rep["reference_mW"] == 0.2
        for e in rep["spectra"]:
            assert e["error_nonincreasing"]
        _, ref_phase, _ = io.read_phase(tmp_path / "phase_0.2mW.txt")
        assert np.all(ref_phase == 0)
        # retrieved minus reference against simulated output minus low-power output
        sim = np.loadtxt(spectra / "pulse_5mW.txt")
        sim_ref = np.loadtxt(spectra / "pulse_0.2mW.txt")
        _, ph, _ = io.read_phase(tmp_path / "phase_5mW.txt")
        truth = sim[:, 3] - sim_ref[:, 3]
        mask = sim[:, 2] > 0.05 * sim[:, 2].max()
        err = (ph - truth)[mask]
        assert np.sqrt(np.mean((err - err.mean()) ** 2)) < 0.05

    def test_missing_reference(self, spectra, tmp_path, capsys):
        code = kerrtpa("retrieve-phase", *FAST_SET, "-o", tmp_path, "--set", "retrieval.reference_mW=1.0",
                       spectra)
        assert code == 2
        assert "reference" in capsys.readouterr().err

    def test_fit_phase_recovers_n2(self, spectra, tmp_path):
        ret = tmp_path / "ret"
        assert kerrtpa("retrieve-phase", *FAST_SET, "-o", ret, spectra) == 0
        assert kerrtpa("fit-phase", *FAST_SET, "-o", tmp_path / "fp", ret) == 0
        rep = load(tmp_path / "fp" / "fit_phase.json")
        assert rep["n2_mean_m2_per_W"] == pytest.approx(5.186e-18, rel=0.05)

    def test_fit_phase_without_retrieve(self, tmp_path):
        assert kerrtpa("fit-phase", *FAST_SET, "-o", tmp_path, tmp_path) == 2


class TestMaterialAndHerald:
    def test_material_table(self, tmp_path):
        cfg = RunConfig.load(overrides=["waveguide.a_eff_um2=0.1"])
        rep = cmd_material(cfg, [0.0, 5.5, 300.0], tmp_path)
        zero = rep["rows"][0]
        assert zero["n2_m2_per_W"] == pytest.approx(3.86e-18, rel=1e-3)
        assert zero["sigma_fca_m2"] == 0.0
        assert (tmp_path / "material.csv").exists()

    def test_fom_with_table_beta(self, tmp_path):
        cfg = RunConfig.load(overrides=["waveguide.a_eff_um2=0.1"])
        rep = cmd_material(cfg, [300.0], tmp_path, beta_override=0.761)
        assert rep["rows"][0]["fom"] == pytest.approx(0.44, abs=0.01)
        assert rep["beta_overridden"]

    def test_material_without_config(self, tmp_path, capsys):
        assert kerrtpa("material", "0,300", "-o", tmp_path) == 0
        assert "3.86e-18" in capsys.readouterr().out

    @pytest.mark.parametrize("fom,expected", [(0.44, 0.74), (0.59, 0.79), (4.4, 0.97)])
    def test_herald(self, fom, expected):
        cfg = RunConfig.load(overrides=["waveguide.a_eff_um2=0.1"])
        assert cmd_herald(cfg, 0.05, 0.9, fom)["heralding"] == pytest.approx(expected, abs=0.01)

    def test_herald_cli(self, capsys):
        assert kerrtpa("herald", "--p-pair", "0.05", "--purity", "0.9", "--fom", "4.4") == 0
        assert "heralding  0.9679" in capsys.readouterr().out

    def test_negative_temperature(self, tmp_path):
        assert kerrtpa("material", "-5", "-o", tmp_path) == 2
