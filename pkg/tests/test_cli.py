import json
import math

import numpy as np
import pytest

from shadowfcs import storage
from shadowfcs.commands import load_run_config, prefixed
from shadowfcs.main import build_parser, main
from shadowfcs.models.schemas import Axis, RunConfig
from shadowfcs.services.shadows import (
    average_bulk_subsystems,
    cumulants_from_fcs,
    default_alpha_grid,
)

SMALL = ["--n-qubits", "5", "--subsystem", "2:3", "--alpha-points", "33"]
ACQUIRE = ["--n-u", "60", "--n-m", "20", "--seed", "5"]


def run(*argv) -> int:
    return main([str(arg) for arg in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """simulate -> acquire on a 5-site chain, shared by the estimate-side tests."""
    root = tmp_path_factory.mktemp("pipeline")
    state = root / "state.json"
    data = root / "data.jsonl"
    assert run("simulate", *SMALL, "--time-ms", "0.8", "--out", state) == 0
    assert run("acquire", state, *SMALL, *ACQUIRE, "--out", data) == 0
    return root, state, data


class TestRunConfig:
    def test_presets(self):
        case_i = RunConfig.preset("case-I")
        quench = case_i.quench
        assert (quench.n_qubits, quench.j0, quench.alpha_exp) == (10, 420.0, 1.24)
        assert (case_i.acquisition.n_u, case_i.acquisition.n_m) == (500, 150)
        assert case_i.analysis.subsystem_spec.sites == (4, 5, 6, 7)
        case_ii = RunConfig.preset("case-II")
        quench = case_ii.quench
        assert (quench.n_qubits, quench.j0, quench.alpha_exp) == (12, 560.0, 1.0)
        assert case_ii.initial_state.theta == pytest.approx(math.pi / 2)
        assert (case_ii.acquisition.n_u, case_ii.acquisition.n_m) == (500, 30)
        with pytest.raises(ValueError):
            RunConfig.preset("case-III")

    def test_json_round_trip(self):
        config = RunConfig.preset("case-II")
        assert RunConfig.model_validate_json(config.model_dump_json()) == config

    def test_precedence(self, tmp_path):
        """preset < --config file < flags."""
        config_file = tmp_path / "run.json"
        config_file.write_text(
            json.dumps({"acquisition": {"n_u": 7, "n_m": 3}, "quench": {"j0": 100.0}})
        )
        args = build_parser().parse_args(
            ["acquire", "--preset", "case-II", "--config", str(config_file), "--n-u", "9"]
        )
        config = load_run_config(args)
        assert config.acquisition.n_u == 9
        assert config.acquisition.n_m == 3
        assert config.quench.j0 == 100.0
        assert config.quench.n_qubits == 12
        assert config.initial_state.kind == "tilted_ferromagnet"

    def test_flag_parsing(self):
        args = build_parser().parse_args(
            [
                "sweep",
                "--n-qubits", "10",
                "--theta", "0.25pi",
                "--state-kind", "tilted_ferromagnet",
                "--time-ms", "0,0.5,1",
                "--axes", "y,z",
                "--sweep-alphas", "0.5pi,0.1",
                "--bitflip-rates", "learned",
            ]
        )
        config = load_run_config(args)
        assert config.quench.times_ms == [0.0, 0.5, 1.0]
        assert config.initial_state.theta == pytest.approx(math.pi / 4)
        assert [axis.value for axis in config.analysis.axes] == ["y", "z"]
        assert config.analysis.sweep_alphas == pytest.approx([math.pi / 2, 0.1])
        assert len(config.initial_state.bitflip_rates) == 10

    def test_prefixed_names(self, tmp_path):
        assert prefixed(tmp_path / "run", "fcs", "x") == tmp_path / "run_fcs_x.csv"


class TestExitStatus:
    def test_missing_out(self):
        assert run("simulate", *SMALL) == 1

    def test_several_times_need_sweep(self, tmp_path):
        assert run("simulate", *SMALL, "--time-ms", "0,1", "--out", tmp_path / "s.json") == 1

    def test_invalid_configuration(self, tmp_path):
        """A subsystem beyond the chain is a validation error, reported with status 1."""
        args = ["--n-qubits", "3", "--subsystem", "2:5", "--out", tmp_path / "s.json"]
        assert run("simulate", *args) == 1

    def test_schema_mismatch(self, pipeline, tmp_path, caplog):
        """Feeding a state file to estimate fails and names both schema versions."""
        _, state, _ = pipeline
        assert run("estimate", state, *SMALL, "--out", tmp_path / "est") == 1
        assert "rm-dataset/1" in caplog.text and "rm-state/1" in caplog.text

    def test_acquire_needs_a_source(self, tmp_path):
        assert run("acquire", *SMALL, "--out", tmp_path / "d.jsonl") == 1

    def test_experimental_import(self, tmp_path):
        raw = tmp_path / "raw.dat"
        raw.write_text("")
        assert run("acquire", "--experimental", raw, *SMALL, "--out", tmp_path / "d.jsonl") == 1

    def test_compare_needs_one_source(self, pipeline, tmp_path):
        _, _, data = pipeline
        prefix = tmp_path / "est"
        assert run("estimate", data, *SMALL, "--targets", "fcs", "--out", prefix) == 0
        assert run("compare", prefix.with_name("est_fcs_x.csv"), "--out", tmp_path / "c.csv") == 1


class TestPipeline:
    def test_simulate_writes_a_pure_state(self, pipeline):
        _, state, _ = pipeline
        loaded, metadata = storage.read_state(state)
        assert metadata.kind == "pure"
        assert metadata.time_ms == 0.8
        assert metadata.config["quench"]["n_qubits"] == 5

    def test_bitflip_rates_give_a_density_matrix(self, tmp_path):
        out = tmp_path / "rho.json"
        rates = "0.01,0.02,0.03,0.04,0.05"
        assert run("simulate", *SMALL, "--bitflip-rates", rates, "--out", out) == 0
        assert storage.read_state(out)[1].kind == "density"

    def test_acquire_is_reproducible(self, pipeline, tmp_path):
        _, state, data = pipeline
        again = tmp_path / "again.jsonl"
        assert run("acquire", state, *SMALL, *ACQUIRE, "--out", again) == 0
        assert again.read_bytes() == data.read_bytes()

    def test_estimate_tables(self, pipeline, tmp_path):
        _, _, data = pipeline
        prefix = tmp_path / "est"
        targets = ["--targets", "fcs,pdf,moments,propagated"]
        assert run("estimate", data, *SMALL, *targets, "--out", prefix) == 0
        for axis in ("x", "z"):
            fcs = storage.read_table(tmp_path / f"est_fcs_{axis}.csv")
            assert fcs.columns == ["alpha", "re", "im", "stderr_re", "stderr_im"]
            assert len(fcs.rows) == 33
            assert fcs.metadata["seed"] == 5
            assert fcs.metadata["config"]["analysis"]["subsystem"] == "2:3"

            pdf = storage.read_table(tmp_path / f"est_pdf_{axis}.csv")
            assert pdf.columns == ["q", "p", "stderr"]
            assert pdf.column("q").tolist() == [-2.0, 0.0, 2.0]
            assert pdf.column("p").sum() == pytest.approx(1.0, abs=1e-10)

            propagated = storage.read_table(tmp_path / f"est_propagated_{axis}.csv")
            np.testing.assert_allclose(propagated.column("re"), fcs.column("re"), atol=1e-10)
        moments = storage.read_table(tmp_path / "est_moments.csv")
        assert moments.text_column("axis") == ["x", "z"]
        assert np.all(np.isfinite(moments.column("log_fcs_mean")))

    def test_estimates_are_reproducible(self, pipeline, tmp_path):
        _, _, data = pipeline
        assert run("estimate", data, *SMALL, "--targets", "pdf", "--out", tmp_path / "a") == 0
        assert run("estimate", data, *SMALL, "--targets", "pdf", "--out", tmp_path / "b") == 0
        first = (tmp_path / "a_pdf_x.csv").read_text().splitlines()
        second = (tmp_path / "b_pdf_x.csv").read_text().splitlines()
        assert first[1:] == second[1:]

    def test_oracle_and_compare(self, pipeline, tmp_path):
        """Estimates compared against the oracle table and the state file agree."""
        _, state, data = pipeline
        assert run("estimate", data, *SMALL, "--targets", "fcs,pdf", "--out", tmp_path / "est") == 0
        assert run("oracle", "--state", state, *SMALL, "--out", tmp_path / "exact") == 0

        reference = tmp_path / "exact_oracle_fcs_x.csv"
        assert storage.read_table(reference).columns == ["alpha", "exact_re", "exact_im"]
        by_table = tmp_path / "cmp_table.csv"
        by_state = tmp_path / "cmp_state.csv"
        estimate = tmp_path / "est_fcs_x.csv"
        assert run("compare", estimate, "--reference", reference, "--out", by_table) == 0
        assert run("compare", estimate, "--state", state, "--out", by_state) == 0

        table = storage.read_table(by_table)
        assert table.columns[-2:] == ["z_re", "z_im"]
        assert math.isfinite(table.metadata["max_abs_z"])
        assert table.metadata["seed"] == 5
        assert table.metadata["build"] == storage.build_identifier()
        np.testing.assert_allclose(
            table.column("exact_re"), storage.read_table(by_state).column("exact_re"), atol=1e-12
        )
        assert table.column("z_re")[0] == 0.0

        pdf_compare = tmp_path / "cmp_pdf.csv"
        estimate_pdf = tmp_path / "est_pdf_z.csv"
        assert run("compare", estimate_pdf, "--state", state, "--out", pdf_compare) == 0
        assert storage.read_table(pdf_compare).columns == ["q", "p", "exact", "z"]

    def test_grid_mismatch(self, pipeline, tmp_path):
        _, state, data = pipeline
        assert run("estimate", data, *SMALL, "--targets", "fcs", "--out", tmp_path / "est") == 0
        coarse = [*SMALL[:-1], "17"]
        assert run("oracle", "--state", state, *coarse, "--out", tmp_path / "exact") == 0
        reference = tmp_path / "exact_oracle_fcs_x.csv"
        estimate = tmp_path / "est_fcs_x.csv"
        assert run("compare", estimate, "--reference", reference, "--out", tmp_path / "c.csv") == 1

    def test_bulk_average(self, pipeline, tmp_path):
        """With --bulk-average the table lists every window and compares against their mean."""
        _, state, data = pipeline
        args = [*SMALL, "--bulk-average", "--targets", "fcs"]
        assert run("estimate", data, *args, "--out", tmp_path / "bulk") == 0
        table = storage.read_table(tmp_path / "bulk_fcs_z.csv")
        assert table.metadata["windows"] == ["2:3", "3:4"]
        estimate = tmp_path / "bulk_fcs_z.csv"
        assert run("compare", estimate, "--state", state, "--out", tmp_path / "c.csv") == 0

    def test_bulk_average_moments(self, pipeline, tmp_path):
        """Moments and log-FCS cumulants of a bulk run both come from the window average."""
        _, _, data = pipeline
        args = [*SMALL, "--bulk-average", "--targets", "moments", "--axes", "x"]
        assert run("estimate", data, *args, "--out", tmp_path / "bulk") == 0
        table = storage.read_table(tmp_path / "bulk_moments.csv")
        assert table.metadata["windows"] == ["2:3", "3:4"]

        dataset = storage.read_dataset(data)
        moments = average_bulk_subsystems(dataset, 2, Axis.X, "moments")
        grid = default_alpha_grid(2, 33)
        mean, variance = cumulants_from_fcs(
            average_bulk_subsystems(dataset, 2, Axis.X, "fcs", grid)
        )
        assert table.column("mean")[0] == pytest.approx(moments.mean, abs=1e-12)
        assert table.column("second")[0] == pytest.approx(moments.second, abs=1e-12)
        assert table.column("log_fcs_mean")[0] == pytest.approx(mean, abs=1e-12)
        assert table.column("log_fcs_variance")[0] == pytest.approx(variance, abs=1e-12)

    def test_closed_form_family(self, tmp_path):
        """The ideal Neel state at t = 0 matches cos^N_A exactly at alpha = 0."""
        state = tmp_path / "neel.json"
        data = tmp_path / "neel.jsonl"
        assert run("simulate", *SMALL, "--time-ms", "0", "--out", state) == 0
        assert run("acquire", state, *SMALL, "--n-u", "30", "--n-m", "10", "--out", data) == 0
        only_x = ["--targets", "fcs", "--axes", "x"]
        assert run("estimate", data, *SMALL, *only_x, "--out", tmp_path / "e") == 0
        out = tmp_path / "c.csv"
        assert run("compare", tmp_path / "e_fcs_x.csv", "--family", "neel_fcs_x", "--out", out) == 0
        table = storage.read_table(out)
        assert table.column("est_re")[0] == 1.0
        assert table.column("exact_re")[0] == 1.0
        assert np.all(np.isfinite(table.column("z_re")))

        assert run("oracle", "--family", "neel_bitflip_fcs_z", *SMALL, "--bitflip-rates",
                   "0.1,0.1,0.1,0.1,0.1", "--out", tmp_path / "flip") == 0
        corrected = storage.read_table(tmp_path / "flip_oracle_fcs_z.csv")
        assert not np.allclose(corrected.column("exact_re"), 1.0)

    def test_parity_family(self, tmp_path):
        """The x-polarised ferromagnet has x parity 1 and z parity 0 on four sites."""
        args = ["--n-qubits", "5", "--subsystem", "1:4", "--axes", "x,z"]
        args += ["--state-kind", "tilted_ferromagnet", "--theta", "0.5pi"]
        assert run("oracle", "--family", "parity", *args, "--out", tmp_path / "p") == 0
        table = storage.read_table(tmp_path / "p_oracle_parity.csv")
        assert table.kind == "oracle_parity"
        assert table.text_column("axis") == ["x", "z"]
        assert list(table.column("exact")) == pytest.approx([1.0, 0.0], abs=1e-12)

    def test_parity_family_is_not_comparable(self, pipeline, tmp_path):
        _, _, data = pipeline
        only_x = ["--targets", "fcs", "--axes", "x"]
        assert run("estimate", data, *SMALL, *only_x, "--out", tmp_path / "e") == 0
        out = tmp_path / "c.csv"
        assert run("compare", tmp_path / "e_fcs_x.csv", "--family", "parity", "--out", out) == 1
        assert not out.exists()

    def test_hist(self, pipeline, tmp_path):
        _, _, data = pipeline
        out = tmp_path / "hist.csv"
        assert run("hist", data, "--out", out) == 0
        table = storage.read_table(out)
        assert table.columns == ["m", "pooled", "site_1", "site_2", "site_3", "site_4", "site_5"]
        assert table.column("pooled").sum() == 60 * 5
        assert 0.0 <= table.metadata["flatness_pvalue"] <= 1.0

    def test_sweep(self, tmp_path):
        out = tmp_path / "sweep.csv"
        args = [*SMALL, "--time-ms", "0,0.5", "--n-u", "20", "--n-m", "10"]
        args += ["--sweep-alphas", "0.25pi,0.5"]
        assert run("sweep", *args, "--out", out) == 0
        table = storage.read_table(out)
        # per time and axis: 2 alphas, 3 outcomes, mean and second moment
        assert len(table.rows) == 2 * 2 * (2 + 3 + 2)
        assert sorted(set(table.text_column("quantity"))) == ["fcs", "mean", "pdf", "second"]
        seeds = table.metadata["time_seeds"]
        assert len(seeds) == 2 and seeds[0] != seeds[1]


@pytest.mark.slow
class TestCaseI:
    def test_end_to_end(self, tmp_path):
        """Case I: simulate N=10, acquire 500 x 150, estimate FCS and PDF on 4:7."""
        state = tmp_path / "state.json"
        data = tmp_path / "data.jsonl"
        common = ["--preset", "case-I"]
        assert run("simulate", *common, "--time-ms", "1.0", "--out", state) == 0
        assert run("acquire", state, *common, "--out", data) == 0
        assert run("estimate", data, *common, "--targets", "fcs,pdf", "--out", tmp_path / "e") == 0
        assert len(storage.read_table(tmp_path / "e_fcs_x.csv").rows) == 65
        assert len(storage.read_table(tmp_path / "e_pdf_z.csv").rows) == 5
