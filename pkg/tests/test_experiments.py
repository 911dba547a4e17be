import json

import numpy as np
import pandas as pd
import pytest

from app.engine.experiments import RunReport, check_bias_ratio, fock_identity_checks, run, truncation_gaps
from app.engine.feynman_kac import BiasRefinement
from app.helpers.outputs import results_document, write_report
from app.models.Command import Command
from app.models.ExitCode import ExitCode
from app.settings.run_config import default_config


def _failed(report: RunReport) -> list:
    return [check for check in report.checks if not check.passed]


def _refinement(difference: list[float], difference_se: list[float], ratio: float | None, ratio_se: float | None) -> BiasRefinement:
    return BiasRefinement(
        horizon=0.5,
        steps=[16, 32, 64],
        abs_error=[4e-3, 2e-3, 1e-3],
        se=[1e-4, 1e-4, 1e-4],
        difference=difference,
        difference_se=difference_se,
        ratio=ratio,
        ratio_se=ratio_se,
    )


def test_report_verdicts():
    report = RunReport(command=Command.VANHOVE)

    report.check("small", 0.1, 1.0)
    assert report.passed
    assert report.exit_code is ExitCode.PASS

    report.check("forced", 5.0, 1.0, passed=True)
    report.check("large", 2.0, 1.0)
    assert not report.passed
    assert report.exit_code is ExitCode.CHECK_FAILED
    assert [check.passed for check in report.checks] == [True, True, False]


def test_merge_prefixes_check_names():
    inner = RunReport(command=Command.FIBER_MC, results={"z": 1.0})
    inner.check("fiber_z", 0.5, 4.0)
    outer = RunReport(command=Command.SELFTEST)

    outer.merge(inner, "fiber")

    assert outer.checks[0].name == "fiber.fiber_z"
    assert outer.results == {"fiber": {"z": 1.0}}


def test_vanhove_run_passes():
    report = run(default_config(Command.VANHOVE))

    assert report.passed, [check for check in report.checks if not check.passed]
    assert {"ground_energy_error", "monotone_in_cutoff", "relative_bounds"} <= {c.name for c in report.checks}
    energy = report.results["ground_energy"]
    assert energy["N"] == 14
    assert energy["truncated"] == pytest.approx(energy["closed_form"], abs=1e-8)
    assert "spectrum" in report.tables
    assert "energy_vs_cutoff" in report.plotdata


def test_fock_identities_hold(rng):
    report = fock_identity_checks(rng, instances=20)

    names = [check.name for check in report.checks]
    assert names == [
        "ccr", "annihilation_on_exp_vector", "dgamma_commutator", "field_adjoint", "taylor_bound_excess",
        "apc_factorization",
    ]
    assert report.passed


def test_reports_are_written_deterministically(tmp_path):
    config = default_config(Command.VANHOVE).with_overrides(fock={"max_bosons": 8}, checks={"cutoffs": [4, 8]})
    report = run(config)

    first = write_report(report, config, tmp_path / "first")
    second = write_report(run(config), config, tmp_path / "second")

    assert first.read_bytes() == second.read_bytes()
    document = json.loads(first.read_text())
    assert list(document) == sorted(document)
    assert document["config_hash"] == config.content_hash()
    assert document["exit_code"] == int(report.exit_code)
    assert (tmp_path / "first" / "tables" / "spectrum.csv").is_file()
    assert (tmp_path / "first" / "plotdata" / "energy_vs_cutoff.csv").is_file()


def test_non_finite_values_become_null():
    config = default_config(Command.VANHOVE)
    report = RunReport(command=Command.VANHOVE, results={"ratio": float("nan"), "values": [1.0, np.inf]})

    document = results_document(report, config)

    assert document["results"] == {"ratio": None, "values": [1.0, None]}


def test_bias_ratio_inside_the_band_passes():
    report = RunReport(command=Command.FIBER_MC)

    check_bias_ratio(report, default_config(Command.FIBER_MC), _refinement([2e-3, 1e-3], [1e-5, 1e-5], 2.0, 0.03))

    assert [check.name for check in report.checks] == ["bias_ratio"]
    assert report.passed
    assert len(report.plotdata["fiber_refinement"]) == 3
    assert report.results["bias_refinement"]["ratio"] == 2.0


def test_bias_ratio_outside_the_band_fails():
    report = RunReport(command=Command.FIBER_MC)

    check_bias_ratio(report, default_config(Command.FIBER_MC), _refinement([1.2e-3, 1e-3], [1e-5, 1e-5], 1.2, 0.01))

    assert not report.passed
    assert report.checks[0].value == pytest.approx(1.2)


def test_unresolved_bias_ratio_is_left_unchecked():
    """Differences within three standard errors say nothing about the order of the scheme."""
    report = RunReport(command=Command.FIBER_MC)

    check_bias_ratio(report, default_config(Command.FIBER_MC), _refinement([1e-4, 5e-5], [1e-4, 1e-4], 2.0, 4.5))

    assert report.checks == []
    assert "fiber_refinement" in report.plotdata
    assert "bias_refinement" in report.results


def test_fiber_run_passes():
    config = default_config(Command.FIBER_MC).with_overrides(
        fock={"max_bosons": 4}, grid={"steps": 16}, mc={"n_paths": 200},
    )

    report = run(config)

    assert report.passed, _failed(report)
    assert {"fiber_z", "hermiticity_z", "semigroup_z", "norm_bound_violations"} <= {c.name for c in report.checks}
    assert report.plotdata["fiber_refinement"]["steps"].tolist() == [16, 32, 64]


def test_kernel_run_passes():
    config = default_config(Command.KERNEL_MC).with_overrides(mc={"n_paths": 500}, grid={"refinements": [16, 32, 64]})

    report = run(config)

    assert report.passed, _failed(report)
    names = {check.name for check in report.checks}
    assert {"symmetry_residual", "symmetry_slope", "total_semigroup_z"} <= names
    assert "symmetry_z" not in names
    residuals = report.plotdata["kernel_symmetry"]["mean_residual"].to_numpy()
    assert np.all(np.diff(residuals) < 0)


def test_bridge_moments_on_a_coarse_grid():
    """On 16 steps of `[0, 1]` the time 0.9 falls between nodes and moves to 0.875."""
    config = default_config(Command.BRIDGE_MOMENTS).with_overrides(
        grid={"steps": 16}, mc={"n_paths": 2000}, checks={"moment_dims": [1]},
    )

    report = run(config)

    assert report.passed, _failed(report)
    assert report.results["moment_times"] == pytest.approx([0.25, 0.5, 0.875])
    assert sorted(set(report.tables["bridge_moments"]["t"])) == pytest.approx([0.25, 0.5, 0.875])


def test_bridge_moment_times_are_not_repeated():
    config = default_config(Command.BRIDGE_MOMENTS).with_overrides(grid={"steps": 2}, mc={"n_paths": 200})

    report = run(config)

    assert report.results["moment_times"] == [0.5]


def test_series_run_passes():
    config = default_config(Command.SERIES_VS_SDE).with_overrides(grid={"steps": 16}, mc={"n_paths": 3})

    report = run(config)

    assert report.passed, _failed(report)
    assert {"tail_ratio", "series_gap", "taylor_order_gap"} <= {c.name for c in report.checks}
    assert len(report.tables["series_paths"]) == 3


def test_reversal_run_checks_the_series_per_order():
    config = default_config(Command.REVERSAL_CHECK).with_overrides(
        checks={"reversal_paths": 5}, series={"max_order": 3}, grid={"steps": 32},
    )

    report = run(config)

    assert report.passed, _failed(report)
    series = next(check for check in report.checks if check.name == "series_reversal_residual")
    assert series.value <= 1e-8
    assert report.tables["series_reversal"]["order"].tolist() == [0, 1, 2, 3]


def test_sweep_truncation_gap_decreases():
    config = default_config(Command.SWEEP).with_overrides(
        modes={"momentum": [[0.5]]},
        model={"xi": [0.4]},
        grid={"refinements": [8, 16]},
        checks={"cutoffs": [2, 4, 6], "path_counts": [200, 800]},
    )

    report = run(config)

    assert report.passed, _failed(report)
    assert {"truncation_gap_monotone", "se_scaling"} <= {c.name for c in report.checks}
    gaps = report.results["truncation_gaps"]
    assert sorted(gaps) == [2, 4]
    assert gaps[4] < gaps[2]


def test_truncation_gaps_are_measured_against_the_largest_cutoff():
    table = pd.DataFrame({
        "max_bosons": [2, 2, 4, 8],
        "oracle_re": [1.0, 1.0, 0.5, 0.25],
        "oracle_im": [0.0, 0.0, 0.0, 0.0],
    })

    assert truncation_gaps(table) == {2: pytest.approx(0.75), 4: pytest.approx(0.25)}


def test_deterministic_sweep_skips_the_se_scaling():
    config = default_config(Command.SWEEP).with_overrides(
        grid={"refinements": [8]}, checks={"cutoffs": [2, 3], "path_counts": [20, 80]},
    )

    report = run(config)

    assert "se_scaling" not in {check.name for check in report.checks}
    assert report.passed, _failed(report)


def test_results_do_not_depend_on_the_worker_count(tmp_path):
    config = default_config(Command.BRIDGE_MOMENTS).with_overrides(
        grid={"steps": 20}, mc={"n_paths": 300}, checks={"moment_dims": [2]},
    )
    pooled = config.with_overrides(mc={"workers": 2})

    first = write_report(run(config), config, tmp_path / "inline")
    second = write_report(run(pooled), pooled, tmp_path / "pooled")

    assert first.read_bytes() == second.read_bytes()
    table = "tables/bridge_moments.csv"
    assert (tmp_path / "inline" / table).read_bytes() == (tmp_path / "pooled" / table).read_bytes()


def test_selftest_passes():
    report = run(default_config(Command.SELFTEST))

    assert report.passed, _failed(report)
    determinism = next(check for check in report.checks if check.name == "determinism")
    assert determinism.detail == "workers 1 vs 4"
