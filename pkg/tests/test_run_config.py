import pytest
from pydantic import ValidationError

from app.models.Command import Command
from app.models.Preset import Preset
from app.settings.config import settings, update_settings
from app.settings.run_config import RunConfig, as_complex, default_config, load_run_config


def test_command_defaults():
    config = default_config(Command.VANHOVE)

    assert config.fock.max_bosons == 14
    assert config.modes.omega == [2.0]
    assert config.mc.seed == 20240521
    assert config.model.preset is Preset.NELSON


def test_hash_ignores_key_order(tmp_path):
    """Two files with the same content in a different order hash the same."""
    first = tmp_path / "first.toml"
    second = tmp_path / "second.toml"
    first.write_text("[mc]\nseed = 7\nn_paths = 100\n\n[grid]\nsteps = 16\nhorizon = 0.25\n")
    second.write_text("[grid]\nhorizon = 0.25\nsteps = 16\n\n[mc]\nn_paths = 100\nseed = 7\n")

    one = load_run_config(Command.FIBER_MC, first)
    two = load_run_config(Command.FIBER_MC, second)

    assert one.content_hash() == two.content_hash()
    assert one.content_hash() != default_config(Command.FIBER_MC).content_hash()


def test_file_values_override_command_defaults(tmp_path):
    document = tmp_path / "run.toml"
    document.write_text("[fock]\nmax_bosons = 5\n")

    config = load_run_config(Command.VANHOVE, document)

    assert config.fock.max_bosons == 5
    assert config.modes.omega == [2.0]


def test_validation_error_carries_the_field_path(tmp_path):
    document = tmp_path / "run.toml"
    document.write_text("[mc]\nn_paths = 0\n")

    with pytest.raises(ValidationError) as error:
        load_run_config(Command.FIBER_MC, document)

    assert error.value.errors()[0]["loc"] == ("mc", "n_paths")


def test_unknown_fields_are_rejected():
    with pytest.raises(ValidationError) as error:
        RunConfig.model_validate({"command": "vanhove", "grid": {"stepz": 3}})

    assert error.value.errors()[0]["loc"] == ("grid", "stepz")


def test_seed_must_fit_in_64_bits():
    with pytest.raises(ValidationError):
        default_config(Command.VANHOVE).with_overrides(mc={"seed": 2 ** 64})


def test_dimension_cap_is_checked_before_compute():
    with pytest.raises(ValidationError) as error:
        default_config(Command.VANHOVE).with_overrides(
            modes={"mu": [1.0] * 6, "omega": [1.0] * 6, "momentum": [[0.0]] * 6, "form_factor": [0.1] * 6},
            fock={"max_bosons": 12},
        )

    assert "above the cap" in str(error.value)


def test_series_guards():
    config = default_config(Command.SERIES_VS_SDE)

    with pytest.raises(ValidationError):
        config.with_overrides(series={"max_order": 9})
    with pytest.raises(ValidationError):
        config.with_overrides(grid={"steps": 65})
    assert default_config(Command.FIBER_MC).with_overrides(grid={"steps": 500}).grid.steps == 500


def test_form_factor_needs_one_entry_per_mode():
    with pytest.raises(ValidationError):
        default_config(Command.FIBER_MC).with_overrides(modes={"form_factor": [0.1, 0.2]})


def test_table_preset_needs_a_table():
    with pytest.raises(ValidationError):
        default_config(Command.FIBER_MC).with_overrides(model={"preset": "table"})


def test_time_fractions_must_be_open():
    with pytest.raises(ValidationError):
        default_config(Command.BRIDGE_MOMENTS).with_overrides(checks={"t_fractions": [0.5, 1.0]})


def test_complex_entries():
    config = default_config(Command.FIBER_MC).with_overrides(checks={"g": [[0.1, -0.2]]})

    assert as_complex(config.checks.g) == pytest.approx([0.1 - 0.2j])
    assert as_complex(config.checks.h) == pytest.approx([0.1 + 0j])


def test_overrides_keep_other_sections():
    config = default_config(Command.REVERSAL_CHECK)

    changed = config.with_overrides(mc={"workers": 3}, output={"dump_paths": True})

    assert changed.mc.workers == 3
    assert changed.output.dump_paths
    assert changed.modes == config.modes
    assert changed.model.scalar_coupling == [[0.4, 0.2]]


def test_domain_weights_must_increase():
    with pytest.raises(ValidationError) as error:
        default_config(Command.SWEEP).with_overrides(checks={"a_values": [2.0, 1.0]})

    assert error.value.errors()[0]["loc"][:2] == ("checks", "a_values")


def test_dimension_cap_follows_the_settings(monkeypatch):
    """`MAX_FOCK_DIM=40` rejects two modes at `N = 6` (dimension 28 * 2 spins = 56)."""
    config = default_config(Command.FIBER_MC)
    monkeypatch.setenv("MAX_FOCK_DIM", "40")
    update_settings()
    try:
        assert settings.MAX_FOCK_DIM == 40
        with pytest.raises(ValidationError):
            config.with_overrides(
                model={"preset": "spin_toy"},
                modes={"mu": [1.0, 1.0], "omega": [1.0, 1.5], "momentum": [[0.0], [0.0]], "form_factor": [0.3, 0.2]},
                fock={"max_bosons": 6},
            )
    finally:
        monkeypatch.delenv("MAX_FOCK_DIM")
        update_settings()

    assert settings.MAX_FOCK_DIM == 5000


def test_defaults_are_validated():
    config = default_config(Command.KERNEL_MC)

    assert config.modes.form_factor == [[0.3, 0.0]]
    assert config.checks.g == [[0.2, 0.0]]
    assert as_complex(config.checks.h) == pytest.approx([0.1 + 0j])
    assert as_complex(RunConfig(command=Command.FIBER_MC).modes.form_factor) == pytest.approx([0.3 + 0j])


def test_hash_ignores_the_worker_count():
    config = default_config(Command.BRIDGE_MOMENTS)
    pooled = config.with_overrides(mc={"workers": 4})

    assert pooled.mc.workers == 4
    assert pooled.canonical() == config.canonical()
    assert "workers" not in pooled.canonical()["mc"]
    assert pooled.content_hash() == config.content_hash()


def test_bias_ratio_bounds_must_be_ordered():
    with pytest.raises(ValidationError):
        default_config(Command.FIBER_MC).with_overrides(checks={"bias_ratio_min": 2.5, "bias_ratio_max": 2.2})
