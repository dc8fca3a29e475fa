"""Tests for run configuration loading, overrides and hashing."""

import pytest

from src.dynamics import EvolverConfig, Flow, Scheme
from src.errors import ConfigError
from src.models import (
    EvolverSettings,
    LyapunovSettings,
    RunConfig,
    apply_overrides,
    config_hash,
    dump_config,
    load_config,
    parse_config,
)


def test_empty_config_uses_defaults():
    config = load_config(None)
    assert config.scenario == 'ho_ground'
    assert config.workers == 1
    assert config.evolver.record_stride == 1
    assert config.lyapunov.N == 4
    assert config.output.snapshot_stride == 100


def test_yaml_file_is_loaded(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text(
        "scenario: free_gaussian\n"
        "params:\n"
        "  k0: 2.0\n"
        "evolver:\n"
        "  dt: 0.001\n"
        "  scheme: split_step_fourier\n"
        "trajectories:\n"
        "  starts: [[0.5], [1.0]]\n"
    )
    config = load_config(path)
    assert config.params == {'k0': 2.0}
    assert config.evolver.dt == 0.001
    assert config.evolver.scheme == Scheme.SPLIT_STEP_FOURIER
    assert config.trajectories.starts == [[0.5], [1.0]]


def test_unknown_key_is_rejected_with_path():
    with pytest.raises(ConfigError) as info:
        parse_config({'evolver': {'dt': 0.1, 'bogus': 1}})
    assert info.value.key == 'evolver.bogus'


def test_lenient_mode_drops_unknown_keys(caplog):
    config = parse_config({'evolver': {'dt': 0.1, 'bogus': 1}, 'extra': True,
                           'scenario': 'free_gaussian', 'params': {'k0': 1.0, 'nope': 2}}, strict=False)
    assert config.evolver.dt == 0.1
    assert config.params == {'k0': 1.0}
    assert "'evolver.bogus'" in caplog.text
    assert "'params.nope'" in caplog.text


def test_invalid_values_name_their_key():
    with pytest.raises(ConfigError) as info:
        parse_config({'evolver': {'dt': -1.0}})
    assert info.value.key == 'evolver.dt'
    with pytest.raises(ConfigError) as info:
        parse_config({'lyapunov': {'N': 2}})
    assert info.value.key == 'lyapunov.N'


def test_scenario_and_version_are_checked():
    with pytest.raises(ConfigError, match='unknown scenario'):
        parse_config({'scenario': 'double_slit'})
    with pytest.raises(ConfigError, match='unsupported version'):
        parse_config({'version': '99'})
    with pytest.raises(ConfigError, match='unknown parameter'):
        parse_config({'scenario': 'ho_ground', 'params': {'k0': 1.0}})


def test_lyapunov_lengths_must_match_N():
    with pytest.raises(ConfigError):
        parse_config({'lyapunov': {'N': 3, 'energies': [0.0, 1.0]}})
    settings = LyapunovSettings(N=3)
    assert len(settings.resolved_energies()) == 3
    assert len(settings.initial_coefficients()) == 3
    assert LyapunovSettings().initial_coefficients()[2] == 0.5j


def test_overrides_take_precedence(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text("evolver:\n  dt: 0.01\n")
    config = load_config(path, ['evolver.dt=0.002', 'lyapunov.g_values=[0.0, 3.0]', 'evolver.flow=noQ'])
    assert config.evolver.dt == 0.002
    assert config.lyapunov.g_values == [0.0, 3.0]
    assert config.evolver.flow == Flow.NO_Q


def test_dotted_keys_in_files_expand():
    config = parse_config({'evolver.dt': 0.05, 'output.write_snapshots': False})
    assert config.evolver.dt == 0.05
    assert config.output.write_snapshots is False


def test_malformed_override():
    with pytest.raises(ConfigError):
        apply_overrides({}, ['evolver.dt'])
    with pytest.raises(ConfigError):
        apply_overrides({'evolver': 1}, ['evolver.dt=0.1'])


def test_yaml_syntax_error_reports_position(tmp_path):
    path = tmp_path / 'broken.yaml'
    path.write_text("scenario: ho_ground\nevolver:\n  dt: [0.1\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line is not None
    assert info.value.column is not None
    assert 'line' in str(info.value)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match='config not found'):
        load_config(tmp_path / 'absent.yaml')


def test_non_mapping_root():
    with pytest.raises(ConfigError, match='mapping'):
        parse_config([1, 2])


def test_dump_reloads_to_equal_config(tmp_path):
    config = parse_config({'scenario': 'toy_chaos_sweep', 'params': {'steps': 500},
                           'evolver': {'flow': 'linear'}, 'lyapunov': {'g_values': [1.0]}})
    path = tmp_path / 'config.yaml'
    path.write_text(dump_config(config))
    assert load_config(path) == config


def test_config_hash_is_stable():
    a = parse_config({'seed': 3})
    b = parse_config({'seed': 3})
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 16
    assert config_hash(a) != config_hash(parse_config({'seed': 4}))


def test_evolver_settings_apply():
    base = EvolverConfig(dt=0.01, scheme=Scheme.CRANK_NICOLSON)
    kept = EvolverSettings().apply(base)
    assert kept.dt == 0.01 and kept.scheme == Scheme.CRANK_NICOLSON
    changed = EvolverSettings(dt=0.002, record_stride=5).apply(base)
    assert changed.dt == 0.002
    assert changed.record_stride == 5
    assert changed.scheme == Scheme.CRANK_NICOLSON


def test_run_config_rejects_zero_workers():
    with pytest.raises(Exception):
        RunConfig(workers=0)


def test_inline_scenario_mapping(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text(
        "scenario:\n"
        "  name: free_gaussian\n"
        "  params:\n"
        "    k0: 1.5\n"
        "    points: 256\n"
        "params:\n"
        "  points: 128\n"
    )
    config = load_config(path)
    assert config.scenario == 'free_gaussian'
    assert config.params == {'k0': 1.5, 'points': 128}
    assert config == parse_config({'scenario': 'free_gaussian', 'params': {'k0': 1.5, 'points': 128}})


def test_inline_scenario_errors_name_their_key():
    with pytest.raises(ConfigError) as info:
        parse_config({'scenario': {'params': {'k0': 1.0}}})
    assert info.value.key == 'scenario.name'
    with pytest.raises(ConfigError) as info:
        parse_config({'scenario': {'name': 'free_gaussian', 'grid': 64}})
    assert info.value.key == 'scenario.grid'
    with pytest.raises(ConfigError, match='unknown parameter'):
        parse_config({'scenario': {'name': 'ho_ground', 'params': {'k0': 1.0}}})
