import numpy as np
import pytest

from ctrlpinn.network import (
    ADJOINT_LAYERS,
    CONTROL_LAYERS,
    HIDDEN_WIDTH,
    TRUNK_LAYERS,
    ArchitectureConfig,
    ControlPinnParams,
    forward,
    forward_values,
    init_params,
    layer_dims,
    load_params,
    save_params,
)


def test_init_is_deterministic_per_seed():
    config = ArchitectureConfig(spatial_dim=1)
    a = init_params(config, seed=42).to_flat()
    b = init_params(config, seed=42).to_flat()
    c = init_params(config, seed=43).to_flat()
    assert np.array_equal(a, b)
    assert np.any(a != c)


def test_init_glorot_bounds_and_zero_biases():
    config = ArchitectureConfig(spatial_dim=1)
    params = init_params(config, seed=7)
    for _, dense in params.layers():
        n_out, n_in = dense.w.shape
        limit = np.sqrt(6.0 / (n_in + n_out))
        assert np.all(np.abs(dense.w) <= limit)
        assert np.all(dense.b == 0.0)


def test_zero_parameters_give_zero_outputs():
    config = ArchitectureConfig(spatial_dim=1)
    params = ControlPinnParams.from_flat(config, np.zeros(init_params(config, 0).num_params))
    y, u, lam = forward(params, 0.3, [0.5])
    assert np.all(y == 0.0) and np.all(u == 0.0) and np.all(lam == 0.0)


def test_trunk_perturbation_propagates_to_control_and_adjoint():
    config = ArchitectureConfig(spatial_dim=1)
    params = init_params(config, seed=2)
    _, u0, lam0 = forward(params, 0.4, [0.6])
    params.trunk[0].w[3, 1] += 1e-3
    _, u1, lam1 = forward(params, 0.4, [0.6])
    assert abs(u1[0] - u0[0]) > 0.0
    assert abs(lam1[0] - lam0[0]) > 0.0


def test_forward_without_space_accepts_time_alone():
    params = init_params(ArchitectureConfig(spatial_dim=0), seed=1)
    y, u, lam = forward(params, 0.25)
    assert y.shape == (1,) and u.shape == (1,) and lam.shape == (1,)


def test_output_widths_follow_config():
    params = init_params(ArchitectureConfig(spatial_dim=2, n_y=2, n_u=1), seed=1)
    y, u, lam = forward_values(params, [0.1, 0.9], [[0.3, 0.4], [0.6, 0.7]])
    assert y.shape == (2, 2)
    assert u.shape == (1, 2)
    assert lam.shape == (2, 2)


def test_lambda_head_width_equals_state_width():
    for config in (
        ArchitectureConfig(0, 1, 1),
        ArchitectureConfig(1, 1, 1),
        ArchitectureConfig(2, 2, 1),
    ):
        params = init_params(config, seed=0)
        assert params.lam_head.w.shape[0] == config.n_y


def test_architecture_constant_across_benchmarks():
    # the three benchmark configs differ only in input/output widths
    shapes = []
    for config in (
        ArchitectureConfig(0, 1, 1),
        ArchitectureConfig(1, 1, 1),
        ArchitectureConfig(2, 2, 1),
    ):
        dims = layer_dims(config)
        hidden = [(label, n_out) for label, n_out, _ in dims if not label.endswith("head")]
        shapes.append(hidden)
        branch_counts = {
            "trunk": sum(1 for label, _ in hidden if label.startswith("trunk")),
            "control": sum(1 for label, _ in hidden if label.startswith("control")),
            "adjoint": sum(1 for label, _ in hidden if label.startswith("adjoint")),
        }
        assert branch_counts == {"trunk": TRUNK_LAYERS, "control": CONTROL_LAYERS, "adjoint": ADJOINT_LAYERS}
        assert all(n_out == HIDDEN_WIDTH for _, n_out in hidden)
    assert shapes[0] == shapes[1] == shapes[2]


def test_flat_round_trip_bitwise():
    config = ArchitectureConfig(spatial_dim=2, n_y=2, n_u=1)
    params = init_params(config, seed=5)
    flat = params.to_flat()
    rebuilt = ControlPinnParams.from_flat(config, flat)
    assert np.array_equal(rebuilt.to_flat(), flat)


def test_checkpoint_round_trip_bitwise(tmp_path):
    config = ArchitectureConfig(spatial_dim=1)
    params = init_params(config, seed=11)
    path = tmp_path / "params.json"
    save_params(path, params, extra={"note": 1})
    loaded, extra = load_params(path)
    assert np.array_equal(loaded.to_flat(), params.to_flat())
    assert loaded.config == config
    assert extra == {"note": 1}


def test_load_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "other/9", "architecture": {}, "params": []}')
    with pytest.raises(ValueError):
        load_params(path)


def test_config_validation():
    with pytest.raises(ValueError):
        ArchitectureConfig(spatial_dim=-1)
    with pytest.raises(ValueError):
        ArchitectureConfig(spatial_dim=1, n_y=0)
