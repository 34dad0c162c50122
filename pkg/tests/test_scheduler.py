import numpy as np
import pytest

from tinyad.audit import activation_memory, mode_macs, patch_overhead_macs
from tinyad.configs import DATASET_CONFIGS, config, dw_cnn, dw_trunk, random_model, regular_conv, single_depthwise
from tinyad.errors import BudgetError, PlanError, ShapeError
from tinyad.kernels import depthwise_conv
from tinyad.modelio import Dense, ModelSpec, Relu, save_model
from tinyad.scheduler import (
    INPLACE, NAIVE, ArenaModel, ExecMode, PatchOnly, TinyAD, execute, inplace_depthwise, plan_patches,
    stitch_outputs,
)
from tinyad.scheduler.executor import execute_trunk_patch
from tinyad.tensor import Shape, Tensor, max_abs_diff


def rand_input(model, seed=0):
    s = model.input_shape
    return Tensor(s, np.random.default_rng(seed).standard_normal(s.element_count))


def ranges(regions, axis=0):
    return [r.ranges[axis] for r in regions]


def test_plan_single_conv_two_patches():
    m = ModelSpec(Shape(1, (10,)), [regular_conv(np.random.default_rng(0), 1, 1, (3,))])
    plan = plan_patches(m, 2)
    assert plan.output_ranges == [(0, 4), (4, 8)]
    assert ranges(plan.input_fields) == [(0, 6), (4, 10)]
    assert plan.overlaps[1][0] == 2


def test_plan_two_conv_layers_length_1200():
    rng = np.random.default_rng(0)
    m = ModelSpec(Shape(1, (1200,)), [regular_conv(rng, 1, 32, (3,)), regular_conv(rng, 32, 64, (3,))])
    plan = plan_patches(m, 3)
    assert plan.output_ranges == [(0, 399), (399, 798), (798, 1196)]
    assert plan.describe() == "[0,403), [399,802), [798,1200)"


def test_plan_trunk_config_fields():
    assert plan_patches(dw_trunk(config("SWaT(2)")), 3).describe() == "[0,403), [399,802), [798,1200)"


def test_plan_one_patch_is_whole_input():
    m = dw_trunk(config("SKAB"))
    plan = plan_patches(m, 1)
    assert ranges(plan.input_fields) == [(0, 1200)]
    assert all(o == 0 for o in plan.overlaps[0])


def test_plan_rejects_too_many_patches():
    m = ModelSpec(Shape(1, (5,)), [regular_conv(np.random.default_rng(0), 1, 1, (3,))])
    with pytest.raises(PlanError):
        plan_patches(m, 4)


def test_plan_splits_2d_along_time_axis():
    m = dw_trunk(config("Yahoo"))
    plan = plan_patches(m, 3)
    assert plan.axis == 1
    for region in plan.input_fields:
        assert region.ranges[0] == (0, 22)


def test_inplace_memory_formula_case():
    m = single_depthwise(4, 10, kernel=3)
    naive = activation_memory(m, "naive")
    inplace = activation_memory(m, "inplace")
    assert naive.closed_form_peak_elements == 4 * 10 + 4 * 8 + 4 * 3 == 84
    assert inplace.closed_form_peak_elements == 5 * 10 + 4 * 3 == 62


@pytest.mark.parametrize("mult", [1, 2, 3])
def test_inplace_depthwise_matches_kernel(mult, rng):
    m = single_depthwise(3, 17, kernel=4, multiplier=mult, seed=3)
    layer = m.layers[0]
    x = rng.standard_normal((3, 17)).astype(np.float32)
    stored, perm = inplace_depthwise(x, layer)
    assert np.array_equal(stored[perm], depthwise_conv(x, layer))


def test_inplace_single_channel_bit_exact(rng):
    layer = single_depthwise(1, 9, kernel=3).layers[0]
    x = rng.standard_normal((1, 9)).astype(np.float32)
    stored, perm = inplace_depthwise(x, layer)
    assert np.array_equal(stored[perm], depthwise_conv(x, layer))


def test_inplace_buffer_too_small(rng):
    layer = single_depthwise(2, 10, kernel=3, multiplier=2).layers[0]
    with pytest.raises(PlanError):
        inplace_depthwise(rng.standard_normal((2, 10)).astype(np.float32), layer, buffer_elems=15)


def test_inplace_live_bytes_bound(rng):
    n, mult, s_i, k = 5, 2, 12, 3
    m = single_depthwise(n, s_i, kernel=k, multiplier=mult)
    res = execute(m, rand_input(m), INPLACE)
    s_o = s_i - k + 1
    bound = ((n + 1) * max(s_i, mult * s_o) + mult * n * k + mult * n) * 4
    assert res.measured_peak <= bound


@pytest.mark.parametrize("cfg", DATASET_CONFIGS, ids=lambda c: c.name)
@pytest.mark.parametrize("mode", [INPLACE, PatchOnly(3), TinyAD(3), TinyAD(5)], ids=str)
def test_modes_match_naive_on_configs(cfg, mode):
    model = dw_cnn(cfg, multiplier=2 if cfg.rank == 1 else 1)
    x = rand_input(model)
    ref = execute(model, x, NAIVE)
    res = execute(model, x, mode)
    assert max_abs_diff(ref.output, res.output) <= 1e-5
    assert res.measured_peak == activation_memory(model, mode).peak_bytes
    assert res.mac_count == mode_macs(model, mode)


def test_patch_mode_without_conv_layers_is_naive():
    rng = np.random.default_rng(0)
    m = ModelSpec(Shape(1, (16,)), [Relu(), Dense(4, rng.standard_normal(64).astype(np.float32),
                                                 np.zeros(4, np.float32))])
    x = rand_input(m)
    a, b = execute(m, x, NAIVE), execute(m, x, PatchOnly(3))
    assert a.output == b.output
    assert a.measured_peak == b.measured_peak


def test_degenerate_single_patch_matches_layerwise():
    m = dw_cnn(config("SKAB"))
    x = rand_input(m)
    assert execute(m, x, TinyAD(1)).measured_peak == execute(m, x, INPLACE).measured_peak
    assert execute(m, x, PatchOnly(1)).measured_peak == execute(m, x, NAIVE).measured_peak


def test_stitching_reproduces_trunk_output():
    m = dw_trunk(config("SWaT(2)"), multiplier=2)
    x = rand_input(m)
    plan = plan_patches(m, 4)
    stitched = stitch_outputs([execute_trunk_patch(m, x, plan, p) for p in range(4)], plan)
    assert max_abs_diff(stitched, execute(m, x, NAIVE).output) <= 1e-5


def test_stitch_identity_and_mismatch(rng):
    m = ModelSpec(Shape(1, (10,)), [regular_conv(rng, 1, 2, (3,))])
    one = plan_patches(m, 1)
    t = Tensor(Shape(2, (8,)), rng.standard_normal(16))
    assert stitch_outputs([t], one) == t
    two = plan_patches(m, 2)
    halves = [Tensor.from_array(t.array[:, :4]), Tensor.from_array(t.array[:, 4:])]
    assert stitch_outputs(halves, two) == t
    with pytest.raises(ShapeError):
        stitch_outputs([halves[0], Tensor.from_array(t.array[:, :3])], two)


def test_patch_overhead_equals_counter():
    m = dw_trunk(config("SWaT(3)"))
    x = rand_input(m)
    extra = execute(m, x, PatchOnly(3)).mac_count - execute(m, x, NAIVE).mac_count
    assert extra == patch_overhead_macs(m, plan_patches(m, 3)) > 0


@pytest.mark.parametrize("cfg", DATASET_CONFIGS, ids=lambda c: c.name)
def test_peak_monotonicity_on_trunks(cfg):
    m = dw_trunk(cfg)
    x = rand_input(m)
    naive = execute(m, x, NAIVE).measured_peak
    peaks = {}
    for k in (2, 3, 4):
        patch = execute(m, x, PatchOnly(k)).measured_peak
        tiny = execute(m, x, TinyAD(k)).measured_peak
        assert tiny <= patch <= naive
        peaks[k] = patch
    assert peaks[4] <= peaks[3] <= peaks[2]


def test_budget_error_names_layer():
    m = dw_trunk(config("SKAB"))
    with pytest.raises(BudgetError) as exc:
        execute(m, rand_input(m), NAIVE, arena=ArenaModel(budget=20_000))
    assert exc.value.layer_index is not None
    assert f"layer {exc.value.layer_index}" in str(exc.value)


def test_budget_met_runs_clean():
    m = dw_trunk(config("SKAB"))
    peak = execute(m, rand_input(m), TinyAD(3)).measured_peak
    execute(m, rand_input(m), TinyAD(3), arena=ArenaModel(budget=peak))


@pytest.mark.parametrize("mode", [NAIVE, INPLACE, PatchOnly(3), TinyAD(3)], ids=str)
def test_one_layer_of_parameters_resident(mode, tmp_path):
    m = dw_cnn(config("SWaT(2)"))
    path = tmp_path / "m.json"
    save_model(m, path)
    x = rand_input(m)
    res = execute(m, x, mode, source=path)
    largest = max(l.param_bytes for l in m.layers)
    assert max(res.arena.param_trace()) <= largest
    assert all(s.resident_peak <= largest for s in res.streams)
    assert res.output == execute(m, x, mode).output


def test_random_models_all_modes():
    rng = np.random.default_rng(99)
    for _ in range(25):
        m_count = int(rng.choice([2, 3]))
        model = random_model(rng, max_length=200, m=m_count)
        x = rand_input(model, seed=int(rng.integers(1 << 30)))
        ref = execute(model, x, NAIVE)
        for mode in (INPLACE, PatchOnly(m_count), TinyAD(m_count)):
            res = execute(model, x, mode)
            assert max_abs_diff(ref.output, res.output) <= 1e-5
            assert res.measured_peak == activation_memory(model, mode).peak_bytes


def test_mode_parsing():
    assert ExecMode.parse("tinyad:3") == TinyAD(3)
    assert ExecMode.parse("patch", 2) == PatchOnly(2)
    assert ExecMode.parse("naive", 5) == NAIVE
    assert str(TinyAD(4)) == "tinyad:4"
    with pytest.raises(ValueError):
        ExecMode.parse("fast")
    with pytest.raises(PlanError):
        ExecMode("patch", 0)
