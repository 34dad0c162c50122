import json

import numpy as np
import pytest

from tinyad.audit import (
    activation_memory, audit_model, count_macs, count_params, depthwise_inplace_elements,
    depthwise_naive_elements, depthwise_tinyad_elements, mode_macs,
)
from tinyad.configs import config, dw_cnn, dw_trunk, regular_conv, single_depthwise
from tinyad.modelio import ModelSpec
from tinyad.tensor import Shape


def test_regular_conv_weight_count():
    m = ModelSpec(Shape(1, (1200,)), [regular_conv(np.random.default_rng(0), 1, 32, (3,))])
    assert count_params(m).weights == [96]
    assert count_params(m).biases == [32]


def test_separable_pair_weight_count():
    m = dw_trunk(config("SWaT(2)"))
    p = count_params(m)
    assert p.weights[1] + p.weights[2] == 32 * (64 + 3) == 2144


def test_trunk_macs():
    assert count_macs(dw_trunk(config("SWaT(2)"))) == [1198 * 32 * 3, 1196 * 32 * 3, 1196 * 32 * 64]
    assert count_macs(dw_trunk(config("SWaT(2)"))) == [115_008, 114_816, 2_449_408]


def test_closed_form_depthwise_helpers():
    assert depthwise_naive_elements(4, 1, 10, 8, 3) == 84
    assert depthwise_inplace_elements(4, 1, 10, 8, 3) == 62
    assert depthwise_tinyad_elements(4, 1, 10, 8, 3, 1) == 62


@pytest.mark.parametrize("n", [1, 4, 16, 64, 256, 1024])
def test_inplace_reduction_bounded_by_two(n):
    m = single_depthwise(n, 300, kernel=1)
    ratio = (activation_memory(m, "naive").closed_form_peak_elements
             / activation_memory(m, "inplace").closed_form_peak_elements)
    assert ratio <= 2.0


def test_inplace_reduction_approaches_two():
    ratios = [depthwise_naive_elements(n, 1, 1196, 1196, 3) / depthwise_inplace_elements(n, 1, 1196, 1196, 3)
              for n in (16, 128, 1024)]
    assert ratios == sorted(ratios)
    assert 1.99 <= ratios[-1] <= 2.0


def test_dominant_layer_is_argmax():
    m = dw_cnn(config("SWaT(3)"))
    for mode in ("naive", "inplace", "patch:3", "tinyad:3"):
        plan = activation_memory(m, mode)
        live = [l.live_bytes for l in plan.layers]
        assert plan.dominant_layer == int(np.argmax(live))
        assert plan.peak_bytes == max(live)


def test_mode_macs_patch_overhead_small():
    m = dw_cnn(config("SWaT(2)"))
    naive = mode_macs(m, "naive")
    patched = mode_macs(m, "patch:3")
    assert 0 < patched - naive <= 0.01 * naive


def test_audit_report_table_and_json():
    m = dw_cnn(config("SKAB"))
    audit = audit_model(m, ["naive", "tinyad"], m=3, budget=65_536, f1=0.5)
    table = audit.table()
    for col in ("MACs(M)", "Model Size(kB)", "PeakMem(kB)-float32", "Budget", "kB = 1000 bytes"):
        assert col in table
    d = json.loads(json.dumps(audit.to_dict(), default=float))
    assert set(d["modes"]) == {"naive", "tinyad:3"}
    assert d["totals"]["macs"] == sum(count_macs(m))
    assert d["modes"]["tinyad:3"]["peak_bytes"] < d["modes"]["naive"]["peak_bytes"]
    assert audit.model_bytes == 4 * count_params(m).total


def test_budget_flag():
    m = dw_trunk(config("SKAB"))
    plan = activation_memory(m, "tinyad:3", budget=10)
    assert not plan.within_budget
    assert activation_memory(m, "tinyad:3", budget=10**9).within_budget
