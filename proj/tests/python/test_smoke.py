import math

import pytest

import invagg


def test_fedavg_and_trimmed_mean():
    g = [[1.0, 1.0], [3.0, 3.0]]
    assert invagg.fedavg(g) == [2.0, 2.0]
    assert invagg.fedavg([[0.0], [4.0]], sample_counts=[1, 3]) == [3.0]
    assert invagg.trimmed_mean([[1.0], [2.0], [3.0], [4.0], [100.0]], 0.2) == [3.0]
    assert invagg.trim_count(10, 0.25) == 3


def test_invariant_masks_inconsistent_coordinates():
    g = [[1.0, 2.0], [1.0, -2.0], [1.0, 3.0], [1.0, -3.0]]
    assert invagg.and_mask(g, 0.5) == [1, 0]
    out = invagg.invariant_aggregate(g, 0.5, 0.0)
    assert out == [1.0, 0.0]
    assert invagg.sign_consistency(g) == [1.0, 0.0]


def test_aggregate_dispatch():
    g = [[0.0], [0.1], [0.2], [0.3], [5.0]]
    value, mask = invagg.aggregate(g, {"kind": "krum", "num_byzantine": 1})
    assert value == [0.2] and mask is None
    value, mask = invagg.aggregate(g, {"kind": "invariant", "tau": 0.2, "alpha": 0.2})
    assert mask == [1]
    assert value == pytest.approx([0.2])
    assert "multi_krum_cosine" in invagg.aggregator_kinds()


def test_validation_error_names_field():
    with pytest.raises(invagg.ValidationError, match="aggregator.tau"):
        invagg.aggregate([[1.0]], {"tau": 1.5})
    with pytest.raises(ValueError):
        invagg.resolve_config({"training": {"rounds": 0}})


def test_presets_and_run():
    assert "appendix_d1_invariant" in invagg.preset_names()
    cfg = invagg.preset("appendix_d1_invariant")
    assert cfg["aggregator"]["kind"] == "invariant"
    result = invagg.run(cfg)
    w = result["summary"]["final_weights"]
    assert abs(w[1]) < 0.1
    assert w[0] > 1.0
    assert len(result["rounds"]) == 50
    assert result["config"] == invagg.resolve_config(cfg)

    attacked = invagg.run(cfg, overrides=["aggregator.kind=fedavg", "training.rounds=50"])
    assert attacked["summary"]["final_weights"][1] > 0.3


def test_run_is_deterministic():
    cfg = invagg.resolve_config(overrides=["training.rounds=5"])
    assert invagg.run(cfg) == invagg.run(cfg)


def test_client_data():
    x, y, malicious = invagg.appendix_d1_client_data(3, 9)
    assert malicious
    assert len(x) == len(y) == 500
    assert set(y) <= {0, 1}
    x0, _, benign_flag = invagg.appendix_d1_client_data(3, 0)
    assert not benign_flag
    with pytest.raises(IndexError):
        invagg.appendix_d1_client_data(3, 10)


def test_bound_checks():
    alpha = invagg.theorem1_alpha(200, 0.01, 0.1)
    assert alpha == pytest.approx(0.08 + 12 * math.log(40) / 200)
    rep = invagg.check_theorem1(200, 0.01, 0.1, 2.0, trials=500)
    assert rep["passed"]

    bound = invagg.theorem2_bound(2.0, 1, 0, 0)
    assert bound["raw"] == 0.25
    with pytest.raises(ValueError):
        invagg.theorem2_bound(0.0, 10, 2, 2)
    rep = invagg.check_theorem2(3.0, 10, 2, 2, trials=1000)
    assert rep["violation_rate"] <= rep["theoretical_bound"]

    t3 = invagg.check_theorem3([1.0], [1.0], [-0.5], 0, samples=100000)
    assert t3["status"] == "agree"

    c1 = invagg.check_corollary1([1.0, 0.0], samples=200000)
    assert c1["measured_q"] == pytest.approx(0.2, abs=1e-12)
