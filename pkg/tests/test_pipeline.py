import logging

import numpy as np
import pytest

from tinyad.configs import DatasetConfig, dw_cnn
from tinyad.errors import IngestionError, ShapeError
from tinyad.modelio import Dense, ModelSpec
from tinyad.pipeline import (
    FeatureGeometry, confusion, detect, evaluate, from_arrays, load_csv, predict_series, select_threshold,
    synthetic_series, threshold_candidates, write_csv,
)
from tinyad.tensor import Shape

TINY = DatasetConfig("tiny", (3,), 4, 8, 64, pool=(10,))


def write_rows(path, rows, header="timestamp,value,label"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def copy_last(window):
    w = np.zeros(window, np.float32)
    w[-1] = 1
    return ModelSpec(Shape(1, (window,)), [Dense(1, w, np.zeros(1, np.float32))])


def test_ten_rows_split(tmp_path):
    ds = load_csv(write_rows(tmp_path / "a.csv", [f"{i},{i * 0.5},{i % 2}" for i in range(10)]))
    assert ds.split_sizes == (6, 1, 3)
    assert ds.labels.tolist() == [0, 1] * 5


def test_iso_timestamps(tmp_path):
    rows = ["2024-01-01T00:00:00,1.0,0", "2024-01-01T00:00:01,2.0,1"]
    ds = load_csv(write_rows(tmp_path / "a.csv", rows))
    assert ds.timestamps[1] - ds.timestamps[0] == 1


@pytest.mark.parametrize("rows,row_no", [
    (["0,1,0", "1,1,0", "1,2,0"], 4),
    (["0,1,0", "1,1,2"], 3),
    (["0,1,0", "1,x,0"], 3),
    (["0,1,0", "1,1"], 3),
    (["5,1,0", "4,1,0"], 3),
])
def test_ingestion_errors_name_row(tmp_path, rows, row_no):
    with pytest.raises(IngestionError) as exc:
        load_csv(write_rows(tmp_path / "bad.csv", rows))
    assert exc.value.row == row_no
    assert f"row {row_no}" in str(exc.value)


def test_empty_and_headerless(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(IngestionError):
        load_csv(tmp_path / "e.csv")
    with pytest.raises(IngestionError):
        load_csv(write_rows(tmp_path / "h.csv", ["0,1,0"], header="t,v,l"))
    with pytest.raises(IngestionError):
        load_csv(write_rows(tmp_path / "n.csv", []))


def test_large_file_split(tmp_path):
    n = 450_000
    ds = from_arrays(np.zeros(n))
    write_csv(tmp_path / "big.csv", ds)
    assert load_csv(tmp_path / "big.csv").split_sizes == (270_000, 45_000, 135_000)


def test_constant_zero_predictor():
    model = ModelSpec(Shape(1, (8,)), [Dense(1, np.zeros(8, np.float32), np.zeros(1, np.float32))])
    scores = predict_series(model, from_arrays(np.zeros(30)))
    assert np.all(np.isnan(scores[:8]))
    assert np.all(scores[8:] == 0)


def test_copy_last_sample_model(rng):
    y = rng.standard_normal(50)
    scores = predict_series(copy_last(5), from_arrays(y))
    oracle = [abs(np.float32(y[t - 1]) - y[t]) for t in range(5, 50)]
    np.testing.assert_allclose(scores[5:], oracle, rtol=1e-12)
    sq = predict_series(copy_last(5), from_arrays(y), error="squared")
    np.testing.assert_allclose(sq[5:], np.square(oracle), rtol=1e-12)


def test_geometry_mismatch():
    with pytest.raises(ShapeError):
        predict_series(copy_last(5), from_arrays(np.zeros(50)), window=6)
    with pytest.raises(ShapeError):
        predict_series(copy_last(5), from_arrays(np.zeros(4)))


def test_feature_matrix_input(rng):
    geom = FeatureGeometry(subwindow=16, stride=8)
    cols = (48 - 16) // 8 + 1
    n_in = 22 * cols
    model = ModelSpec(Shape(1, (22, cols)), [Dense(1, rng.standard_normal(n_in).astype(np.float32) * 0.01,
                                                   np.zeros(1, np.float32))])
    scores = predict_series(model, synthetic_series(120), window=48, geometry=geom)
    assert np.all(np.isnan(scores[:48])) and np.all(np.isfinite(scores[48:]))


def test_scores_mode_invariant():
    model = dw_cnn(TINY, seed=4)
    ds = synthetic_series(400, seed=1)
    a = predict_series(model, ds, "naive")
    b = predict_series(model, ds, "tinyad:3")
    assert np.nanmax(np.abs(a - b)) <= 1e-5


def test_parallel_scores_identical(monkeypatch):
    model = dw_cnn(TINY, seed=4)
    ds = synthetic_series(300, seed=2)
    seq = predict_series(model, ds, workers=1)
    monkeypatch.setenv("TINYAD_THREADS", "3")
    par = predict_series(model, ds, workers=8)
    assert seq.tobytes() == par.tobytes()


def test_threshold_example():
    assert select_threshold([0.1, 0.9, 0.2], [0, 1, 0]) == pytest.approx(0.55)


def test_threshold_without_positives_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert select_threshold([0.1, 0.9, 0.2], [0, 0, 0]) == 0.9
    assert "no labelled anomalies" in caplog.text


def f1_at(scores, labels, tau):
    tp, fp, fn, _ = confusion(scores > tau, labels == 1)
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def test_threshold_is_optimal_against_sweep():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(5, 60))
        scores = np.round(rng.random(n), 2)
        labels = (rng.random(n) < 0.3).astype(int)
        labels[0] = 1
        tau = select_threshold(scores, labels)
        best = max(f1_at(scores, labels, c) for c in threshold_candidates(scores))
        assert f1_at(scores, labels, tau) == pytest.approx(best)
        ties = [c for c in threshold_candidates(scores) if f1_at(scores, labels, c) == pytest.approx(best)]
        assert tau == max(ties)


def test_evaluate_examples(rng):
    r = evaluate([0.1, 0.9, 0.2, 0.8], [0, 1, 0, 1], 0.5)
    assert (r.precision, r.recall, r.f1) == (1, 1, 1)
    r = evaluate([0.1, 0.2], [1, 0], 0.5)
    assert (r.recall, r.f1) == (0, 0)
    scores = rng.random(200)
    labels = (rng.random(200) < 0.2).astype(int)
    r = evaluate(scores, labels, 0.6)
    tp = sum(1 for s, y in zip(scores, labels) if s > 0.6 and y)
    fp = sum(1 for s, y in zip(scores, labels) if s > 0.6 and not y)
    fn = sum(1 for s, y in zip(scores, labels) if s <= 0.6 and y)
    assert r.precision == tp / (tp + fp) and r.recall == tp / (tp + fn)
    assert r.f1 == pytest.approx(2 * r.precision * r.recall / (r.precision + r.recall))
    assert np.array_equal(r.predicted, (scores > 0.6).astype(np.int8))


def test_threshold_ignores_test_segment():
    model = copy_last(5)
    ds = synthetic_series(500, seed=3)
    _, before = detect(model, ds)
    lo = ds.val_end
    ds.values[lo:] = 0.0
    ds.labels[lo:] = 1
    _, after = detect(model, ds)
    assert before.threshold == after.threshold


def test_detect_copy_last_finds_spikes():
    ds = synthetic_series(3000, seed=8, anomaly_rate=0.01, noise=0.02)
    _, result = detect(copy_last(10), ds)
    assert result.f1 > 0.5
