import math

import pytest

from engine.metrics import EVAL_BATCH, MetricsRecord, cumulative_loss, records_to_frame, summarize


def _train(epoch, batch, cost, r_str=0.5):
    return MetricsRecord(epoch, batch, cost, None, r_str, None, 1.0)


def _eval(epoch, accuracy, r_jac=0.3):
    return MetricsRecord(epoch, EVAL_BATCH, 0.1, accuracy, 0.5, r_jac, 2.0)


def _history(n_epochs):
    records = []
    for epoch in range(1, n_epochs + 1):
        records += [_train(epoch, 0, 1.0), _train(epoch, 1, 2.0), _eval(epoch, 0.1 * epoch)]
    return records


def test_record_bounds():
    with pytest.raises(ValueError):
        MetricsRecord(1, 0, 1.0, 1.5, 0.1, None, 0.0)
    with pytest.raises(ValueError):
        MetricsRecord(1, 0, 1.0, None, 1.2, None, 0.0)
    assert math.isnan(MetricsRecord(1, 0, 1.0, None, float("nan"), None, 0.0).r_str)
    assert _eval(1, 0.5).is_eval and not _train(1, 0, 1.0).is_eval


def test_cumulative_loss_uses_first_five_epochs_of_training_rows():
    assert cumulative_loss(_history(7)) == pytest.approx(15.0)
    assert cumulative_loss(_history(2)) == pytest.approx(6.0)
    assert cumulative_loss(_history(7), n_epochs=1) == pytest.approx(3.0)
    assert cumulative_loss([]) == 0.0


def test_summarize():
    summary = summarize(_history(3))
    assert summary.epochs == 3
    assert summary.batches == 6
    assert summary.final_accuracy == pytest.approx(0.3)
    assert summary.best_accuracy == pytest.approx(0.3)
    assert summary.final_r_str == 0.5
    assert summary.final_r_jac == pytest.approx(0.3)


def test_summarize_frame_and_empty():
    frame = records_to_frame(_history(2))
    assert list(frame.columns) == ["epoch", "batch", "cost", "accuracy", "r_str", "r_jac", "wall_ms"]
    assert summarize(frame).cumulative_loss == pytest.approx(6.0)
    training_only = summarize([_train(1, 0, 1.0)])
    assert math.isnan(training_only.final_accuracy)
    assert training_only.final_r_jac is None
    with pytest.raises(ValueError):
        summarize([])
