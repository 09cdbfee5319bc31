import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgmamba import checkpoint
from ecgmamba import tensor as T
from ecgmamba.config import ConfigError, parse_config
from ecgmamba.dataio import Corpus, synth_generate
from ecgmamba.model import Model
from ecgmamba.train import (
    AdamState,
    EpochRow,
    TrainConfig,
    adam_step,
    evaluate,
    lr_at,
    prepare_signals,
    read_log,
    train_loop,
)


@pytest.fixture
def corpus():
    records, lmap = synth_generate(12, 3, 0, lengths=(120, 200))
    return Corpus(records, lmap)


# ---------------------------------------------------------------- schedule


def test_lr_endpoints_exact():
    assert lr_at(0) == 1e-5
    assert lr_at(5) == 6e-4
    assert lr_at(18) == 1e-6
    assert lr_at(40) == 1e-6


def test_lr_midpoints():
    assert lr_at(2.5) == pytest.approx(1e-5 + 0.5 * (6e-4 - 1e-5), abs=1e-18)
    assert lr_at(11.5) == pytest.approx(1e-6 + 0.5 * 5.99e-4, abs=1e-18)


def test_lr_continuous_at_peak():
    assert abs(lr_at(5 - 1e-12) - lr_at(5)) < 1e-12
    assert abs(lr_at(5 + 1e-12) - lr_at(5)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0, 18), b=st.floats(0, 18))
def test_lr_monotone_segments(a, b):
    lo, hi = min(a, b), max(a, b)
    if hi <= 5:
        assert lr_at(lo) <= lr_at(hi)
    elif lo >= 5:
        assert lr_at(lo) >= lr_at(hi)
    assert 1e-6 <= lr_at(lo) <= 6e-4


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(total_epochs=20)
    with pytest.raises(ValueError):
        TrainConfig(min_lr=1e-3)
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


# ---------------------------------------------------------------- adam


def test_adam_first_step():
    p = {"w": T.Tensor([0.0], requires_grad=True)}
    p["w"].grad = np.array([1.0])
    adam_step(p, AdamState(), 0.1)
    assert p["w"].data[0] == pytest.approx(-0.1 / (1 + 1e-9), abs=1e-15)


def test_adam_zero_grad_is_noop():
    w = np.array([0.3, -1.2])
    p = {"w": T.Tensor(w.copy(), requires_grad=True)}
    state = AdamState()
    for _ in range(3):
        p["w"].grad = np.zeros(2)
        adam_step(p, state, 0.1)
    assert np.array_equal(p["w"].data, w)
    assert state.t == 3


def test_adam_identical_histories_identical_updates(rng):
    p = {"a": T.Tensor([1.0, 2.0], requires_grad=True), "b": T.Tensor([1.0, 2.0], requires_grad=True)}
    state = AdamState()
    for _ in range(5):
        g = rng.normal(size=2)
        p["a"].grad, p["b"].grad = g.copy(), g.copy()
        adam_step(p, state, 0.01)
    assert np.array_equal(p["a"].data, p["b"].data)


def test_adam_nan_names_parameter():
    p = {"blocks.0.in_proj": T.Tensor([1.0], requires_grad=True)}
    p["blocks.0.in_proj"].grad = np.array([np.nan])
    with pytest.raises(FloatingPointError, match="blocks.0.in_proj"):
        adam_step(p, AdamState(), 0.1)
    assert p["blocks.0.in_proj"].data[0] == 1.0


# ---------------------------------------------------------------- loop


def one_epoch(batch_size=4, seed=0):
    return TrainConfig(warmup_epochs=0, cosine_epochs=1, total_epochs=1, batch_size=batch_size, seed=seed)


def test_step_count(tiny_config, corpus):
    ids = corpus.ids[:8]
    result = train_loop(Model.init(tiny_config, 0), corpus, ids, corpus.ids[8:], one_epoch())
    assert result.steps == 2 and len(result.step_losses) == 2
    assert len(result.rows) == 1


def test_first_loss_near_ln2(tiny_config, corpus):
    result = train_loop(Model.init(tiny_config, 0), corpus, corpus.ids, [], one_epoch())
    assert abs(result.step_losses[0] - math.log(2)) < 0.1


def test_loop_is_deterministic(tiny_config, corpus, tmp_path):
    cfg = TrainConfig(warmup_epochs=1, cosine_epochs=1, total_epochs=2, batch_size=4, seed=3)
    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        train_loop(Model.init(tiny_config, 3), corpus, corpus.ids[:8], corpus.ids[8:], cfg, out)
        runs.append(out)
    for f in ("train_log.tsv", "final.ckpt", "best.ckpt"):
        assert (runs[0] / f).read_bytes() == (runs[1] / f).read_bytes()


def test_log_and_checkpoint_reproduce_metrics(tiny_config, corpus, tmp_path):
    cfg = TrainConfig(warmup_epochs=1, cosine_epochs=1, total_epochs=2, batch_size=4, seed=1)
    fit, val = corpus.ids[:8], corpus.ids[8:]
    result = train_loop(Model.init(tiny_config, 1), corpus, fit, val, cfg, tmp_path)
    rows = read_log(result.paths["log"])
    assert rows == result.rows
    assert [r.lr for r in rows] == [lr_at(0, cfg), lr_at(1, cfg)]
    loaded = checkpoint.load(result.paths["final"])
    report = evaluate(loaded, prepare_signals(corpus), dict(zip(corpus.ids, corpus.labels())), val)
    assert (report.macro_auprc, report.macro_auroc) == (rows[-1].val_auprc, rows[-1].val_auroc)


def test_loop_errors(tiny_config, corpus):
    with pytest.raises(ValueError):
        train_loop(Model.init(tiny_config, 0), corpus, [], corpus.ids, one_epoch())
    wrong = Model.init(tiny_config.__class__(**{**tiny_config.to_dict(), "n_classes": 5}), 0)
    with pytest.raises(ValueError):
        train_loop(wrong, corpus, corpus.ids, [], one_epoch())


def test_epoch_row_round_trip():
    row = EpochRow(3, 1.234e-4, 0.5, float("nan"), 0.75)
    back = EpochRow.from_line(row.to_line())
    assert back.epoch == 3 and back.lr == row.lr and math.isnan(back.val_auprc)
    with pytest.raises(ValueError):
        EpochRow.from_line("1\t2\t3")


# ---------------------------------------------------------------- config file


def test_parse_config():
    cfg = parse_config("# comment\nd_model = 32\nn_blocks=4  # inline\npeak_lr = 1e-3\nfolds = 3\n")
    assert cfg.model == {"d_model": 32, "n_blocks": 4}
    assert cfg.train_config().peak_lr == 1e-3
    assert cfg.folds == 3
    assert cfg.model_config(n_classes=2).d_model == 32


@pytest.mark.parametrize(
    "text",
    ["nonsense = 1\n", "d_model = abc\n", "d_model\n", "folds = 1\n", "total_epochs = 7\n", "min_lr = 1\n"],
)
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)
