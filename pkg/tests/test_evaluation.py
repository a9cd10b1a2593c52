"""Robustness gains, PCC and noise ceilings."""

import numpy as np
import pytest
import torch

from src.domain.attack_types import EPSILON_GRIDS, AttackTag, PgdConfig
from src.domain.eeg_types import EegEpochSet
from src.domain.errors import ConfigurationError, GridMismatchError, ValidationError
from src.domain.evaluation_types import GainRecord, PccMatrix, RobustnessCurve
from src.services.evaluation_service import (
    avg_gain_subset,
    avg_pcc_window,
    channel_window_means,
    control_comparison,
    gain_band,
    noise_ceiling,
    pcc,
    pcc_matrix,
    robustness_curve,
    robustness_gain,
    top1_accuracy,
    window_mask,
)


def curve(tag, accuracies, epsilons=None):
    epsilons = list(EPSILON_GRIDS[AttackTag(tag)]) if epsilons is None else epsilons
    return RobustnessCurve(attack_tag=tag, points=tuple(zip(epsilons, accuracies)))


def explicit_pcc(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / (va * vb) ** 0.5


def test_top1_accuracy_counts_argmax_hits(linear_model, rng):
    x = torch.as_tensor(rng.random((100, 2, 4, 4)))
    with torch.no_grad():
        predicted = linear_model(x).argmax(dim=1).numpy()
    labels = rng.integers(0, 3, size=100)
    expected = sum(int(p == l) for p, l in zip(predicted, labels)) / 100
    assert top1_accuracy(linear_model.float(), x.float(), labels) == expected


def test_top1_accuracy_bounds(linear_model, random_images):
    with torch.no_grad():
        y = linear_model(random_images).argmax(dim=1)
    model = linear_model.float()
    assert top1_accuracy(model, random_images.float(), y) == 1.0
    assert top1_accuracy(model, random_images.float(), (y + 1) % 3) == 0.0


class FailingModel(torch.nn.Module):
    """Records its mode on every call, then raises."""

    def __init__(self):
        super().__init__()
        self.modes = []

    def forward(self, x):
        self.modes.append(self.training)
        raise RuntimeError("forward failed")


@pytest.mark.parametrize("start_training", [True, False])
def test_top1_accuracy_restores_the_mode_when_forward_raises(random_images, start_training):
    model = FailingModel()
    model.train(start_training)
    with pytest.raises(RuntimeError):
        top1_accuracy(model, random_images.float(), torch.zeros(6, dtype=torch.long))
    assert model.modes == [False]
    assert model.training is start_training


def test_robustness_curve_prepends_clean_accuracy(linear_model, random_images):
    with torch.no_grad():
        y = linear_model(random_images).argmax(dim=1)
    model = linear_model.float()
    cfg = PgdConfig.for_norm("linf", epsilons=[0.01, 0.1], steps=2)
    result = robustness_curve(model, random_images.float(), y, cfg, include_zero=True, batch_size=4)
    assert result.epsilons == [0.0, 0.01, 0.1]
    assert result.accuracies[0] == 1.0
    assert result.n_images == 6


def test_avg_gain_subsets_have_the_listed_sizes():
    assert len(avg_gain_subset("cw_l2")) == 14
    assert avg_gain_subset("pgd_l2") == [7e-2, 1e-1, 2e-1, 3e-1, 5e-1, 7e-1, 1.0]
    assert len(avg_gain_subset("pgd_linf")) == 10
    with pytest.raises(ValidationError):
        avg_gain_subset("fgsm")


def test_subsets_lie_on_their_grids_except_the_whitelisted_linf_point():
    for tag in AttackTag:
        off_grid = [e for e in avg_gain_subset(tag) if not np.isclose(EPSILON_GRIDS[tag], e, rtol=1e-9).any()]
        assert off_grid == ([1e-1] if tag == AttackTag.PGD_LINF else [])


def test_identical_curves_have_zero_gain():
    base = curve("pgd_l2", np.linspace(0.9, 0.1, 14))
    record = robustness_gain(base, base)
    assert all(g == 0.0 for _, g in record.gain_curve)
    assert record.avg_gain == 0.0


def test_constant_offset_gives_that_average_gain():
    base = np.linspace(0.6, 0.0, 14)
    record = robustness_gain(curve("pgd_l2", base + 0.25), curve("pgd_l2", base), "CNN_Bk4", "sub-01", 17)
    assert record.avg_gain == pytest.approx(0.25, abs=1e-12)
    assert record.to_rows()[0]["arch"] == "CNN_Bk4"
    assert len(record.to_rows()) == 14


def test_gain_is_antisymmetric(rng):
    a = curve("cw_l2", rng.random(22))
    b = curve("cw_l2", rng.random(22))
    forward, backward = robustness_gain(a, b), robustness_gain(b, a)
    for (_, g1), (_, g2) in zip(forward.gain_curve, backward.gain_curve):
        assert g1 == -g2
    assert forward.avg_gain == pytest.approx(-backward.avg_gain)


def test_missing_linf_point_is_tolerated_only_when_whitelisted():
    base = curve("pgd_linf", np.full(16, 0.5))
    dtl = curve("pgd_linf", np.full(16, 0.7))
    assert robustness_gain(dtl, base).avg_gain == pytest.approx(0.2)
    with pytest.raises(ConfigurationError):
        robustness_gain(dtl, base, whitelist={})


def test_gain_rejects_mismatched_curves():
    with pytest.raises(GridMismatchError):
        robustness_gain(curve("pgd_l2", np.zeros(14)), curve("cw_l2", np.zeros(22)))
    short = curve("pgd_l2", np.zeros(13), list(EPSILON_GRIDS[AttackTag.PGD_L2])[:13])
    with pytest.raises(GridMismatchError):
        robustness_gain(short, curve("pgd_l2", np.zeros(14)))


def test_gain_band_uses_the_standard_error_of_the_mean():
    records = [
        GainRecord("CNN_Bk4", "sub-01", seed, "pgd_l2", ((0.1, gain),), gain)
        for seed, gain in zip((0, 17, 337), (0.1, 0.2, 0.6))
    ]
    (row,) = gain_band(records)
    assert (row["arch"], row["control"]) == ("CNN_Bk4", "real")
    assert row["mean"] == pytest.approx(0.3)
    assert row["se"] == pytest.approx(np.std([0.1, 0.2, 0.6], ddof=1) / np.sqrt(3))
    assert row["n"] == 3


def test_gain_band_keeps_architectures_and_controls_apart():
    records = [
        GainRecord("CNN_Bk4", "sub-01", 0, "pgd_l2", ((0.1, 0.1),), 0.1),
        GainRecord("RNN(LSTM)_Bk2", "sub-01", 0, "pgd_l2", ((0.1, 0.5),), 0.5),
        GainRecord("CNN_Bk4", "sub-01", 0, "pgd_l2", ((0.1, -0.2),), -0.2, control="shuffled"),
    ]
    rows = gain_band(records)
    assert len(rows) == 3
    assert all(row["n"] == 1 and np.isnan(row["se"]) for row in rows)
    by_series = {(row["arch"], row["control"]): row["mean"] for row in rows}
    assert by_series == {
        ("CNN_Bk4", "real"): pytest.approx(0.1),
        ("CNN_Bk4", "shuffled"): pytest.approx(-0.2),
        ("RNN(LSTM)_Bk2", "real"): pytest.approx(0.5),
    }


def test_control_comparison_differences_are_against_real_targets():
    cell = {"arch": "CNN_Bk4", "attack": "pgd_l2"}
    rows = control_comparison([
        {**cell, "control": "real", "avg_gain": 0.2, "avg_pcc": 0.3},
        {**cell, "control": "real", "avg_gain": 0.4, "avg_pcc": float("nan")},
        {**cell, "control": "shuffled", "avg_gain": 0.1, "avg_pcc": 0.05},
        {"arch": "RNN_Bk4", "attack": "pgd_l2", "control": "shuffled", "avg_gain": 0.0, "avg_pcc": 0.0},
    ])
    by_series = {(row["arch"], row["control"]): row for row in rows}
    real = by_series[("CNN_Bk4", "real")]
    assert (real["avg_gain"], real["avg_pcc"], real["n"]) == (pytest.approx(0.3), pytest.approx(0.3), 2)
    assert real["gain_vs_real"] == 0.0
    shuffled = by_series[("CNN_Bk4", "shuffled")]
    assert shuffled["gain_vs_real"] == pytest.approx(-0.2)
    assert shuffled["pcc_vs_real"] == pytest.approx(-0.25)
    assert np.isnan(by_series[("RNN_Bk4", "shuffled")]["gain_vs_real"])


def test_pcc_trivial_cases_and_explicit_sum(rng):
    a = rng.normal(size=50)
    b = rng.normal(size=50)
    assert pcc(a, a) == pytest.approx(1.0)
    assert pcc(a, -a) == pytest.approx(-1.0)
    assert pcc(a, b) == pytest.approx(explicit_pcc(list(a), list(b)), abs=1e-12)
    assert np.isnan(pcc(a, np.ones(50)))
    with pytest.raises(ValidationError):
        pcc([1.0], [2.0])


def test_pcc_is_invariant_under_positive_affine_maps(rng):
    a, b = rng.normal(size=40), rng.normal(size=40)
    for alpha, beta in zip(rng.uniform(0.1, 10, 5), rng.normal(size=5)):
        assert pcc(a, alpha * b + beta) == pytest.approx(pcc(a, b), abs=1e-12)


def test_pcc_matrix_correlates_across_images(rng):
    actual = rng.normal(size=(30, 3, 8))
    same = pcc_matrix(actual, actual, ["Pz", "Oz", "O1"])
    np.testing.assert_allclose(same.values, 1.0)

    pred = rng.normal(size=(30, 3, 8))
    m = pcc_matrix(pred, actual)
    assert m.values[1, 4] == pytest.approx(explicit_pcc(list(pred[:, 1, 4]), list(actual[:, 1, 4])), abs=1e-12)


def test_independent_predictions_correlate_weakly(rng):
    m = pcc_matrix(rng.normal(size=(1654, 2, 50)), rng.normal(size=(1654, 2, 50)))
    assert np.mean(np.abs(m.values) < 0.1) > 0.95


def test_pcc_matrix_needs_two_images(rng):
    with pytest.raises(ValidationError):
        pcc_matrix(rng.normal(size=(1, 2, 3)), rng.normal(size=(1, 2, 3)))


def test_window_averages_match_a_loop(rng):
    times = -0.2 + 0.01 * np.arange(100)
    m = PccMatrix(values=rng.uniform(-1, 1, size=(4, 100)), channel_names=["a", "b", "c", "d"], times=times)
    inside = [t for t in range(100) if 0.09 - 1e-9 <= times[t] <= 0.14 + 1e-9]
    assert len(inside) == 6
    expected = sum(m.values[c, t] for c in range(4) for t in inside) / (4 * len(inside))
    assert avg_pcc_window(m, (0.09, 0.14)) == pytest.approx(expected, abs=1e-12)
    np.testing.assert_allclose(channel_window_means(m, (0.09, 0.14)), m.values[:, inside].mean(axis=1))
    assert avg_pcc_window(m, (times[0], times[-1])) == pytest.approx(m.values.mean())


def test_windows_outside_the_axis_are_rejected():
    times = np.arange(10) * 0.01
    with pytest.raises(ValidationError):
        window_mask(times, (0.05, 0.2))
    with pytest.raises(ValidationError):
        window_mask(times, (0.05, 0.04))
    with pytest.raises(ValidationError):
        window_mask(times, (0.031, 0.039))


def trialwise(data):
    n = data.shape[0]
    return EegEpochSet(data, 0.0, 0.01, [f"ch{c}" for c in range(data.shape[2])],
                       [f"img{i}" for i in range(n)], [0] * n)


def test_noiseless_trials_have_unit_ceilings(rng):
    signal = rng.normal(size=(20, 1, 2, 10))
    ceiling = noise_ceiling(trialwise(np.repeat(signal, 4, axis=1)), n_splits=5)
    np.testing.assert_allclose(ceiling.lower, 1.0)
    np.testing.assert_allclose(ceiling.upper, 1.0)


def test_ceilings_match_the_split_half_expectation(rng):
    signal = rng.normal(size=(1000, 1, 1, 10))
    data = signal + rng.normal(size=(1000, 4, 1, 10))
    ceiling = noise_ceiling(trialwise(data), n_splits=10, seed=1)
    # unit signal and noise variance, two trials per half
    assert ceiling.lower[0] == pytest.approx(1.0 / 1.5, abs=0.03)
    assert ceiling.upper[0] == pytest.approx(np.sqrt(1.25 / 1.5), abs=0.03)


def test_pure_noise_has_no_split_half_reliability(rng):
    ceiling = noise_ceiling(trialwise(rng.normal(size=(500, 4, 2, 10))), n_splits=10)
    assert np.all(np.abs(ceiling.lower) < 0.05)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_lower_ceiling_never_exceeds_upper(rng, seed):
    data = rng.normal(size=(50, 1, 3, 10)) + rng.normal(size=(50, 6, 3, 10))
    ceiling = noise_ceiling(trialwise(data), n_splits=1, seed=seed)
    assert np.all(ceiling.lower <= ceiling.upper + 1e-12)


def test_ceilings_need_two_trials(rng):
    with pytest.raises(ValidationError):
        noise_ceiling(trialwise(rng.normal(size=(5, 1, 1, 10))))


def test_ceilings_restrict_to_the_window(rng):
    data = rng.normal(size=(20, 4, 1, 10))
    ceiling = noise_ceiling(trialwise(data), window=(0.02, 0.05), n_splits=3)
    assert ceiling.window == (0.02, 0.05)
    assert ceiling.n_splits == 3
