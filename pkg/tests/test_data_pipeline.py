"""Epoching, averaging, z-scoring, controls and splits."""

import numpy as np
import pytest

from src.domain.eeg_types import (
    ControlKind,
    ControlKindName,
    EegEpochSet,
    EegEvent,
    PairedDataset,
    RawEegRecording,
    ZScoreMode,
)
from src.domain.errors import ChannelNotFoundError, EventWindowError, InsufficientDataError, ValidationError
from src.domain.experiment_types import DataSection
from src.services.data_pipeline import (
    apply_control,
    average_trials,
    build_paired_dataset,
    epoch_and_downsample,
    make_control,
    preprocess_recording,
    select_channels,
    split_train_val,
    zscore_temporal,
)
from src.services.synthetic_data import SyntheticSpec, generate_synthetic, subject_seed, synthesize_epochs


CHANNELS = ["Pz", "Oz", "POz"]


def make_recording(events, samples=4000, rate=1000.0, seed=0):
    rng = np.random.default_rng(seed)
    signal = rng.standard_normal((len(CHANNELS), samples))
    return RawEegRecording(
        subject_id="sub-01", channel_names=list(CHANNELS), sample_rate_hz=rate, signal=signal, events=events
    )


def test_epoching_block_mean_downsampling_matches_manual_average():
    raw = make_recording([EegEvent("b", 1000, 1), EegEvent("a", 2000, 0)])
    epochs = epoch_and_downsample(raw, (-0.2, 0.8), 100.0, max_trials=1, anti_alias=True)

    assert epochs.data.shape == (2, 1, 3, 100)
    assert epochs.image_ids == ["a", "b"]
    assert epochs.category_ids == [0, 1]
    assert epochs.t_start_s == pytest.approx(-0.2)
    start = 2000 - 200
    expected = raw.signal[:, start:start + 1000].reshape(3, 100, 10).mean(axis=2)
    np.testing.assert_allclose(epochs.data[0, 0], expected, atol=1e-12)


def test_epoching_without_anti_alias_takes_every_nth_sample():
    raw = make_recording([EegEvent("a", 1000, 0)])
    epochs = epoch_and_downsample(raw, (-0.2, 0.8), 100.0, max_trials=1, anti_alias=False)
    np.testing.assert_allclose(epochs.data[0, 0], raw.signal[:, 800:1800:10])


def test_non_integer_decimation_ratio_is_rejected():
    raw = make_recording([EegEvent("a", 1000, 0)])
    with pytest.raises(ValidationError):
        epoch_and_downsample(raw, (-0.2, 0.8), 300.0)


@pytest.mark.parametrize("anti_alias", [True, False])
def test_downsampled_samples_are_labelled_with_the_start_of_their_block(anti_alias):
    raw = make_recording([EegEvent("a", 1000, 0)])
    epochs = epoch_and_downsample(raw, (-0.2, 0.8), 100.0, max_trials=1, anti_alias=anti_alias)

    assert epochs.t_start_s == pytest.approx(-0.2)
    assert epochs.dt_s == pytest.approx(0.01)
    np.testing.assert_allclose(epochs.times[:3], [-0.2, -0.19, -0.18], atol=1e-12)
    # sample 20 (t = 0.0) starts at the onset sample in both modes
    first_raw = 1000 + int(round(epochs.times[20] * raw.sample_rate_hz))
    assert first_raw == 1000
    block = raw.signal[:, first_raw:first_raw + 10]
    expected = block.mean(axis=1) if anti_alias else block[:, 0]
    np.testing.assert_allclose(epochs.data[0, 0, :, 20], expected, atol=1e-12)


def test_event_too_close_to_the_edge_names_the_image():
    raw = make_recording([EegEvent("late", 3500, 0)])
    with pytest.raises(EventWindowError) as excinfo:
        epoch_and_downsample(raw, (-0.2, 0.8), 100.0)
    assert "late" in str(excinfo.value)


def test_extra_repetitions_are_dropped_and_missing_ones_padded():
    events = [EegEvent("a", 1000, 0), EegEvent("a", 2000, 0), EegEvent("a", 2500, 0), EegEvent("b", 1500, 1)]
    epochs = epoch_and_downsample(make_recording(events), (-0.2, 0.8), 100.0, max_trials=2)

    assert epochs.num_trials == 2
    assert np.isnan(epochs.data[1, 1]).all()
    averaged = average_trials(epochs)
    np.testing.assert_allclose(averaged.data[1, 0], epochs.data[1, 0])


def test_select_channels_reports_every_missing_name():
    epochs = epoch_and_downsample(make_recording([EegEvent("a", 1000, 0)]), (-0.2, 0.8), 100.0)
    with pytest.raises(ChannelNotFoundError) as excinfo:
        select_channels(epochs, ["Pz", "Cz", "T7"])
    assert excinfo.value.names == ["Cz", "T7"]
    assert select_channels(epochs, ["POz", "Pz"]).channel_names == ["POz", "Pz"]


def test_zscore_gives_zero_mean_unit_std_and_zeros_for_constant_series(rng):
    data = rng.normal(3.0, 2.0, size=(4, 1, 2, 50))
    data[1, 0, 1] = 5.0
    epochs = EegEpochSet(data, -0.2, 0.01, ["Pz", "Oz"], [f"i{k}" for k in range(4)], [0, 0, 1, 1])

    scored = zscore_temporal(epochs).data
    assert np.allclose(scored[0, 0].mean(axis=-1), 0.0, atol=1e-12)
    assert np.allclose(scored[0, 0].std(axis=-1), 1.0)
    assert np.all(scored[1, 0, 1] == 0.0)


def test_pooled_zscore_normalizes_each_channel_over_images_and_time(rng):
    data = rng.normal(1.0, 4.0, size=(5, 1, 2, 30))
    epochs = EegEpochSet(data, 0.0, 0.01, ["Pz", "Oz"], [f"i{k}" for k in range(5)], [0] * 5)
    scored = zscore_temporal(epochs, ZScoreMode.POOLED).data
    assert np.allclose(scored[:, 0, 0].mean(), 0.0, atol=1e-12)
    assert np.allclose(scored[:, 0, 0].std(), 1.0)


def test_zscore_requires_averaged_epochs(rng):
    epochs = EegEpochSet(rng.normal(size=(2, 3, 1, 10)), 0.0, 0.01, ["Pz"], ["a", "b"], [0, 1])
    with pytest.raises(ValidationError):
        zscore_temporal(epochs)


def test_shuffled_control_permutes_whole_images_deterministically(rng):
    data = rng.normal(size=(6, 1, 2, 10))
    epochs = EegEpochSet(data, 0.0, 0.01, ["Pz", "Oz"], [f"i{k}" for k in range(6)], [0] * 6)
    first = make_control(epochs, ControlKind(ControlKindName.SHUFFLED, seed=4)).data
    second = make_control(epochs, ControlKind(ControlKindName.SHUFFLED, seed=4)).data

    np.testing.assert_array_equal(first, second)
    rows = {tuple(r.ravel()) for r in data}
    assert {tuple(r.ravel()) for r in first} == rows


@pytest.mark.parametrize("kind", [ControlKindName.RANDOM_NORMAL, ControlKindName.RANDOM_GEOMETRIC])
def test_random_controls_are_zscored_series(rng, kind):
    epochs = EegEpochSet(rng.normal(size=(3, 1, 2, 40)), 0.0, 0.01, ["Pz", "Oz"], ["a", "b", "c"], [0, 1, 2])
    control = make_control(epochs, ControlKind(kind, seed=1)).data
    assert control.shape == epochs.data.shape
    assert np.allclose(control.mean(axis=-1), 0.0, atol=1e-9)


def test_real_control_is_rejected_by_make_control_and_identity_for_apply_control(tiny_data, rng):
    train, _ = tiny_data
    epochs = EegEpochSet(rng.normal(size=(2, 1, 1, 5)), 0.0, 0.01, ["Pz"], ["a", "b"], [0, 1])
    with pytest.raises(ValidationError):
        make_control(epochs, ControlKind())
    assert apply_control(train, ControlKind()) is train


def test_apply_control_keeps_images_and_labels(tiny_data):
    train, _ = tiny_data
    shuffled = apply_control(train, ControlKind(ControlKindName.SHUFFLED, seed=0))
    np.testing.assert_array_equal(shuffled.images, train.images)
    np.testing.assert_array_equal(shuffled.category_ids, train.category_ids)
    assert shuffled.eeg_targets.shape == train.eeg_targets.shape


def test_split_puts_first_sorted_ids_of_each_category_in_validation(tiny_data):
    train, val = tiny_data
    assert len(train) == 9 and len(val) == 3
    assert sorted(val.category_ids.tolist()) == [0, 1, 2]
    for category in range(3):
        ids = sorted([i for i, c in zip(train.image_ids + val.image_ids,
                                        train.category_ids.tolist() + val.category_ids.tolist()) if c == category])
        assert ids[0] in val.image_ids
    assert not set(train.image_ids) & set(val.image_ids)


def test_split_needs_a_training_item_per_category(tiny_data):
    train, _ = tiny_data
    with pytest.raises(InsufficientDataError):
        split_train_val(train, val_per_category=3)


def test_build_paired_dataset_rejects_missing_images(rng):
    epochs = EegEpochSet(rng.normal(size=(2, 1, 1, 5)), 0.0, 0.01, ["Pz"], ["a", "b"], [0, 1])
    images = {"a": rng.random((3, 8, 8))}
    with pytest.raises(ValidationError):
        build_paired_dataset(epochs, images, 8, (0.5, 0.5, 0.5), (0.25, 0.25, 0.25))


def test_build_paired_dataset_resizes_and_normalizes(rng):
    epochs = EegEpochSet(rng.normal(size=(2, 1, 1, 5)), 0.0, 0.01, ["Pz"], ["a", "b"], [0, 1])
    images = {"a": np.full((3, 8, 8), 0.75), "b": np.zeros((3, 8, 8))}
    paired = build_paired_dataset(epochs, images, 16, (0.5, 0.5, 0.5), (0.25, 0.25, 0.25))
    assert paired.images.shape == (2, 3, 16, 16)
    assert np.allclose(paired.images[0], 1.0, atol=1e-6)
    assert np.allclose(paired.images[1], -2.0, atol=1e-6)
    assert paired.num_categories == 2


def test_preprocess_recording_selects_configured_channels():
    events = [EegEvent(f"img{k}", 400 + 300 * k, k % 2) for k in range(8)]
    raw = make_recording(events, samples=4000)
    section = DataSection(channels=["Oz", "Pz"], max_trials=1)
    prepared = preprocess_recording(raw, section)

    assert prepared.targets.channel_names == ["Oz", "Pz"]
    assert prepared.targets.data.shape == (8, 1, 2, 100)
    assert prepared.trialwise.num_trials == 1


def test_synthetic_subjects_share_images_but_not_eeg():
    spec = SyntheticSpec(num_categories=2, images_per_category=3, channels=("Pz", "Oz"), timepoints=10, image_size=8)
    a = synthesize_epochs(spec, 7, subject_seed(7, "sub-01"), "sub-01")
    b = synthesize_epochs(spec, 7, subject_seed(7, "sub-02"), "sub-02")
    again = synthesize_epochs(spec, 7, subject_seed(7, "sub-01"), "sub-01")

    np.testing.assert_array_equal(a.images, b.images)
    assert not np.allclose(a.epochs.data, b.epochs.data)
    np.testing.assert_array_equal(a.epochs.data, again.epochs.data)


def test_infinite_snr_gives_noise_free_targets():
    spec = SyntheticSpec(num_categories=2, images_per_category=2, channels=("Pz",), timepoints=10,
                         image_size=8, snr=float("inf"))
    subject = synthesize_epochs(spec, 1, 2)
    np.testing.assert_allclose(subject.targets, subject.readout)


def test_zscore_is_idempotent(rng):
    data = rng.normal(2.0, 3.0, size=(5, 1, 3, 40))
    epochs = EegEpochSet(data, 0.0, 0.01, CHANNELS, [f"i{k}" for k in range(5)], [0] * 5)
    once = zscore_temporal(epochs)
    twice = zscore_temporal(once)
    np.testing.assert_allclose(twice.data, once.data, atol=1e-9)


def test_average_trials_matches_a_loop_over_non_padded_trials(rng):
    data = rng.normal(size=(3, 4, 2, 6))
    data[1, 2:] = np.nan
    data[2, 3] = np.nan
    epochs = EegEpochSet(data, 0.0, 0.01, ["Pz", "Oz"], ["a", "b", "c"], [0, 1, 2])
    averaged = average_trials(epochs).data

    assert averaged.shape == (3, 1, 2, 6)
    for i in range(3):
        for c in range(2):
            for t in range(6):
                values = [data[i, k, c, t] for k in range(4) if not np.isnan(data[i, k, c, t])]
                assert averaged[i, 0, c, t] == pytest.approx(sum(values) / len(values), abs=1e-12)


def test_split_counts_hold_for_random_category_sizes():
    rng = np.random.default_rng(11)
    for _ in range(25):
        sizes = rng.integers(2, 9, size=rng.integers(1, 6))
        val_per_category = int(rng.integers(0, sizes.min()))
        categories = np.repeat(np.arange(len(sizes)), sizes)
        order = rng.permutation(len(categories))
        n = len(categories)
        dataset = PairedDataset(
            images=np.zeros((n, 3, 2, 2), dtype=np.float32),
            eeg_targets=np.zeros((n, 1, 3), dtype=np.float32),
            category_ids=categories[order],
            image_ids=[f"img{k:03d}" for k in rng.permutation(n)],
            num_categories=len(sizes),
        )
        train, val = split_train_val(dataset, val_per_category)

        assert len(train) + len(val) == n
        assert not set(train.image_ids) & set(val.image_ids)
        assert set(train.image_ids) | set(val.image_ids) == set(dataset.image_ids)
        for category, size in enumerate(sizes):
            assert int(np.sum(val.category_ids == category)) == val_per_category
            assert int(np.sum(train.category_ids == category)) == size - val_per_category


def test_shuffled_control_keeps_the_exact_multiset_of_values(rng):
    data = rng.normal(size=(7, 1, 3, 12))
    epochs = EegEpochSet(data, 0.0, 0.01, CHANNELS, [f"i{k}" for k in range(7)], [0] * 7)
    shuffled = make_control(epochs, ControlKind(ControlKindName.SHUFFLED, seed=9)).data
    np.testing.assert_array_equal(np.sort(shuffled, axis=None), np.sort(data, axis=None))
    assert not np.array_equal(shuffled, data)


def test_random_normal_control_has_standard_moments(rng):
    epochs = EegEpochSet(rng.normal(size=(100, 1, 10, 100)), 0.0, 0.01, [f"ch{c}" for c in range(10)],
                         [f"i{k}" for k in range(100)], [0] * 100)
    draws = make_control(epochs, ControlKind(ControlKindName.RANDOM_NORMAL, seed=5)).data
    assert draws.size == 100_000
    assert abs(float(draws.mean())) < 0.02
    assert abs(float(draws.std()) - 1.0) < 0.02


def test_synthetic_datasets_are_bit_identical_for_the_same_seed():
    spec = SyntheticSpec(num_categories=3, images_per_category=4, channels=("Pz", "Oz"), timepoints=20, image_size=8)
    first_train, first_val = generate_synthetic(spec, 3)
    second_train, second_val = generate_synthetic(spec, 3)
    other_train, _ = generate_synthetic(spec, 4)

    for first, second in ((first_train, second_train), (first_val, second_val)):
        assert first.images.tobytes() == second.images.tobytes()
        assert first.eeg_targets.tobytes() == second.eeg_targets.tobytes()
        assert first.image_ids == second.image_ids
        np.testing.assert_array_equal(first.category_ids, second.category_ids)
    assert first_train.eeg_targets.tobytes() != other_train.eeg_targets.tobytes()
