import numpy as np
import pytest

from seqad.core_math import Rng
from seqad import detector, pipeline, seq_autoencoder as sa
from seqad.errors import EmptyInputError, InsufficientDataError
from seqad.windowing import make_windows


IDENTITY_SCALER = pipeline.ScalerParams(mean=0.0, std=1.0)


def zero_model(timesteps, arch="1x4"):
    model = sa.build_model(arch, timesteps=timesteps, seed=0)
    for p in model.params():
        p[...] = 0.0
    return model


def series(values, labels=None):
    values = np.asarray(values, dtype=float)
    return pipeline.TimeSeries(np.arange(len(values)) * 60.0, values, labels)


class TestFitThreshold:
    def test_perfect_reconstruction_gives_zero(self):
        # a zeroed model reconstructs an all-zero series exactly
        model = zero_model(3)
        windows = make_windows(np.zeros(10), 3)
        th = detector.fit_threshold(model, windows)
        assert th.value == 0.0
        assert th.train_points == 10
        assert th.window_len == 3

    def test_singleton_max(self):
        model = zero_model(1)
        th = detector.fit_threshold(model, make_windows(np.array([0.3]), 1))
        assert th.value == pytest.approx(0.3, abs=1e-15)

    def test_empty_windows_rejected(self):
        model = zero_model(3)
        windows = make_windows(np.zeros(10), 3)
        windows.windows = windows.windows[:0]
        windows.starts = windows.starts[:0]
        with pytest.raises(EmptyInputError):
            detector.fit_threshold(model, windows)

    def test_digest_identifies_model(self):
        model = zero_model(3)
        th = detector.fit_threshold(model, make_windows(np.zeros(5), 3))
        assert th.model_digest == sa.model_digest(model)


class TestDetect:
    def test_no_anomalies_when_losses_at_or_below_threshold(self):
        model = zero_model(1)
        th = detector.fit_threshold(model, make_windows(np.array([0.3, 0.3]), 1))
        report = detector.detect(model, th, series([0.3, 0.3, 0.3]), IDENTITY_SCALER)
        # every loss equals the threshold exactly: strict inequality keeps them normal
        assert np.array_equal(report.losses, [0.3, 0.3, 0.3])
        assert report.verdicts.sum() == 0

    def test_point_above_threshold_is_flagged(self):
        model = zero_model(1)
        th = detector.fit_threshold(model, make_windows(np.array([0.3]), 1))
        report = detector.detect(model, th, series([0.2, 0.8, 0.3]), IDENTITY_SCALER)
        assert list(report.verdicts) == [0, 1, 0]

    def test_trained_model_flags_nothing_on_its_own_training_data(self):
        profile = pipeline.SynthProfile(length=900, spike_rate=0.02)
        data, _ = pipeline.generate_synthetic(profile, seed=3)
        split = pipeline.build_train_test(data, float(data.timestamps[700]), k=2.0)
        scaler = pipeline.fit_scaler(split.train.values)
        windows = make_windows(pipeline.apply_scaler(split.train.values, scaler), 10)
        model = sa.build_model("1x16", timesteps=10, seed=3)
        model, _ = sa.train(model, windows, sa.TrainConfig(epochs=3, seed=3))
        th = detector.fit_threshold(model, windows)
        report = detector.detect(model, th, split.train, scaler)
        assert report.verdicts.sum() == 0

    def test_monotonicity_in_threshold(self):
        model = zero_model(1)
        th = detector.fit_threshold(model, make_windows(np.array([0.5]), 1))
        values = Rng(4).uniform(0, 1, 50)
        flagged = []
        for eta in (0.1, 0.3, 0.7):
            th.value = eta
            report = detector.detect(model, th, series(values), IDENTITY_SCALER)
            flagged.append(set(np.nonzero(report.verdicts)[0]))
        assert flagged[2] <= flagged[1] <= flagged[0]

    def test_series_shorter_than_window_rejected(self):
        model = zero_model(5)
        th = detector.Threshold(value=1.0, train_points=10, window_len=5, model_digest="x")
        with pytest.raises(InsufficientDataError):
            detector.detect(model, th, series([1.0, 2.0]), IDENTITY_SCALER)

    def test_labels_ride_along_into_confusion(self):
        model = zero_model(1)
        th = detector.fit_threshold(model, make_windows(np.array([0.3]), 1))
        report = detector.detect(
            model, th, series([0.2, 0.8, 0.3], labels=[0, 1, 0]), IDENTITY_SCALER
        )
        counts = report.confusion()
        assert (counts.tp, counts.tn, counts.fp, counts.fn) == (1, 2, 0, 0)


class TestReportPersistence:
    def make_report(self, with_labels):
        model = zero_model(2)
        th = detector.fit_threshold(model, make_windows(np.array([0.1, 0.2, 0.15]), 2))
        labels = [0, 1, 0, 0] if with_labels else None
        return detector.detect(
            model, th, series([0.05, 0.9, 0.1, 0.12], labels=labels), IDENTITY_SCALER
        )

    @pytest.mark.parametrize("with_labels", [False, True])
    def test_round_trip(self, tmp_path, with_labels):
        report = self.make_report(with_labels)
        path = tmp_path / "report.csv"
        detector.write_report_csv(str(path), report)
        back = detector.read_report_csv(str(path), report.threshold)
        assert np.array_equal(back.values, report.values)
        assert np.array_equal(back.losses, report.losses)
        assert np.array_equal(back.verdicts, report.verdicts)
        if with_labels:
            assert np.array_equal(back.labels, report.labels)
        else:
            assert back.labels is None

    def test_verdicts_recompute_identically_from_persisted_losses(self, tmp_path):
        report = self.make_report(with_labels=False)
        path = tmp_path / "report.csv"
        detector.write_report_csv(str(path), report)
        back = detector.read_report_csv(str(path), report.threshold)
        assert np.array_equal((back.losses > back.threshold).astype(int), back.verdicts)
