"""CSV I/O, synthetic generation, normalisation, noise injection and splits."""

import numpy as np
import pytest

import transition
from dataset import (
    DatasetError,
    LabeledDataset,
    SyntheticSpec,
    class_counts,
    class_means,
    fingerprint,
    flip_rates,
    inject_noise,
    load_csv,
    normalize_255,
    save_csv,
    split,
    synthesize,
)
from settings import make_rng


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_bytes(text.encode("utf-8"))
    return path


def _nearest_mean_accuracy(ds, spec):
    means = class_means(spec)
    d2 = ((ds.features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(d2, axis=1) == ds.labels))


class TestLoadCsv:

    def test_minimal_file(self, tmp_path):
        ds = load_csv(_write(tmp_path, "label,f0,f1\n0,1.0,2.0\n1,3.0,4.0\n"))
        assert (ds.n, ds.dim, ds.num_classes) == (2, 2, 2)
        np.testing.assert_array_equal(ds.features, [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(ds.labels, [0, 1])

    def test_classes_from_max_label(self, tmp_path):
        ds = load_csv(_write(tmp_path, "label,f0\n2,1.0\n0,5.0\n"))
        assert ds.num_classes == 3
        np.testing.assert_array_equal(class_counts(ds), [1, 0, 1])

    def test_crlf_accepted(self, tmp_path):
        ds = load_csv(_write(tmp_path, "label,f0\r\n0,1.5\r\n1,2.5\r\n"))
        np.testing.assert_array_equal(ds.features[:, 0], [1.5, 2.5])

    def test_malformed_number_names_line(self, tmp_path):
        with pytest.raises(DatasetError, match="line 2") as info:
            load_csv(_write(tmp_path, "label,f0,f1\n0,1.0,x\n"))
        assert info.value.line == 2

    def test_column_count_mismatch(self, tmp_path):
        with pytest.raises(DatasetError, match="line 3"):
            load_csv(_write(tmp_path, "label,f0\n0,1.0\n1,2.0,3.0\n"))

    @pytest.mark.parametrize("text", [
        "",
        "label,f0\n",
        "lbl,f0\n0,1.0\n",
        "label,f0\n-1,1.0\n",
        "label,f0\n0.5,1.0\n",
        "label,f0\n0,\n",
        "label,f0\n0,inf\n",
    ])
    def test_rejects_bad_files(self, tmp_path, text):
        with pytest.raises(DatasetError):
            load_csv(_write(tmp_path, text))


class TestSaveCsv:

    def test_round_trip_small(self, tmp_path):
        ds = load_csv(_write(tmp_path, "label,f0,f1\n0,1.0,2.0\n1,3.0,4.0\n"))
        out = tmp_path / "copy.csv"
        save_csv(ds, out)
        back = load_csv(out)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.features.tobytes() == ds.features.tobytes()
        assert out.read_bytes().startswith(b"label,f0,f1\n")

    def test_round_trip_random(self, tmp_path):
        rng = make_rng(11)
        labels = rng.integers(0, 5, size=1000)
        labels[0] = 4
        ds = LabeledDataset(rng.standard_normal((1000, 6)) * 1e3, labels, 5)
        save_csv(ds, tmp_path / "r.csv")
        back = load_csv(tmp_path / "r.csv")
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.features, ds.features)

    def test_directory_target_is_io_error(self, tmp_path):
        ds = LabeledDataset([[0.0], [1.0]], [0, 1], 2)
        with pytest.raises(OSError):
            save_csv(ds, tmp_path)


class TestSynthesize:
    SPEC = SyntheticSpec(num_classes=3, dim=2, samples_per_class=100, class_separation=10.0,
                         noise_sigma=0.5, seed=7)

    def test_shape_and_nearest_mean(self):
        ds = synthesize(self.SPEC)
        assert ds.n == 300
        assert _nearest_mean_accuracy(ds, self.SPEC) >= 0.99

    def test_deterministic(self):
        a, b = synthesize(self.SPEC), synthesize(self.SPEC)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_overlapping_classes(self):
        spec = SyntheticSpec(3, 2, 1000, 10.0, 100.0, 7)
        ds = synthesize(spec)
        assert ds.n == 3000
        assert _nearest_mean_accuracy(ds, spec) < 0.5

    def test_means_wrap_when_classes_exceed_dim(self):
        means = class_means(SyntheticSpec(5, 2, 1, 3.0, 1.0, 0))
        np.testing.assert_array_equal(means, [[3, 0], [0, 3], [6, 0], [0, 6], [9, 0]])

    @pytest.mark.parametrize("kwargs", [
        dict(num_classes=1), dict(dim=0), dict(samples_per_class=0),
        dict(class_separation=0.0), dict(noise_sigma=-1.0), dict(seed=-3),
    ])
    def test_invalid_spec(self, kwargs):
        base = dict(num_classes=3, dim=2, samples_per_class=10, class_separation=1.0,
                    noise_sigma=1.0, seed=0)
        base.update(kwargs)
        with pytest.raises(DatasetError):
            SyntheticSpec(**base)


class TestNormalize:

    def test_pixel_values(self):
        ds = LabeledDataset([[255.0, 0.0, 51.0], [1.0, 2.0, 3.0]], [0, 1], 2)
        out = normalize_255(ds)
        np.testing.assert_array_equal(out.features[0], [1.0, 0.0, 0.2])

    def test_out_of_range(self):
        with pytest.raises(DatasetError):
            normalize_255(LabeledDataset([[256.0], [0.0]], [0, 1], 2))


class TestInjectNoise:

    def _balanced(self, per_class=6000):
        labels = np.repeat(np.arange(3), per_class)
        return LabeledDataset(np.arange(labels.size, dtype=float)[:, None], labels, 3)

    def test_identity_keeps_labels(self):
        ds = self._balanced(100)
        noisy = inject_noise(ds, transition.identity(3), seed=5)
        np.testing.assert_array_equal(noisy.labels, ds.labels)

    def test_flip_frequencies_match_rows(self):
        ds = self._balanced()
        T = transition.known("fashion05")
        noisy = inject_noise(ds, T, seed=2024)
        rates = flip_rates(ds.labels, noisy.labels, 3)
        assert np.max(np.abs(rates - T.entries)) <= 0.02
        assert noisy.features.tobytes() == ds.features.tobytes()

    def test_deterministic_row(self):
        T = transition.make([[0, 1, 0], [1, 0, 0], [0, 0, 1]])
        ds = self._balanced(50)
        noisy = inject_noise(ds, T, seed=1)
        assert np.all(noisy.labels[ds.labels == 0] == 1)
        assert np.all(noisy.labels[ds.labels == 1] == 0)

    def test_same_seed_same_labels(self):
        ds = self._balanced(200)
        T = transition.known("fashion06")
        np.testing.assert_array_equal(inject_noise(ds, T, 9).labels, inject_noise(ds, T, 9).labels)

    def test_size_mismatch(self):
        ds = LabeledDataset([[0.0], [1.0]], [0, 1], 2)
        with pytest.raises(DatasetError):
            inject_noise(ds, transition.known("fashion05"), seed=0)


class TestSplit:

    def _ten(self):
        return LabeledDataset(np.arange(10.0)[:, None], np.arange(10) % 2, 2)

    def test_sizes_and_disjoint(self):
        pair = split(self._ten(), 0.8, seed=3)
        assert pair.train.n == 8 and pair.validation.n == 2
        rows = np.concatenate([pair.train_rows, pair.validation_rows])
        np.testing.assert_array_equal(np.sort(rows), np.arange(10))

    def test_deterministic(self):
        a, b = split(self._ten(), 0.8, seed=3), split(self._ten(), 0.8, seed=3)
        np.testing.assert_array_equal(a.train_rows, b.train_rows)

    def test_degenerate(self):
        with pytest.raises(DatasetError):
            split(self._ten(), 0.05, seed=0)
        with pytest.raises(DatasetError):
            split(self._ten(), 1.0, seed=0)


def test_fingerprint_tracks_labels():
    ds = LabeledDataset([[0.0], [1.0]], [0, 1], 2)
    fp = fingerprint(ds)
    assert fp == fingerprint(LabeledDataset([[0.0], [1.0]], [0, 1], 2))
    assert fp["sha256"] != fingerprint(ds.with_labels([1, 0]))["sha256"]
    assert (fp["n"], fp["d"], fp["C"]) == (2, 1, 2)


def test_dataset_arrays_are_read_only():
    ds = LabeledDataset([[0.0], [1.0]], [0, 1], 2)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0
