"""
Tests for synthetic data generation and the scene-folder dataset contract
"""

import numpy as np
import pytest

from app.core.exceptions import InvalidImage, MalformedEvName, MissingManifest, NonMonotoneEvList
from app.core.imaging import luminance
from app.models.dataset import EV_PRESETS, CrfKind, CrfSpec, SceneRecord
from app.services.data_service import (
    DatasetService,
    apply_crf,
    ev_filename,
    ev_filenames,
    format_ev,
    render_ground_truth,
    render_radiance,
    render_sequence,
    sort_by_mean_intensity,
)


@pytest.fixture
def service():
    return DatasetService(threads=2)


@pytest.fixture
def corpus(service):
    return service.synthesize(3, 24, 20, EV_PRESETS["standard"], seed=5)


class TestRadiance:
    def test_deterministic(self):
        """Test that the same seed renders the same scene"""
        np.testing.assert_array_equal(render_radiance(11, 32, 24), render_radiance(11, 32, 24))

    def test_bounds(self):
        """Test that radiance is finite and non-negative across seeds"""
        for seed in range(100):
            rad = render_radiance(seed, 16, 16)
            assert np.all(np.isfinite(rad)) and rad.min() >= 0.0

    def test_median(self):
        """Test that median luminance is 0.5"""
        rad = render_radiance(3, 40, 30)
        assert float(np.sort(luminance(rad).ravel())[600 - 1 : 600 + 1].mean()) == pytest.approx(
            0.5, abs=0.02
        )

    def test_too_small(self):
        """Test that scenes below 16 pixels are refused"""
        with pytest.raises(InvalidImage):
            render_radiance(0, 15, 32)


class TestCrf:
    def test_saturation(self):
        """Test that exposure at or above one saturates"""
        np.testing.assert_allclose(apply_crf(np.full((1, 1, 3), 2.0), 1.0), 1.0)

    def test_black(self):
        """Test that zero radiance stays black"""
        np.testing.assert_allclose(apply_crf(np.zeros((1, 1, 3)), 4.0), 0.0)

    def test_gamma_value(self):
        """Test the gamma curve at one half"""
        assert apply_crf(np.full((1, 1, 3), 0.5), 1.0)[0, 0, 0] == pytest.approx(0.5 ** (1 / 2.2))

    def test_smoothstep_value(self):
        """Test the smoothstep curve at one quarter"""
        out = apply_crf(np.full((1, 1, 3), 0.25), 1.0, CrfSpec(kind=CrfKind.SMOOTHSTEP))
        assert out[0, 0, 0] == pytest.approx(3 * 0.0625 - 2 * 0.015625)

    def test_monotone(self):
        """Test that the response never decreases with exposure"""
        x = np.linspace(0.0, 1.5, 200).reshape(1, -1, 1).repeat(3, axis=2)
        for crf in (CrfSpec(), CrfSpec(kind=CrfKind.SMOOTHSTEP)):
            assert np.all(np.diff(apply_crf(x, 1.0, crf)[0, :, 0]) >= 0)

    def test_rejects_non_positive_time(self):
        """Test that a zero exposure time is invalid"""
        with pytest.raises(ValueError):
            apply_crf(np.ones((1, 1, 3)), 0.0)


class TestSequence:
    def test_brightness_increases(self):
        """Test that mean luminance strictly increases along the sequence"""
        seq = render_sequence(render_radiance(2, 32, 32), EV_PRESETS["standard"])
        means = [luminance(img).mean() for img in seq.images]
        assert all(b > a for a, b in zip(means, means[1:]))
        assert sort_by_mean_intensity(seq.images) == list(range(5))

    def test_zero_ev_frame(self):
        """Test that EV 0 equals a unit exposure"""
        rad = render_radiance(4, 20, 20)
        seq = render_sequence(rad, [-1.0, 0.0, 1.0])
        np.testing.assert_array_equal(seq.images[1], apply_crf(rad, 1.0))

    def test_per_image_means(self):
        """Test per-image means against a scalar recomputation"""
        rad = render_radiance(8, 16, 16)
        seq = render_sequence(rad, EV_PRESETS["standard"])
        for ev, img in zip(EV_PRESETS["standard"], seq.images):
            expected = np.mean(np.clip(rad * 2.0**ev, 0, 1) ** (1 / 2.2))
            assert img.mean() == pytest.approx(expected, abs=1e-12)

    def test_non_monotone(self):
        """Test that a decreasing EV list is refused"""
        with pytest.raises(NonMonotoneEvList):
            render_sequence(render_radiance(0, 16, 16), [0.0, -1.0])

    def test_ground_truth_exposure(self):
        """Test that the auto-exposed ground truth hits mean luminance 0.45"""
        gt = render_ground_truth(render_radiance(6, 32, 32))
        assert luminance(gt).mean() == pytest.approx(0.45, abs=1e-3)


class TestSortByMeanIntensity:
    def test_reversed(self):
        """Test that a bright-to-dark list gives the reversing permutation"""
        seq = [np.full((2, 2, 3), v) for v in (0.9, 0.5, 0.1)]
        assert sort_by_mean_intensity(seq) == [2, 1, 0]

    def test_stable_ties(self):
        """Test that duplicates keep their original order"""
        a, b = np.full((2, 2, 3), 0.3), np.full((2, 2, 3), 0.1)
        assert sort_by_mean_intensity([a, b, a.copy(), b.copy()]) == [1, 3, 0, 2]


class TestEvNames:
    def test_format(self):
        """Test signed two-decimal EV names"""
        assert ev_filename(-1.5) == "ev_-1.50.png"
        assert ev_filename(0.75) == "ev_+0.75.png"
        assert format_ev(-0.0) == "+0.00"

    def test_colliding_names(self):
        """Test that distinct EVs rounding to one file name are refused"""
        assert ev_filenames([-0.5, 0.5]) == ["ev_-0.50.png", "ev_+0.50.png"]
        with pytest.raises(MalformedEvName):
            ev_filenames([0.001, 0.004])

    def test_record_rejects_unsorted(self):
        """Test that a scene record needs increasing EVs"""
        with pytest.raises(ValueError):
            SceneRecord(scene_id="1", evs=[0.0, 0.0], paths=["a", "b"])


class TestDatasetService:
    def test_synthesize_deterministic(self, service):
        """Test that the same seed gives the same corpus"""
        a = service.synthesize(2, 16, 16, [-1.0, 1.0], seed=1)
        b = DatasetService(threads=1).synthesize(2, 16, 16, [-1.0, 1.0], seed=1)
        for x, y in zip(a, b):
            for i, j in zip(x.images, y.images):
                np.testing.assert_array_equal(i, j)

    def test_drop_zero_ev(self, service):
        """Test that the EV 0 frame can be left out"""
        scenes = service.synthesize(1, 16, 16, EV_PRESETS["wide"], seed=0, drop_zero_ev=True)
        assert scenes[0].evs == [-3.0, -1.5, 1.5, 3.0]

    def test_round_trip(self, service, corpus, tmp_path):
        """Test that save then load returns the same records and pixels"""
        saved = service.save_dataset(tmp_path, corpus)
        assert service.load_dataset(tmp_path) == saved
        loaded = service.load_scenes(tmp_path)
        for original, back in zip(corpus, loaded):
            assert back.scene_id == original.scene_id
            assert back.evs == list(EV_PRESETS["standard"])
            for a, b in zip(original.images, back.images):
                assert np.max(np.abs(a - b)) <= 1.0 / 65535
            assert np.max(np.abs(original.ground_truth - back.ground_truth)) <= 1.0 / 65535

    def test_layout(self, service, corpus, tmp_path):
        """Test folder and manifest layout"""
        service.save_dataset(tmp_path, corpus)
        assert (tmp_path / "scene_0000" / "ev_-1.50.png").is_file()
        assert (tmp_path / "scene_0002" / "gt.png").is_file()
        lines = (tmp_path / "manifest.txt").read_text().splitlines()
        assert lines[0] == "0000 -1.50,-0.75,+0.00,+0.75,+1.50"

    def test_colliding_evs_write_nothing(self, service, tmp_path):
        """Test that an EV name collision is reported before any file is written"""
        scenes = service.synthesize(1, 16, 16, [0.001, 0.004], seed=0)
        with pytest.raises(MalformedEvName):
            service.save_dataset(tmp_path / "data", scenes)
        assert not (tmp_path / "data").exists()

    def test_missing_manifest(self, service, tmp_path):
        """Test that a folder without manifest is refused"""
        with pytest.raises(MissingManifest):
            service.load_dataset(tmp_path)

    def test_unlisted_scene(self, service, corpus, tmp_path):
        """Test that a scene folder absent from the manifest is refused"""
        service.save_dataset(tmp_path, corpus)
        (tmp_path / "scene_9999").mkdir()
        with pytest.raises(MissingManifest):
            service.load_dataset(tmp_path)

    def test_manifest_file_mismatch(self, service, corpus, tmp_path):
        """Test that a deleted EV file is reported"""
        service.save_dataset(tmp_path, corpus)
        (tmp_path / "scene_0001" / "ev_+0.75.png").unlink()
        with pytest.raises(MalformedEvName):
            service.load_dataset(tmp_path)

    def test_stray_file(self, service, corpus, tmp_path):
        """Test that a file with a bad EV name is reported"""
        service.save_dataset(tmp_path, corpus)
        (tmp_path / "scene_0000" / "ev_1.5.png").write_bytes(b"")
        with pytest.raises(MalformedEvName):
            service.load_dataset(tmp_path)

    def test_non_monotone_manifest(self, service, corpus, tmp_path):
        """Test that a decreasing manifest EV list is refused"""
        service.save_dataset(tmp_path, corpus)
        manifest = tmp_path / "manifest.txt"
        manifest.write_text(manifest.read_text().replace("-1.50,-0.75", "-0.75,-1.50", 1))
        with pytest.raises(NonMonotoneEvList):
            service.load_dataset(tmp_path)

    def test_split(self, service, corpus):
        """Test that the split is seeded and keeps a training scene"""
        train, held = service.split(corpus, 0.34, seed=2)
        assert len(train) == 2 and len(held) == 1
        assert service.split(corpus, 0.34, seed=2)[1][0].scene_id == held[0].scene_id
        train, held = service.split(corpus[:1], 0.9)
        assert len(train) == 1 and held == []

    def test_read_sequence_folder(self, service, corpus, tmp_path):
        """Test that a scene folder reads back EV-sorted without gt.png"""
        service.save_dataset(tmp_path, corpus)
        names, seq = service.read_sequence_folder(tmp_path / "scene_0000")
        assert names == ["ev_-1.50", "ev_-0.75", "ev_+0.00", "ev_+0.75", "ev_+1.50"]
        assert seq.evs == list(EV_PRESETS["standard"])
