import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from summarization.dataset_io import (FrameFeatureSequence, ReferenceSummaries, SplitSpec, expand_to_native,
                                      load_dataset, load_splits, make_splits, mask_to_spans, native_bounds,
                                      save_dataset, save_splits, spans_to_mask, synth_generate)
from summarization.exceptions import ConfigurationError, DataError, DataLoadError, SchemaError


def _video(video_id, n=5, d=3, seed=0):
    features = np.random.default_rng(seed).standard_normal((n, d)).astype(np.float32)
    return FrameFeatureSequence(video_id=video_id, features=features, n_frames_original=2 * n,
                                picks=list(range(0, 2 * n, 2)))


def _refs(length):
    mask = np.zeros(length, dtype=np.int8)
    mask[1:4] = 1
    return ReferenceSummaries(per_user_masks=[mask, 1 - mask], aggregation_mode='max_over_users')


class DatasetContainerTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_preserves_features_bit_exactly(self):
        dataset = [(_video('a', seed=1), _refs(10)), (_video('b', seed=2), _refs(10))]
        manifest = save_dataset(self.root / 'ds', dataset, notes='test')

        loaded = load_dataset(manifest)

        self.assertEqual([v.video_id for v, _ in loaded], ['a', 'b'])
        for (orig, orig_refs), (video, refs) in zip(dataset, loaded):
            self.assertEqual(video.features.tobytes(), orig.features.tobytes())
            self.assertEqual(video.picks, orig.picks)
            self.assertEqual(video.n_frames_original, orig.n_frames_original)
            self.assertEqual(refs.aggregation_mode, 'max_over_users')
            for got, expected in zip(refs.per_user_masks, orig_refs.per_user_masks):
                np.testing.assert_array_equal(got, expected)

    def test_loaded_videos_have_manifest_dimension(self):
        manifest = save_dataset(self.root / 'ds', [(_video('a', d=32), _refs(10)), (_video('b', d=32), _refs(10))])
        loaded = load_dataset(manifest)
        self.assertEqual(len(loaded), 2)
        self.assertTrue(all(video.d == 32 for video, _ in loaded))

    def test_missing_blob_names_video(self):
        manifest = save_dataset(self.root / 'ds', [(_video('lost'), _refs(10))])
        (self.root / 'ds' / 'features' / 'lost.bin').unlink()
        with self.assertRaises(DataLoadError) as ctx:
            load_dataset(manifest)
        self.assertEqual(ctx.exception.video_id, 'lost')
        self.assertIn('lost', ctx.exception.message)

    def test_dimension_mismatch_is_schema_error(self):
        manifest = save_dataset(self.root / 'ds', [(_video('a'), _refs(10))])
        payload = json.loads(manifest.read_text(encoding='utf-8'))
        payload['d'] = 4
        manifest.write_text(json.dumps(payload), encoding='utf-8')
        with self.assertRaises(SchemaError):
            load_dataset(manifest)

    def test_non_finite_features_are_data_error(self):
        video = _video('a')
        manifest = save_dataset(self.root / 'ds', [(video, _refs(10))])
        bad = video.features.copy()
        bad[0, 0] = np.nan
        blob = self.root / 'ds' / 'features' / 'a.bin'
        raw = bytearray(blob.read_bytes())
        raw[16:] = np.ascontiguousarray(bad, dtype='<f4').tobytes()
        blob.write_bytes(bytes(raw))
        with self.assertRaises(DataError):
            load_dataset(manifest)

    def test_unsupported_version(self):
        manifest = save_dataset(self.root / 'ds', [(_video('a'), _refs(10))])
        payload = json.loads(manifest.read_text(encoding='utf-8'))
        payload['container_version'] = '9'
        manifest.write_text(json.dumps(payload), encoding='utf-8')
        with self.assertRaises(SchemaError):
            load_dataset(manifest)

    def test_save_refuses_to_overwrite_manifest(self):
        save_dataset(self.root / 'ds', [(_video('a'), _refs(10))])
        with self.assertRaises(ConfigurationError):
            save_dataset(self.root / 'ds', [(_video('a'), _refs(10))])


class NativeExpansionTest(SimpleTestCase):
    def test_first_frame_owns_from_zero(self):
        bounds = native_bounds([1, 3, 6], 8)
        np.testing.assert_array_equal(bounds, [0, 3, 6, 8])

    def test_expand_repeats_over_owned_intervals(self):
        expanded = expand_to_native(np.array([1, 0, 1]), [0, 2, 4], 7)
        np.testing.assert_array_equal(expanded, [1, 1, 0, 0, 1, 1, 1])

    def test_spans_round_trip(self):
        mask = np.array([0, 1, 1, 0, 1, 0, 0, 1], dtype=np.int8)
        spans = mask_to_spans(mask)
        self.assertEqual(spans, [[1, 3], [4, 5], [7, 8]])
        np.testing.assert_array_equal(spans_to_mask(spans, 8), mask)

    def test_invalid_span(self):
        with self.assertRaises(SchemaError):
            spans_to_mask([[3, 3]], 5)


class SplitsTest(SimpleTestCase):
    def test_sizes_with_validation_carved_from_train(self):
        ids = [f'v{i:02d}' for i in range(50)]
        splits = make_splits(ids, n_splits=5, test_fraction=0.2, val_fraction=0.2, seed=7)
        self.assertEqual(len(splits), 5)
        for split in splits:
            self.assertEqual((len(split.train_ids), len(split.val_ids), len(split.test_ids)), (32, 8, 10))
            split.validate(ids)
            self.assertEqual(sorted(split.train_ids + split.val_ids + split.test_ids), ids)

    def test_deterministic_for_seed(self):
        ids = [f'v{i}' for i in range(20)]
        first = make_splits(ids, 3, 0.2, 0.2, seed=4)
        second = make_splits(ids, 3, 0.2, 0.2, seed=4)
        self.assertEqual([s.to_dict() for s in first], [s.to_dict() for s in second])

    def test_too_few_ids(self):
        with self.assertRaises(ConfigurationError):
            make_splits(['a', 'b', 'c'], 1, test_fraction=0.5, val_fraction=0.5, seed=0)

    def test_save_and_load(self):
        ids = [f'v{i}' for i in range(10)]
        splits = make_splits(ids, 2, 0.2, 0.2, seed=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_splits(Path(tmp) / 'splits.json', splits)
            loaded = load_splits(path, ids)
        self.assertEqual([s.to_dict() for s in loaded], [s.to_dict() for s in splits])

    def test_overlapping_split_rejected(self):
        split = SplitSpec(split_id=0, train_ids=['a', 'b'], val_ids=['b'], test_ids=['c'], seed=0)
        with self.assertRaises(SchemaError):
            split.validate()


class SyntheticDatasetTest(SimpleTestCase):
    def test_construction(self):
        synthetic = synth_generate(n_videos=20, n=120, d=32, n_events=3, noise_scale=0.1, seed=1)
        self.assertEqual(len(synthetic.videos), 20)
        for video, refs in synthetic.pairs():
            self.assertEqual(video.features.shape, (120, 32))
            self.assertEqual(video.picks, list(range(120)))
            self.assertEqual(video.n_frames_original, 120)
            mask = refs.per_user_masks[0]
            self.assertEqual(len(mask_to_spans(mask)), 3)
            self.assertEqual(int(mask.sum()), 3 * synthetic.event_length)

    def test_noise_free_events_at_planted_distance(self):
        synthetic = synth_generate(n_videos=3, n=60, d=8, n_events=2, noise_scale=0.0, seed=2)
        for video, refs, base in zip(synthetic.videos, synthetic.references, synthetic.base_centroids):
            event_frames = video.features[refs.per_user_masks[0].astype(bool)]
            distances = np.linalg.norm(event_frames[:, None, :] - base[None, :, :], axis=2).min(axis=1)
            np.testing.assert_allclose(distances, 1.0, atol=1e-6)

    def test_nearest_centroid_recovers_events(self):
        synthetic = synth_generate(n_videos=20, n=120, d=32, n_events=3, noise_scale=0.1, seed=1)
        for video, refs, base, events in zip(synthetic.videos, synthetic.references,
                                             synthetic.base_centroids, synthetic.event_centroids):
            centroids = np.concatenate([base, events])
            is_event = np.arange(len(centroids)) >= len(base)
            distances = np.linalg.norm(video.features[:, None, :] - centroids[None, :, :], axis=2)
            predicted = is_event[distances.argmin(axis=1)].astype(np.int8)
            np.testing.assert_array_equal(predicted, refs.per_user_masks[0])

    def test_infeasible_geometry(self):
        with self.assertRaises(ConfigurationError):
            synth_generate(n_videos=1, n=10, d=4, n_events=3, event_length=4)
        with self.assertRaises(ConfigurationError):
            synth_generate(n_videos=1, n=10, d=1)
