import tempfile
from pathlib import Path

import torch
from django.test import SimpleTestCase

from summarization.checkpoints import (CheckpointStore, decode_checkpoint, encode_checkpoint, load_state,
                                       model_from_checkpoint, read_checkpoint)
from summarization.exceptions import LookupFailure, SchemaError
from summarization.networks import SumSRModel


class CheckpointFormatTest(SimpleTestCase):
    def test_encode_decode(self):
        state = {'a': torch.arange(6, dtype=torch.float32).reshape(2, 3), 'b': torch.tensor([1.5])}
        header, decoded = decode_checkpoint(encode_checkpoint(state, {'stage': 'selector'}))
        self.assertEqual(header['stage'], 'selector')
        self.assertEqual([t['name'] for t in header['tensors']], ['a', 'b'])
        for name in state:
            self.assertTrue(torch.equal(decoded[name], state[name]))

    def test_truncated_file(self):
        raw = encode_checkpoint({'a': torch.ones(4)}, {})
        with self.assertRaises(SchemaError):
            decode_checkpoint(raw[:-4])
        with self.assertRaises(SchemaError):
            decode_checkpoint(raw[:2])

    def test_model_rebuilt_from_header(self):
        model = SumSRModel(d=5, d_h=4, tau=0.3, seed=2)
        raw = encode_checkpoint(model.state_dict(), {'model_config': {'d': 5, 'd_h': 4, 'tau': 0.3}})
        rebuilt = model_from_checkpoint(*decode_checkpoint(raw))
        self.assertEqual(rebuilt.selector.tau, 0.3)
        for name, tensor in model.state_dict().items():
            self.assertTrue(torch.equal(rebuilt.state_dict()[name], tensor), name)

    def test_shape_mismatch(self):
        model = SumSRModel(d=5, d_h=4, seed=0)
        state = SumSRModel(d=6, d_h=4, seed=0).state_dict()
        with self.assertRaises(SchemaError):
            load_state(model, state)

    def test_missing_tensor(self):
        model = SumSRModel(d=5, d_h=4, seed=0)
        state = dict(model.state_dict())
        del state['mask.m']
        with self.assertRaises(SchemaError):
            load_state(model, state)


class CheckpointStoreTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.store = CheckpointStore(Path(self.tmp.name) / 'run', 'iter')

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_and_load_into(self):
        model = SumSRModel(d=4, d_h=4, seed=1)
        path = self.store.save(model, 2, 'selector', 7, {'l_model': 1.25})
        self.assertEqual(path.relative_to(self.store.run_dir), Path('ckpt/iter2/selector/7.bin'))

        other = SumSRModel(d=4, d_h=4, seed=9)
        header = self.store.load_into(other, 2, 'selector', 7)
        self.assertEqual(header['losses'], {'l_model': 1.25})
        self.assertEqual(header['variant'], 'iter')
        for name, tensor in model.state_dict().items():
            self.assertTrue(torch.equal(other.state_dict()[name], tensor), name)

    def test_epochs_sorted_numerically(self):
        model = SumSRModel(d=4, d_h=4, seed=1)
        for epoch in (10, 2, 1):
            self.store.save(model, 1, 'reconstructor', epoch)
        self.assertEqual(self.store.epochs(1, 'reconstructor'), [1, 2, 10])
        self.assertEqual(self.store.epochs(1, 'selector'), [])

    def test_unknown_stage(self):
        with self.assertRaises(SchemaError):
            self.store.checkpoint_path(1, 'decoder', 1)

    def test_missing_files(self):
        with self.assertRaises(LookupFailure):
            read_checkpoint(self.store.checkpoint_path(1, 'selector', 1))
        with self.assertRaises(LookupFailure):
            self.store.read_final()
        with self.assertRaises(LookupFailure):
            self.store.read_run_json()

    def test_final_checkpoint_path(self):
        self.store.write_run_json({'seed': 0})
        self.store.write_final({'checkpoint': 'ckpt/iter1/selector/3.bin'})
        self.assertEqual(self.store.final_checkpoint(), self.store.run_dir / 'ckpt/iter1/selector/3.bin')
        self.assertEqual(self.store.read_run_json(), {'seed': 0})
