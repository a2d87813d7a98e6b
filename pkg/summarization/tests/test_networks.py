import math

import numpy as np
import torch
from django.test import SimpleTestCase

from summarization.exceptions import ContractError, InputError, NumericError
from summarization.losses import mask_loss, model_loss, recon_loss, spar_loss
from summarization.networks import (MaskVector, ReconstructorNet, SelectorNet, SumSRModel, blend_summary,
                                    hard_summary, init_uniform_fan_in, parameter_counts, random_mask,
                                    reconstructor_forward, selector_forward)


def lstm_cell(x, h, c, w_ih, w_hh, b_ih, b_hh):
    gates = w_ih @ x + b_ih + w_hh @ h + b_hh
    i, f, g, o = gates.chunk(4)
    c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
    h = torch.sigmoid(o) * torch.tanh(c)
    return h, c


def lstm_loop(lstm, inputs, h0=None, c0=None):
    """Двунаправленная многослойная LSTM по шагам; состояния в порядке (слой, направление)"""
    steps, size = inputs.shape[0], lstm.hidden_size
    n_states = 2 * lstm.num_layers
    h0 = torch.zeros(n_states, size, dtype=inputs.dtype) if h0 is None else h0
    c0 = torch.zeros(n_states, size, dtype=inputs.dtype) if c0 is None else c0
    layer_input = inputs
    h_n, c_n = [], []
    for layer in range(lstm.num_layers):
        outputs = []
        for direction, suffix in enumerate(['', '_reverse']):
            weights = [getattr(lstm, f'{name}_l{layer}{suffix}') for name in ('weight_ih', 'weight_hh',
                                                                                  'bias_ih', 'bias_hh')]
            h, c = h0[2 * layer + direction], c0[2 * layer + direction]
            out = [None] * steps
            order = range(steps) if direction == 0 else reversed(range(steps))
            for t in order:
                h, c = lstm_cell(layer_input[t], h, c, *weights)
                out[t] = h
            outputs.append(torch.stack(out))
            h_n.append(h)
            c_n.append(c)
        layer_input = torch.cat(outputs, dim=1)
    return layer_input, torch.stack(h_n), torch.stack(c_n)


def selector_reference(selector, features):
    projected = torch.stack([selector.input_projection.weight @ x + selector.input_projection.bias
                             for x in features])
    hidden, _, _ = lstm_loop(selector.lstm, projected)
    scores = []
    for h in hidden:
        logits = selector.head.weight @ h + selector.head.bias
        e = torch.exp(logits / selector.tau)
        scores.append(e[0] / e.sum())
    return torch.stack(scores)


def reconstructor_reference(reconstructor, summary):
    Y, h_n, c_n = lstm_loop(reconstructor.encoder, summary)
    query = torch.cat([h_n[-2], h_n[-1]])
    previous = torch.zeros(reconstructor.d_h, dtype=summary.dtype)
    h, c = h_n, c_n
    outputs, weights = [], []
    for _ in range(summary.shape[0]):
        energy = torch.stack([y @ (reconstructor.attention_matrix @ query) for y in Y])
        w = torch.exp(energy - energy.max())
        w = w / w.sum()
        context = (w.unsqueeze(1) * Y).sum(dim=0)
        out, h, c = lstm_loop(reconstructor.decoder, torch.cat([context, previous]).unsqueeze(0), h, c)
        z = out[0]
        outputs.append(reconstructor.output_projection.weight @ z + reconstructor.output_projection.bias)
        weights.append(w)
        query = previous = z
    return torch.stack(outputs), torch.stack(weights)


class SelectorTest(SimpleTestCase):
    def setUp(self):
        self.model = SumSRModel(d=4, d_h=4, tau=0.5, seed=1, dtype=torch.float64)
        self.features = torch.as_tensor(np.random.default_rng(2).standard_normal((3, 4)))

    def test_matches_step_by_step_reference(self):
        with torch.no_grad():
            scores = selector_forward(self.model.selector, self.features)
            expected = selector_reference(self.model.selector, self.features)
        self.assertEqual(scores.shape, (3,))
        torch.testing.assert_close(scores, expected, rtol=0, atol=1e-6)

    def test_scores_in_open_unit_interval(self):
        scores = selector_forward(self.model.selector, np.random.default_rng(0).standard_normal((12, 4)))
        self.assertTrue(bool(((scores > 0) & (scores < 1)).all()))

    def test_non_finite_input(self):
        features = self.features.clone()
        features[1, 2] = float('nan')
        with self.assertRaises(NumericError):
            selector_forward(self.model.selector, features)

    def test_wrong_shape(self):
        with self.assertRaises(InputError):
            selector_forward(self.model.selector, torch.zeros(3, 5, dtype=torch.float64))

    def test_invalid_construction(self):
        with self.assertRaises(InputError):
            SelectorNet(4, 3)
        with self.assertRaises(InputError):
            SelectorNet(4, 4, tau=0.0)


class ReconstructorTest(SimpleTestCase):
    def setUp(self):
        self.model = SumSRModel(d=6, d_h=4, seed=3, dtype=torch.float64)
        self.summary = torch.as_tensor(np.random.default_rng(4).standard_normal((4, 6)))

    def test_matches_step_by_step_reference(self):
        with torch.no_grad():
            reconstructed, weights = reconstructor_forward(self.model.reconstructor, self.summary,
                                                           return_attention=True)
            expected, expected_weights = reconstructor_reference(self.model.reconstructor, self.summary)
        self.assertEqual(reconstructed.shape, (4, 6))
        torch.testing.assert_close(reconstructed, expected, rtol=0, atol=1e-6)
        torch.testing.assert_close(weights, expected_weights, rtol=0, atol=1e-6)

    def test_attention_weights_sum_to_one(self):
        with torch.no_grad():
            _, weights = reconstructor_forward(self.model.reconstructor, self.summary, return_attention=True)
        torch.testing.assert_close(weights.sum(dim=1), torch.ones(4, dtype=torch.float64), rtol=0, atol=1e-6)

    def test_wrong_width(self):
        with self.assertRaises(InputError):
            reconstructor_forward(self.model.reconstructor, torch.zeros(4, 5, dtype=torch.float64))


class InitializationTest(SimpleTestCase):
    def test_uniform_fan_in_bounds(self):
        reconstructor = ReconstructorNet(5, 4)
        init_uniform_fan_in(reconstructor, torch.Generator().manual_seed(0))
        params = dict(reconstructor.named_parameters())
        for name, param in params.items():
            fan_in = param.shape[1] if param.dim() >= 2 else params[name.replace('bias', 'weight')].shape[1]
            self.assertLessEqual(float(param.abs().max()), 1.0 / math.sqrt(fan_in) + 1e-7, name)

    def test_seed_reproducible(self):
        first = SumSRModel(d=4, d_h=4, seed=7).state_dict()
        second = SumSRModel(d=4, d_h=4, seed=7).state_dict()
        for name in first:
            self.assertTrue(torch.equal(first[name], second[name]), name)

    def test_mask_starts_at_zero(self):
        model = SumSRModel(d=4, d_h=4, seed=0)
        self.assertTrue(torch.equal(model.mask.m, torch.zeros(4)))
        self.assertFalse(model.mask.trainable)
        model.mask.trainable = True
        self.assertTrue(model.mask.m.requires_grad)

    def test_parameter_counts(self):
        self.assertEqual(parameter_counts(SumSRModel(d=6, d_h=4, seed=0)),
                         {'selector': 294, 'reconstructor': 654, 'mask': 6, 'total': 954})


class SummaryConstructionTest(SimpleTestCase):
    def setUp(self):
        self.mask = MaskVector(3).double()
        with torch.no_grad():
            self.mask.m.copy_(torch.tensor([0.3, -1.7, 2.5], dtype=torch.float64))
        self.features = torch.as_tensor(np.random.default_rng(6).standard_normal((4, 3)))

    def test_blend_endpoints_exact(self):
        ones = torch.ones(4, dtype=torch.float64)
        blended = blend_summary(self.features, ones, self.mask)
        self.assertTrue(torch.equal(blended, self.features))
        blended = blend_summary(self.features, torch.zeros(4, dtype=torch.float64), self.mask)
        self.assertTrue(torch.equal(blended, self.mask.m.detach().expand(4, 3)))

    def test_blend_rejects_scores_outside_unit_interval(self):
        with self.assertRaises(ContractError):
            blend_summary(self.features, torch.tensor([0.5, 1.2, 0.0, 0.3], dtype=torch.float64), self.mask)

    def test_hard_summary_rows(self):
        summary = hard_summary(self.features, np.array([1, 0, 0, 1]), self.mask)
        self.assertTrue(torch.equal(summary[0], self.features[0]))
        self.assertTrue(torch.equal(summary[1], self.mask.m.detach()))
        self.assertTrue(torch.equal(summary[3], self.features[3]))

    def test_hard_summary_requires_binary_mask(self):
        with self.assertRaises(InputError):
            hard_summary(self.features, np.array([1, 2, 0, 1]), self.mask)
        with self.assertRaises(InputError):
            hard_summary(self.features, np.array([1, 0, 1]), self.mask)

    def test_random_mask_replaces_exactly_masked_rows(self):
        features = torch.as_tensor(np.random.default_rng(1).standard_normal((50, 3)))
        masked, indices = random_mask(features, self.mask, 0.15, 9)
        kept = np.setdiff1d(np.arange(50), indices)
        self.assertTrue(torch.equal(masked[kept], features[kept]))
        self.assertTrue(torch.equal(masked[indices], self.mask.m.detach().expand(len(indices), 3)))
        again, again_indices = random_mask(features, self.mask, 0.15, 9)
        np.testing.assert_array_equal(indices, again_indices)
        self.assertTrue(torch.equal(masked, again))

    def test_random_mask_keeps_alpha_fraction(self):
        features = torch.zeros(10000, 2, dtype=torch.float64)
        _, indices = random_mask(features, MaskVector(2).double(), 0.15, 4)
        self.assertLessEqual(abs(1 - indices.size / 10000 - 0.15), 0.011)

    def test_random_mask_rejects_alpha(self):
        with self.assertRaises(InputError):
            random_mask(self.features, self.mask, 1.0, 0)


class GradientTest(SimpleTestCase):
    """Аналитические градиенты против центральных разностей в float64"""

    STEP = 1e-5

    def setUp(self):
        self.model = SumSRModel(d=5, d_h=4, tau=0.5, seed=12, dtype=torch.float64)
        with torch.no_grad():
            self.model.mask.m.copy_(torch.as_tensor(np.random.default_rng(13).standard_normal(5)))
        self.model.mask.trainable = True
        self.features = torch.as_tensor(np.random.default_rng(14).standard_normal((6, 5)))

    def model_objective(self):
        scores = selector_forward(self.model.selector, self.features)
        blended = blend_summary(self.features, scores, self.model.mask)
        reconstructed = reconstructor_forward(self.model.reconstructor, blended)
        return model_loss(recon_loss(self.features, reconstructed), spar_loss(scores, 0.7))

    def mask_objective(self):
        masked, indices = random_mask(self.features, self.model.mask, 0.15, 21)
        return mask_loss(masked, reconstructor_forward(self.model.reconstructor, masked), indices)

    def sampled_entries(self):
        selector, reconstructor = self.model.selector, self.model.reconstructor
        return [
            ('input_projection', selector.input_projection.weight, (0, 1)),
            ('selector_recurrent', selector.lstm.weight_hh_l0, (2, 1)),
            ('selector_recurrent_upper', selector.lstm.weight_ih_l1_reverse, (1, 3)),
            ('head', selector.head.weight, (0, 2)),
            ('encoder_recurrent', reconstructor.encoder.weight_hh_l1, (3, 0)),
            ('decoder_recurrent', reconstructor.decoder.weight_ih_l0, (4, 5)),
            ('attention', reconstructor.attention_matrix, (1, 2)),
            ('decoder_projection', reconstructor.output_projection.weight, (2, 3)),
            ('mask', self.model.mask.m, (1,)),
        ]

    def check(self, objective, entries):
        self.model.zero_grad()
        objective().backward()
        for name, param, index in entries:
            analytic = float(param.grad[index])
            with torch.no_grad():
                original = float(param[index])
                param[index] = original + self.STEP
                plus = float(objective())
                param[index] = original - self.STEP
                minus = float(objective())
                param[index] = original
            numeric = (plus - minus) / (2 * self.STEP)
            tolerance = 1e-4 * max(abs(analytic), abs(numeric)) + 1e-8
            self.assertLessEqual(abs(analytic - numeric), tolerance, f'{name}: {analytic} vs {numeric}')

    def test_model_loss_gradients(self):
        self.check(self.model_objective, self.sampled_entries())

    def test_mask_loss_gradients(self):
        entries = [e for e in self.sampled_entries() if e[0] in ('encoder_recurrent', 'decoder_recurrent',
                                                                 'attention', 'decoder_projection', 'mask')]
        self.check(self.mask_objective, entries)
