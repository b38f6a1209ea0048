"""Network forward map: features, attention, aggregation (against a scalar
loop oracle), heads, power normalization, equivariance."""

import math

import numpy as np
import pytest
import torch
from torch import nn

from coisac.channel import ChannelSample, synth_channels
from coisac.errors import DimensionError, EmptyNeighborSet
from coisac.hetgraph import build_graph, neighbors
from coisac.lhgnn import (Lhgnn, LhgnnLayer, attention_weights, default_schedule,
                          init_features, init_features_batch, normalize_beams)
from coisac.profiles import scenario_profile
from coisac.scenario import AngleSet

from conftest import tiny_config


class TestInitFeatures:
    def test_single_antenna_real_channel(self):
        cfg = tiny_config(n_bs=1, n_users=1, array=1)
        chan = np.array([[1.0 + 0.0j]], dtype=np.complex64)
        angles = [AngleSet.from_positions(cfg.bs_positions, cfg.target_positions[0])]
        sample = ChannelSample(chan=chan, target_pos=cfg.target_positions,
                               alphas=np.ones((1, 1, 1), complex), angles=angles)
        feats = init_features(sample, cfg)
        np.testing.assert_allclose(feats[0], [1.0, 0.0])

    def test_sensing_feature_unit_norm(self, tiny_cfg, tiny_samples):
        feats = init_features(tiny_samples[0], tiny_cfg)
        n_comm = tiny_cfg.n_bs * tiny_cfg.n_users
        for row in feats[n_comm:]:
            assert np.linalg.norm(row) == pytest.approx(1.0, abs=1e-9)

    def test_full_scale_dims(self):
        cfg = scenario_profile("paper")
        sample = synth_channels(cfg, 1, seed=0)[0]
        feats = init_features(sample, cfg)
        assert feats.shape == (18, 32)

    def test_noisy_sample_changes_features(self, tiny_cfg, tiny_samples):
        from coisac.channel import PerturbationSpec, perturb
        spec = PerturbationSpec(csi_snr_db=0.0, pos_err_lo=2.0, pos_err_hi=3.0,
                                seed=9)
        noisy = perturb(tiny_samples[0], spec, tiny_cfg)
        clean_f = init_features(tiny_samples[0], tiny_cfg)
        noisy_f = init_features(noisy, tiny_cfg)
        assert not np.allclose(clean_f, noisy_f)


def _scalar_linear(weight, bias, vec):
    return weight @ vec + bias


class TestAttention:
    def _maps(self, scale_q=1.0, bias_k=0.0):
        q = nn.Linear(1, 1)
        k = nn.Linear(1, 1)
        with torch.no_grad():
            q.weight.fill_(scale_q); q.bias.zero_()
            k.weight.fill_(1.0); k.bias.fill_(bias_k)
        return q, k

    def test_singleton(self):
        q, k = self._maps()
        w = attention_weights(torch.tensor([1.0]), torch.tensor([[0.7]]), q, k)
        np.testing.assert_allclose(w.detach().numpy(), [1.0])

    def test_identical_neighbors_uniform(self):
        q, k = self._maps()
        w = attention_weights(torch.tensor([1.0]),
                              torch.tensor([[0.3], [0.3], [0.3]]), q, k)
        np.testing.assert_allclose(w.detach().numpy(), [1/3, 1/3, 1/3], atol=1e-7)

    def test_hand_softmax(self):
        # scaled dot products (0, ln 3)  ->  weights (0.25, 0.75)
        q, k = self._maps()
        neigh = torch.tensor([[0.0], [math.log(3.0)]])
        w = attention_weights(torch.tensor([1.0]), neigh, q, k)
        np.testing.assert_allclose(w.detach().numpy(), [0.25, 0.75], atol=1e-7)

    def test_score_shift_invariance(self):
        q, k0 = self._maps(bias_k=0.0)
        _, k1 = self._maps(bias_k=5.0)   # shifts every score by f3(c)*5
        neigh = torch.tensor([[0.1], [0.9], [-0.4]])
        w0 = attention_weights(torch.tensor([1.0]), neigh, q, k0)
        w1 = attention_weights(torch.tensor([1.0]), neigh, q, k1)
        np.testing.assert_allclose(w0.detach().numpy(), w1.detach().numpy(),
                                   atol=1e-6)

    def test_positive_and_normalized(self):
        torch.manual_seed(11)
        q = nn.Linear(4, 3)
        k = nn.Linear(4, 3)
        w = attention_weights(torch.randn(4), torch.randn(6, 4), q, k)
        w = w.detach().numpy()
        assert np.all(w > 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-7)

    def test_empty_neighbors(self):
        q, k = self._maps()
        with pytest.raises(EmptyNeighborSet):
            attention_weights(torch.tensor([1.0]), torch.zeros((0, 1)), q, k)


class TestLayerForward:
    def test_zero_weights_degenerate(self):
        graph = build_graph(2, 2, 1)
        layer = LhgnnLayer(graph, 4, 5)
        with torch.no_grad():
            for p in layer.parameters():
                p.zero_()
            layer.norm_c.weight.fill_(1.0)   # default LayerNorm scale
            layer.norm_s.weight.fill_(1.0)
        out = layer(torch.randn(3, graph.n_nodes, 4, dtype=torch.float64).float())
        np.testing.assert_allclose(out.detach().numpy(),
                                   np.zeros((3, graph.n_nodes, 5)), atol=1e-7)

    def test_matches_scalar_loop_oracle(self):
        torch.manual_seed(0)
        graph = build_graph(2, 2, 1)
        in_dim, out_dim = 6, 5
        layer = LhgnnLayer(graph, in_dim, out_dim).double()
        feats = torch.randn(2, graph.n_nodes, in_dim, dtype=torch.float64)
        got = layer(feats).detach().numpy()

        def agg_oracle(rel, center, x):
            blk = layer.blocks[rel]
            w1 = blk.self_map.weight.detach().numpy()
            b1 = blk.self_map.bias.detach().numpy()
            w2 = blk.neighbor_map.weight.detach().numpy()
            b2 = blk.neighbor_map.bias.detach().numpy()
            w3 = blk.query_map.weight.detach().numpy()
            b3 = blk.query_map.bias.detach().numpy()
            w4 = blk.key_map.weight.detach().numpy()
            b4 = blk.key_map.bias.detach().numpy()
            scores = [np.dot(_scalar_linear(w3, b3, center),
                             _scalar_linear(w4, b4, xb)) / out_dim for xb in x]
            m = max(scores)
            expw = [math.exp(s - m) for s in scores]
            lam = [e / sum(expw) for e in expw]
            agg = sum(l * _scalar_linear(w2, b2, xb) for l, xb in zip(lam, x))
            return _scalar_linear(w1, b1, center) + agg / len(x)

        def layernorm_oracle(norm, vec):
            weight = norm.weight.detach().numpy()
            bias = norm.bias.detach().numpy()
            mean = vec.mean()
            var = vec.var()                       # biased, as LayerNorm uses
            return (vec - mean) / math.sqrt(var + norm.eps) * weight + bias

        leaky = lambda v: np.where(v > 0, v, 0.01 * v)
        for b in range(feats.shape[0]):
            fb = feats[b].numpy()
            for v in range(graph.n_nodes):
                kind = graph.node_type[v]
                rels = graph.relations_of(kind)
                norm = layer.norm_c if kind == "c" else layer.norm_s
                terms = []
                for rel in rels:
                    neigh = [fb[j] for j in neighbors(graph, v, rel)]
                    agg = agg_oracle(rel, fb[v], neigh)
                    terms.append(layernorm_oracle(norm, leaky(agg)))
                expected = np.mean(terms, axis=0)
                assert np.abs(got[b, v] - expected).max() < 1e-6

    def test_user_permutation_equivariance_single_layer(self):
        torch.manual_seed(1)
        graph = build_graph(2, 3, 1)
        layer = LhgnnLayer(graph, 4, 4).double()
        feats = torch.randn(1, graph.n_nodes, 4, dtype=torch.float64)
        perm = [1, 2, 0]
        node_perm = list(range(graph.n_nodes))
        for n in range(2):
            for k in range(3):
                node_perm[graph.comm_node(n, k)] = graph.comm_node(n, perm[k])
        permuted = torch.empty_like(feats)
        for src, dst in enumerate(node_perm):
            permuted[:, dst] = feats[:, src]
        out = layer(feats).detach().numpy()
        out_p = layer(permuted).detach().numpy()
        for src, dst in enumerate(node_perm):
            np.testing.assert_allclose(out_p[:, dst], out[:, src], atol=1e-10)


class TestNormalizeBeams:
    def test_under_budget_unchanged(self):
        raw = torch.zeros(1, 8, 3, dtype=torch.complex128)
        raw[0, 0, 0] = 0.1
        out = normalize_beams(raw, torch.tensor([1.0, 1.0]), 2)
        np.testing.assert_allclose(out.numpy(), raw.numpy())

    def test_over_budget_scaled_exactly(self):
        raw = torch.zeros(1, 8, 2, dtype=torch.complex128)
        raw[0, :4, 0] = 1.0          # BS 0 power = 4 = 4 * budget
        out = normalize_beams(raw, torch.tensor([1.0, 1.0]), 2)
        np.testing.assert_allclose(out[0, :4, 0].numpy(), np.full(4, 0.5))
        power = np.sum(np.abs(out[0, :4].numpy()) ** 2)
        assert power == pytest.approx(1.0, rel=1e-12)

    def test_zero_input(self):
        raw = torch.zeros(2, 8, 3, dtype=torch.complex64)
        out = normalize_beams(raw, torch.tensor([0.5, 0.5]), 2)
        assert torch.all(out == 0)


class TestForward:
    def _model(self, cfg, dtype=torch.float32, schedule=(8, 8)):
        graph = build_graph(cfg.n_bs, cfg.n_users, cfg.n_targets)
        return Lhgnn(graph, cfg.n_antennas, schedule=list(schedule), dtype=dtype)

    def test_output_shape_and_purity(self, tiny_cfg, tiny_samples):
        torch.manual_seed(0)
        model = self._model(tiny_cfg)
        feats = torch.from_numpy(
            init_features_batch(tiny_samples[:3], tiny_cfg)).float()
        power = torch.as_tensor(tiny_cfg.power_budget)
        out1 = model(feats, power)
        out2 = model(feats, power)
        assert out1.shape == (3, tiny_cfg.n_tx, tiny_cfg.n_beams)
        np.testing.assert_array_equal(out1.detach().numpy(), out2.detach().numpy())

    def test_power_feasibility_random_draws(self, tiny_cfg):
        from coisac.commetrics import per_bs_power
        torch.manual_seed(3)
        feats = torch.randn(64, 6, 2 * tiny_cfg.n_antennas)
        power = torch.as_tensor(tiny_cfg.power_budget)
        for _ in range(5):
            model = self._model(tiny_cfg)
            beams = model(feats, power).detach().numpy()
            for b in beams:
                assert np.all(per_bs_power(b, tiny_cfg.n_bs)
                              <= tiny_cfg.power_budget + 1e-9)

    def test_head_zero_gives_zero_beams(self, tiny_cfg, tiny_samples):
        model = self._model(tiny_cfg)
        with torch.no_grad():
            for p in model.head_c.parameters():
                p.zero_()
            for p in model.head_s.parameters():
                p.zero_()
        feats = torch.from_numpy(
            init_features_batch(tiny_samples[:2], tiny_cfg)).float()
        beams = model(feats, torch.as_tensor(tiny_cfg.power_budget))
        assert torch.all(beams == 0)

    def test_user_permutation_equivariance_end_to_end(self, tiny_cfg):
        cfg = tiny_config(n_users=3)
        samples = synth_channels(cfg, 2, seed=5)
        torch.manual_seed(7)
        graph = build_graph(cfg.n_bs, cfg.n_users, cfg.n_targets)
        model = Lhgnn(graph, cfg.n_antennas, schedule=[8, 8],
                      dtype=torch.float64)
        power = torch.as_tensor(cfg.power_budget)
        perm = [2, 0, 1]
        feats = torch.from_numpy(init_features_batch(samples, cfg))
        beams = model(feats, power).detach().numpy()

        import dataclasses
        permuted = [dataclasses.replace(s, chan=s.chan[:, perm]) for s in samples]
        feats_p = torch.from_numpy(init_features_batch(permuted, cfg))
        beams_p = model(feats_p, power).detach().numpy()
        # user k of the permuted system is original user perm[k]
        expected = beams[:, :, [0] + [1 + perm[k] for k in range(3)]]
        assert np.abs(beams_p - expected).max() < 1e-5

    def test_wrong_feature_width(self, tiny_cfg):
        model = self._model(tiny_cfg)
        with pytest.raises(DimensionError):
            model(torch.randn(1, 6, 5), torch.as_tensor(tiny_cfg.power_budget))

    def test_default_schedule(self):
        assert default_schedule(16) == [32, 128, 128, 128, 256, 512, 256, 128, 32]

    def test_full_scale_forward_shapes(self):
        # Default 9-layer schedule at the full-scale sizes; beams are 32
        # reals per node assembled into a 48 x 6 matrix.
        cfg = scenario_profile("paper")
        sample = synth_channels(cfg, 1, seed=0)[0]
        torch.manual_seed(0)
        graph = build_graph(cfg.n_bs, cfg.n_users, cfg.n_targets)
        model = Lhgnn(graph, cfg.n_antennas)
        feats = torch.from_numpy(init_features_batch([sample], cfg)).float()
        beams = model(feats, torch.as_tensor(cfg.power_budget))
        assert beams.shape == (1, 48, 6)
        from coisac.commetrics import per_bs_power
        assert np.all(per_bs_power(beams[0].detach().numpy(), 3)
                      <= cfg.power_budget + 1e-9)

    def test_bs_ss_relation_absent_at_single_target(self, tiny_cfg):
        model = self._model(tiny_cfg)
        assert "bs_ss" not in model.layers[0].blocks
        assert set(model.layers[0].blocks) == {"bs_cc", "ue", "bs_cs", "tgt", "bs_sc"}

    @pytest.mark.parametrize("case", ["single_user", "single_bs",
                                      "two_targets", "linear_array"])
    def test_degenerate_sizes_forward(self, case):
        # Sizes that add or drop whole relations (or collapse an array
        # axis) must still produce feasible beams of the right shape.
        from coisac.baselines import build_model
        from coisac.commetrics import per_bs_power
        if case == "single_user":
            cfg = tiny_config(n_users=1)
        elif case == "single_bs":
            cfg = tiny_config(n_bs=1, n_users=2)
        elif case == "two_targets":
            cfg = tiny_config(n_targets=2,
                              target_positions=[[30.0, 40.0, 20.0],
                                                [10.0, 25.0, 15.0]])
        else:
            cfg = tiny_config(array=1)
            import dataclasses
            cfg = dataclasses.replace(cfg, array_x=4)
        samples = synth_channels(cfg, 2, seed=2)
        for method in ("lhgnn", "homo_gnn", "naive_conv"):
            torch.manual_seed(0)
            model = build_model(method, cfg, schedule=[8, 8])
            feats = torch.from_numpy(init_features_batch(samples, cfg)).float()
            beams = model(feats, torch.as_tensor(cfg.power_budget))
            assert beams.shape == (2, cfg.n_tx, cfg.n_beams)
            for b in beams.detach().numpy():
                assert np.all(per_bs_power(b, cfg.n_bs)
                              <= cfg.power_budget + 1e-9)
