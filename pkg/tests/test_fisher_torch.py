"""The differentiable bound must agree with the numpy implementation and
propagate finite gradients."""

import numpy as np
import pytest
import torch

from coisac.fisher import build_operators, efim, speb
from coisac.fisher_torch import FimConstants, efim_torch, speb_torch
from coisac.scenario import position_jacobian


@pytest.fixture(scope="module")
def consts(tiny_cfg_mod, tiny_samples_mod):
    return FimConstants.from_samples(tiny_samples_mod, tiny_cfg_mod)


@pytest.fixture(scope="module")
def tiny_cfg_mod():
    from conftest import tiny_config
    return tiny_config()


@pytest.fixture(scope="module")
def tiny_samples_mod(tiny_cfg_mod):
    from coisac.channel import synth_channels
    return synth_channels(tiny_cfg_mod, 4, seed=21)


def _beams(rng, n, n_tx, cols):
    return rng.standard_normal((n, n_tx, cols)) \
        + 1j * rng.standard_normal((n, n_tx, cols))


class TestAgreement:
    def test_efim_matches_numpy(self, tiny_cfg_mod, tiny_samples_mod, consts, rng):
        beams = _beams(rng, len(tiny_samples_mod), tiny_cfg_mod.n_tx, 3)
        got = efim_torch(torch.from_numpy(beams), consts, 1.0).numpy()
        for i, s in enumerate(tiny_samples_mod):
            ops = build_operators(s, tiny_cfg_mod)
            want = efim(beams[i], ops, 1.0)
            assert np.abs(got[i] - want).max() < 1e-12 * np.abs(want).max()

    def test_speb_matches_numpy(self, tiny_cfg_mod, tiny_samples_mod, consts, rng):
        beams = _beams(rng, len(tiny_samples_mod), tiny_cfg_mod.n_tx, 3)
        got = speb_torch(torch.from_numpy(beams), consts, 1.0).numpy()
        jac = position_jacobian(tiny_cfg_mod)
        for i, s in enumerate(tiny_samples_mod):
            ops = build_operators(s, tiny_cfg_mod)
            want, _ = speb(beams[i], ops, jac, 1.0)
            assert got[i] == pytest.approx(want, rel=1e-12)

    def test_subset(self, consts):
        sub = consts.subset([2, 0])
        assert len(sub) == 2
        np.testing.assert_array_equal(sub.deriv[0].numpy(), consts.deriv[2].numpy())


class TestGradients:
    def test_gradient_is_finite_and_nonzero(self, tiny_cfg_mod, consts, rng):
        beams_np = _beams(rng, len(consts), tiny_cfg_mod.n_tx, 3)
        beams = torch.from_numpy(beams_np).requires_grad_(True)
        bound = speb_torch(beams, consts, 1.0)
        bound.sum().backward()
        grad = beams.grad.numpy()
        assert np.all(np.isfinite(grad.view(float)))
        assert np.abs(grad).max() > 0

    def test_gradient_matches_finite_differences(self, tiny_cfg_mod, consts, rng):
        beams_np = _beams(rng, 1, tiny_cfg_mod.n_tx, 3)
        sub = consts.subset([0])
        beams = torch.from_numpy(beams_np.copy()).requires_grad_(True)
        speb_torch(beams, sub, 1.0).sum().backward()
        grad = beams.grad.numpy()[0]
        step = 1e-6
        for (r, c) in [(0, 0), (3, 1), (7, 2)]:
            for direction, part in ((1.0, "re"), (1j, "im")):
                hi = beams_np.copy(); hi[0, r, c] += direction * step
                lo = beams_np.copy(); lo[0, r, c] -= direction * step
                fd = (speb_torch(torch.from_numpy(hi), sub, 1.0).item()
                      - speb_torch(torch.from_numpy(lo), sub, 1.0).item()) / (2 * step)
                # Wirtinger convention: torch's grad of a real scalar wrt a
                # complex leaf stores d/dRe + i*d/dIm (conjugate gradient).
                got = grad[r, c].real if part == "re" else grad[r, c].imag
                assert got == pytest.approx(fd, rel=1e-4, abs=1e-10)
