import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gensemcom.channel import (
    Channel, ChannelError, complex_to_real, power_normalize, real_to_complex, sigma_from_snr,
    snr_from_sigma, transmit,
)
from gensemcom.config import NOISELESS, ChannelConfig


def rand_signal(k, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.complex(torch.randn(k, generator=g), torch.randn(k, generator=g))


def test_power_normalize_constant():
    x = torch.full((5,), 2 + 0j, dtype=torch.complex64)
    assert torch.equal(power_normalize(x), torch.full((5,), 1 + 0j, dtype=torch.complex64))


def test_power_normalize_random_and_idempotent():
    x = power_normalize(rand_signal(1024).to(torch.complex128))
    assert abs(float(x.abs().pow(2).mean()) - 1) < 1e-6
    assert torch.allclose(power_normalize(x), x, atol=1e-6)


def test_power_normalize_preserves_direction():
    x = rand_signal(64)
    y = power_normalize(x)
    ratio = y / x
    assert torch.allclose(ratio, ratio[0].expand_as(ratio), atol=1e-5)


def test_power_normalize_batched():
    x = torch.stack([rand_signal(100, 1) * 5, rand_signal(100, 2) * 0.1])
    p = power_normalize(x).abs().pow(2).mean(-1)
    assert torch.allclose(p, torch.ones(2), atol=1e-5)


def test_power_normalize_zero_rejected():
    with pytest.raises(ChannelError, match="degenerate"):
        power_normalize(torch.zeros(8, dtype=torch.complex64))


def test_real_complex_pairing():
    s = real_to_complex(torch.tensor([1.0, 2.0, 3.0, 4.0]))
    assert torch.equal(s, torch.tensor([1 + 2j, 3 + 4j], dtype=torch.complex64))
    v = torch.randn(3, 10)
    assert torch.equal(complex_to_real(real_to_complex(v)), v)
    with pytest.raises(ChannelError):
        real_to_complex(torch.ones(5))


@pytest.mark.parametrize("sigma2,snr", [(1.0, 0.0), (0.1, 10.0)])
def test_snr_sigma_pairs(sigma2, snr):
    assert snr_from_sigma(sigma2) == pytest.approx(snr, abs=1e-12)
    assert sigma_from_snr(snr) == pytest.approx(sigma2, rel=1e-12)


@given(st.floats(-30, 50))
def test_snr_round_trip(snr):
    assert snr_from_sigma(sigma_from_snr(snr)) == pytest.approx(snr, abs=1e-9)


def test_snr_errors():
    with pytest.raises(ChannelError):
        snr_from_sigma(0.0)
    with pytest.raises(ChannelError):
        sigma_from_snr(math.inf)
    with pytest.raises(ChannelError):
        transmit(rand_signal(4), ChannelConfig(snr_db=math.nan))
    assert sigma_from_snr(NOISELESS) == 0.0


def test_noiseless_identity():
    x = power_normalize(rand_signal(256))
    y = transmit(x, ChannelConfig(snr_db=NOISELESS, mode="awgn"))
    assert torch.equal(y, x)


def test_awgn_noise_statistics():
    x = power_normalize(rand_signal(100_000).to(torch.complex128))
    y = transmit(x, ChannelConfig(snr_db=10, seed=3))
    n = (y - x).numpy()
    assert abs(np.mean(np.abs(n) ** 2) - 0.1) / 0.1 < 0.03
    assert abs(n.real.mean()) < 0.01 and abs(n.imag.mean()) < 0.01
    # circular symmetry: power split evenly between components
    assert abs(n.real.var() - n.imag.var()) < 0.005


def test_rayleigh_gain_unit_power():
    cfg = ChannelConfig(snr_db=NOISELESS, mode="rayleigh_block", equalize=False)
    x = torch.ones(10_000, 1, dtype=torch.complex64)
    _, h = transmit(x, cfg, generator=torch.Generator().manual_seed(5), return_h=True)
    assert h.shape == (10_000, 1)
    assert abs(float(h.abs().pow(2).mean()) - 1) < 0.05


def test_rayleigh_one_coefficient_per_block():
    cfg = ChannelConfig(snr_db=NOISELESS, mode="rayleigh_block", equalize=False, seed=1)
    x = power_normalize(rand_signal(32))
    y, h = transmit(x, cfg, return_h=True)
    assert torch.allclose(y, h * x)


def test_equalized_fading_noiseless_is_identity():
    x = power_normalize(rand_signal(64))
    for seed in range(5):
        y = transmit(x, ChannelConfig(snr_db=NOISELESS, mode="rayleigh_block", equalize=True, seed=seed))
        assert torch.equal(y, x)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["awgn", "rayleigh_block"]))
def test_determinism(seed, mode):
    x = power_normalize(rand_signal(128))
    cfg = ChannelConfig(snr_db=5, mode=mode, seed=seed)
    assert torch.equal(transmit(x, cfg), transmit(x, cfg))


def test_channel_module_stream_and_gradient():
    ch = Channel(ChannelConfig(snr_db=10, seed=9))
    x = power_normalize(rand_signal(16)).requires_grad_(False)
    v = torch.randn(32, requires_grad=True)
    y1 = ch(power_normalize(real_to_complex(v)))
    complex_to_real(y1).sum().backward()
    assert v.grad is not None and torch.isfinite(v.grad).all()
    ch.reseed(9)
    y2 = ch(x)
    ch.reseed(9)
    assert torch.equal(ch(x), y2)
