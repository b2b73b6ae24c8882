import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gensemcom.channel import power_normalize, real_to_complex
from gensemcom.config import desk_config
from gensemcom.decoders import (
    ReconstructionDecoder, SegmentationDecoder, loss_reconstruction, loss_segmentation,
)
from gensemcom.geometry import encoder_layout


def inputs(cfg, batch=2, scale=1.0):
    n = encoder_layout(cfg).n_reals
    y = power_normalize(real_to_complex(torch.randn(batch, n)))
    f = torch.randn(batch, cfg.rx_kb.channels, 8, 8) * scale
    return y, f


def ce_oracle(logits, mask):
    """Per-pixel loop with explicit max subtraction."""
    B, C, H, W = logits.shape
    total, n = 0.0, 0
    for b in range(B):
        for i in range(H):
            for j in range(W):
                t = int(mask[b, i, j])
                if t == 255:
                    continue
                m = [float(logits[b, c, i, j]) for c in range(C)]
                top = max(m)
                total -= (m[t] - top) - math.log(sum(math.exp(v - top) for v in m))
                n += 1
    return total / n


def test_recon_shape_and_range_for_garbage():
    cfg = desk_config()
    dec = ReconstructionDecoder(cfg, cfg.rx_kb.channels).eval()
    y, f = inputs(cfg, scale=1e3)
    with torch.no_grad():
        out = dec(y * 50, f)
    assert out.shape == (2, 3, 32, 32)
    assert out.min() >= 0 and out.max() <= 1


def test_recon_steps_change_output():
    cfg = desk_config()
    dec = ReconstructionDecoder(cfg, cfg.rx_kb.channels).eval()
    y, f = inputs(cfg)
    with torch.no_grad():
        a, b = dec(y, f, steps=1), dec(y, f, steps=4)
    assert not torch.equal(a, b)
    with pytest.raises(ValueError):
        dec(y, f, steps=0)


def test_recon_layout_mismatch():
    cfg = desk_config()
    dec = ReconstructionDecoder(cfg, cfg.rx_kb.channels)
    with pytest.raises(ValueError, match="layout"):
        dec(torch.ones(2, 10, dtype=torch.complex64), torch.zeros(2, 32, 8, 8))


def test_seg_full_class_count():
    cfg = desk_config("SEGMENT").replace(**{"seg_decoder.num_classes": 21})
    dec = SegmentationDecoder(cfg, cfg.rx_kb.channels).eval()
    y, f = inputs(cfg)
    with torch.no_grad():
        assert dec(y, f).shape == (2, 21, 32, 32)


def test_seg_zero_parameters_give_uniform_logits():
    cfg = desk_config("SEGMENT")
    dec = SegmentationDecoder(cfg, cfg.rx_kb.channels).eval()
    for p in dec.parameters():
        torch.nn.init.zeros_(p)
    y, f = inputs(cfg)
    with torch.no_grad():
        logits = dec(y, f)
    assert torch.equal(logits, torch.zeros_like(logits))
    assert (logits.argmax(1) == 0).all()


def test_seg_eval_is_deterministic_and_train_uses_dropout():
    cfg = desk_config("SEGMENT")
    dec = SegmentationDecoder(cfg, cfg.rx_kb.channels)
    y, f = inputs(cfg)
    dec.eval()
    with torch.no_grad():
        assert torch.equal(dec(y, f), dec(y, f))
        dec.train()
        assert not torch.equal(dec(y, f), dec(y, f))


def test_recon_loss_examples():
    img = torch.rand(2, 3, 4, 4)
    assert loss_reconstruction(img, img) == 0
    assert float(loss_reconstruction(torch.zeros(1, 3, 4, 4), torch.full((1, 3, 4, 4), 0.5))) == 0.25
    with pytest.raises(ValueError):
        loss_reconstruction(img, img[:, :2])


def test_recon_loss_matches_loop():
    g = np.random.default_rng(0)
    a, b = g.random((2, 3, 5, 5)), g.random((2, 3, 5, 5))
    expected = sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
    got = float(loss_reconstruction(torch.from_numpy(a), torch.from_numpy(b)))
    assert abs(got - expected) < 1e-9


def test_ce_uniform_and_saturated():
    logits = torch.zeros(1, 21, 4, 4, dtype=torch.float64)
    mask = torch.randint(0, 21, (1, 4, 4))
    assert float(loss_segmentation(logits, mask)) == pytest.approx(math.log(21), abs=1e-6)
    sat = torch.zeros(1, 21, 4, 4, dtype=torch.float64).scatter(1, mask.unsqueeze(1), 100.0)
    assert float(loss_segmentation(sat, mask)) < 1e-8


def test_ce_matches_loop_oracle_with_ignore():
    g = torch.Generator().manual_seed(4)
    logits = torch.randn(2, 5, 3, 4, generator=g, dtype=torch.float64) * 4
    mask = torch.randint(0, 5, (2, 3, 4), generator=g)
    mask[0, 0, 0] = 255
    assert abs(float(loss_segmentation(logits, mask)) - ce_oracle(logits, mask)) < 1e-6


def test_ce_bad_label():
    with pytest.raises(ValueError, match="labels"):
        loss_segmentation(torch.zeros(1, 3, 2, 2), torch.full((1, 2, 2), 3))


@settings(max_examples=30, deadline=None)
@given(st.floats(-1e3, 1e3), st.integers(0, 1000))
def test_ce_shift_invariance(shift, seed):
    g = torch.Generator().manual_seed(seed)
    logits = torch.randn(1, 4, 3, 3, generator=g, dtype=torch.float64)
    mask = torch.randint(0, 4, (1, 3, 3), generator=g)
    a = float(loss_segmentation(logits, mask))
    b = float(loss_segmentation(logits + shift, mask))
    assert a >= 0 and abs(a - b) < 1e-9


def test_loss_gradients_match_finite_differences():
    g = torch.Generator().manual_seed(8)
    img = torch.rand(1, 3, 4, 4, generator=g, dtype=torch.float64)
    rec = torch.rand(1, 3, 4, 4, generator=g, dtype=torch.float64, requires_grad=True)
    logits = torch.randn(1, 3, 4, 4, generator=g, dtype=torch.float64, requires_grad=True)
    mask = torch.randint(0, 3, (1, 4, 4), generator=g)
    for fn, x in ((lambda t: loss_reconstruction(img, t), rec), (lambda t: loss_segmentation(t, mask), logits)):
        fn(x).backward()
        for idx in [(0, 0, 1, 2), (0, 2, 3, 0)]:
            p, m = x.detach().clone(), x.detach().clone()
            p[idx] += 1e-6
            m[idx] -= 1e-6
            fd = float((fn(p) - fn(m)) / 2e-6)
            assert abs(float(x.grad[idx]) - fd) <= 1e-3 * abs(fd)
