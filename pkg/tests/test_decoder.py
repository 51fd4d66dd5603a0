import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from tgasi.decoder import DecoderConfig, TemporalDecoder, band_mask, select_sources


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_direction(xs, w_ih, w_hh, b_ih, b_hh):
    """Step-by-step gate equations for one direction of one sequence."""
    h = np.zeros(2)
    out = []
    for x in xs:
        gi, gh = w_ih @ x + b_ih, w_hh @ h + b_hh
        r = sigmoid(gi[0:2] + gh[0:2])
        z = sigmoid(gi[2:4] + gh[2:4])
        n = np.tanh(gi[4:6] + r * gh[4:6])
        h = (1 - z) * n + z * h
        out.append(h)
    return np.array(out)


def params(gru, suffix):
    return [getattr(gru, f"{name}_l0{suffix}").detach().numpy()
            for name in ("weight_ih", "weight_hh", "bias_ih", "bias_hh")]


def make_decoder(f=5, heads=3, seed=0, **cfg):
    torch.manual_seed(seed)
    return TemporalDecoder(f, DecoderConfig(heads=heads, **cfg))


def test_band_mask_examples():
    assert band_mask(3).astype(int).tolist() == [[1, 1, 0], [1, 1, 1], [0, 1, 1]]
    assert band_mask(1).tolist() == [[True]]
    for z in range(3, 9):
        counts = band_mask(z).sum(axis=1)
        assert counts.min() == 2 and counts.max() == 3
    with pytest.raises(ValueError):
        band_mask(0)


def test_bigru_shapes_on_karate_width():
    dec = make_decoder(f=9)
    r = dec.bigru(torch.randn(1, 3, 34, 9, dtype=torch.float64))
    assert r.shape == (1, 3, 34, 4)


def test_bigru_rejects_empty_sequence():
    with pytest.raises(ValueError):
        make_decoder().bigru(torch.zeros(1, 0, 3, 5, dtype=torch.float64))


def test_bigru_matches_hand_unrolled_gates():
    dec = make_decoder(f=3, seed=1)
    h = torch.randn(1, 2, 2, 3, dtype=torch.float64)
    got = dec.bigru(h).detach().numpy()[0]
    x = h.numpy()[0]
    for v in range(2):
        fwd = gru_direction(x[:, v], *params(dec.gru, ""))
        bwd = gru_direction(x[::-1, v], *params(dec.gru, "_reverse"))[::-1]
        np.testing.assert_allclose(got[:, v], np.concatenate([fwd, bwd], axis=1), atol=1e-12)


def test_identical_rows_give_identical_outputs():
    dec = make_decoder(f=4, seed=2)
    with torch.no_grad():
        for name, p in dec.gru.named_parameters():
            if "bias" in name:
                p.zero_()
    probs, r, _ = dec(torch.zeros(1, 3, 5, 4, dtype=torch.float64))
    assert torch.all(r == r[:, :, :1])
    assert torch.all(probs == probs[:, :, :1])


def hand_attention(r, proj, att, values="neighbor"):
    """Scalar evaluation for a single node: r is (zeta, 4)."""
    zeta, k = r.shape[0], proj.shape[0]
    out = np.zeros((zeta, 2))
    phis = np.zeros((zeta, zeta, k))
    for i in range(zeta):
        acc = np.zeros(2)
        for head in range(k):
            p = [proj[head].T @ r[j] for j in range(zeta)]
            band = [j for j in range(zeta) if abs(i - j) <= 1]
            e = {j: max(0.0, att[head, :2] @ p[i] + att[head, 2:] @ p[j]) for j in band}
            total = sum(np.exp(v) for v in e.values())
            mix = np.zeros(2)
            for j in band:
                phis[i, j, head] = np.exp(e[j]) / total
                mix += phis[i, j, head] * (p[j] if values == "neighbor" else p[i])
            acc += np.maximum(mix, 0.0)
        logits = acc / k
        out[i] = np.exp(logits) / np.exp(logits).sum()
    return out, phis


@pytest.mark.parametrize("values", ["neighbor", "self"])
def test_attention_matches_scalar_evaluation(values):
    dec = make_decoder(heads=2, seed=3, attention_values=values)
    r = torch.randn(1, 3, 1, 4, dtype=torch.float64)
    probs, phi = dec.attention(r)
    exp_probs, exp_phi = hand_attention(r.numpy()[0, :, 0], dec.proj.detach().numpy(),
                                        dec.att.detach().numpy(), values)
    np.testing.assert_allclose(probs.detach().numpy()[0, :, 0], exp_probs, atol=1e-12)
    np.testing.assert_allclose(phi.detach().numpy()[0, :, :, 0], exp_phi, atol=1e-12)


def test_single_timestamp_attention():
    dec = make_decoder(heads=2, seed=4)
    r = torch.randn(1, 1, 3, 4, dtype=torch.float64)
    probs, phi = dec.attention(r)
    assert torch.all(phi == 1.0)
    proj = torch.einsum("btvf,kfo->btvko", r, dec.proj)
    expected = torch.softmax(torch.relu(proj).mean(dim=3), dim=-1)
    torch.testing.assert_close(probs, expected, rtol=0, atol=1e-12)


def test_identical_timestamps_give_uniform_band_rows():
    dec = make_decoder(seed=5)
    r = torch.randn(1, 1, 4, 4, dtype=torch.float64).expand(1, 4, 4, 4)
    _, phi = dec.attention(r)
    band = torch.as_tensor(band_mask(4), dtype=torch.float64)
    expected = band / band.sum(1, keepdim=True)
    torch.testing.assert_close(phi[0, :, :, 0, 0], expected, rtol=0, atol=1e-12)


def test_attention_and_class_rows_are_distributions():
    dec = make_decoder(heads=4, seed=6)
    probs, _, phi = dec(torch.randn(3, 6, 7, 5, dtype=torch.float64))
    torch.testing.assert_close(phi.sum(dim=2), torch.ones_like(phi.sum(dim=2)), rtol=0, atol=1e-6)
    outside = ~torch.as_tensor(band_mask(6))
    assert torch.all(phi[:, outside] == 0)
    assert torch.all(phi[:, ~outside] > 0)
    assert torch.all(probs >= 0)
    torch.testing.assert_close(probs.sum(-1), torch.ones(3, 6, 7, dtype=torch.float64),
                               rtol=0, atol=1e-6)


def test_decoder_is_node_permutation_equivariant():
    dec = make_decoder(seed=7)
    h = torch.randn(2, 4, 6, 5, dtype=torch.float64)
    perm = torch.randperm(6)
    probs, _, _ = dec(h)
    probs_p, _, _ = dec(h[:, :, perm])
    torch.testing.assert_close(probs_p, probs[:, :, perm], rtol=0, atol=1e-12)


def test_no_attention_variant_averages_directions():
    torch.manual_seed(8)
    dec = TemporalDecoder(5, attention=False)
    probs, r, phi = dec(torch.randn(1, 3, 4, 5, dtype=torch.float64))
    assert phi is None
    torch.testing.assert_close(probs, torch.softmax((r[..., :2] + r[..., 2:]) / 2, dim=-1))


def test_source_score_aggregation():
    probs = torch.tensor([[[[0.2, 0.8]], [[0.6, 0.4]]]], dtype=torch.float64)
    assert make_decoder().source_scores(probs).item() == pytest.approx(0.6)
    assert make_decoder(aggregate="last").source_scores(probs).item() == pytest.approx(0.4)


def test_select_sources_examples():
    assert select_sources([0.9, 0.1, 0.8, 0.1], 2) == [0, 2]
    assert select_sources([0.5, 0.5, 0.1], 1) == [0]
    assert select_sources([0.3, 0.2, 0.1], 3) == [0, 1, 2]
    for z in (0, 4):
        with pytest.raises(ValueError):
            select_sources([0.3, 0.2, 0.1], z)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=2, max_size=30), st.data())
def test_select_sources_is_monotone_invariant(ticks, data):
    scores = np.asarray(ticks) / 1000.0
    z = data.draw(st.integers(1, len(scores)))
    chosen = select_sources(scores, z)
    assert len(set(chosen)) == z
    assert select_sources(np.exp(3 * scores) + 2, z) == chosen


def test_config_validation():
    for bad in ({"heads": 0}, {"aggregate": "max"}, {"attention_values": "both"}):
        with pytest.raises(ValueError):
            DecoderConfig(**bad)
