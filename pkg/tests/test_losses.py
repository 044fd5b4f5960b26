import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from rindnet.errors import ContractError
from rindnet.losses import (
    EdgeLossParams,
    FocalLossParams,
    edge_loss,
    edge_loss_maps,
    edge_loss_single,
    focal_attention_loss,
    focal_loss_maps,
    total_loss,
)


# Independent scalar oracles, one pixel at a time.
def edge_oracle(Y, E, beta=4.0, g1=0.5):
    Y = np.clip(np.asarray(Y, float), 1e-6, 1 - 1e-6)
    E = np.asarray(E, float)
    alpha = 1.0 - E.mean()
    total = 0.0
    for y, e in zip(Y.ravel(), E.ravel()):
        if e == 1:
            total -= alpha * beta ** ((1 - y) ** g1) * math.log(y)
        else:
            total -= (1 - alpha) * beta ** (y ** g1) * math.log(1 - y)
    return total


def focal_oracle(A, T, a2=0.5, g2=2.0):
    total = 0.0
    for a, t in zip(np.asarray(A, float).ravel(), np.asarray(T).ravel()):
        if t == 255:
            continue
        a = min(max(a, 1e-6), 1 - 1e-6)
        if t == 1:
            total -= a2 * (1 - a) ** g2 * math.log(a)
        else:
            total -= (1 - a2) * a ** g2 * math.log(1 - a)
    return total


def softmax_maps(rng, c, h, w, dtype=torch.float64):
    return torch.softmax(torch.from_numpy(rng.normal(size=(c, h, w))).to(dtype), dim=0)


def test_edge_loss_hand_value():
    Y = torch.tensor([[0.5, 0.5]], dtype=torch.float64)
    E = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    # alpha = 1/2 both sides: 0.5 * 4**sqrt(0.5) * ln 2, twice
    expected = 2 * 0.5 * 4 ** math.sqrt(0.5) * math.log(2)
    assert abs(expected - 1.84731) < 1e-4
    assert edge_loss_single(Y, E).item() == pytest.approx(1.84731, abs=1e-4)


def test_focal_entry_hand_value():
    A = torch.tensor([0.9], dtype=torch.float64).reshape(1, 1, 1)
    T = torch.ones((1, 1, 1), dtype=torch.int64)
    got = focal_loss_maps(A, T, check_normalized=False).item()
    assert got == pytest.approx(5.268e-4, abs=1e-6)
    assert got == pytest.approx(0.5 * 0.01 * -math.log(0.9), rel=1e-9)


def test_edge_loss_matches_oracle(rng):
    for _ in range(5):
        Y = rng.random((6, 7))
        E = (rng.random((6, 7)) < 0.2).astype(float)
        got = edge_loss_single(torch.from_numpy(Y), torch.from_numpy(E)).item()
        assert got == pytest.approx(edge_oracle(Y, E), rel=1e-10)


def test_edge_loss_nondefault_params(rng):
    Y, E = rng.random((5, 5)), (rng.random((5, 5)) < 0.3).astype(float)
    got = edge_loss_single(torch.from_numpy(Y), torch.from_numpy(E), EdgeLossParams(2.0, 1.5)).item()
    assert got == pytest.approx(edge_oracle(Y, E, 2.0, 1.5), rel=1e-10)


def test_focal_loss_matches_oracle(rng):
    A = softmax_maps(rng, 5, 6, 6)
    T = torch.from_numpy((rng.random((5, 6, 6)) < 0.2).astype(np.int64))
    T[:, 0, :] = 255
    got = focal_loss_maps(A, T).item()
    assert got == pytest.approx(focal_oracle(A.numpy(), T.numpy()), rel=1e-10)
    p = FocalLossParams(0.25, 1.0)
    assert focal_loss_maps(A, T, p).item() == pytest.approx(focal_oracle(A.numpy(), T.numpy(), 0.25, 1.0), rel=1e-10)


def test_edge_loss_perfect_prediction_small():
    E = torch.zeros(8, 8, dtype=torch.float64)
    E[3, :] = 1
    assert edge_loss_single(E.clone(), E).item() < 1e-3


def test_edge_loss_all_negative_label():
    # alpha = 1 so every negative pixel gets weight 0
    Y = torch.full((4, 4), 0.7, dtype=torch.float64)
    assert edge_loss_single(Y, torch.zeros(4, 4, dtype=torch.float64)).item() == 0.0


def test_edge_loss_finite_at_extremes():
    Y = torch.tensor([[0.0, 1.0]], dtype=torch.float64, requires_grad=True)
    E = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    val = edge_loss_single(Y, E)
    val.backward()
    assert torch.isfinite(val) and torch.isfinite(Y.grad).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_losses_nonnegative(seed):
    rng = np.random.default_rng(seed)
    Y = torch.from_numpy(rng.random((4, 6, 6)))
    E = torch.from_numpy((rng.random((4, 6, 6)) < rng.random()).astype(float))
    assert (edge_loss_maps(Y, E) >= 0).all()
    A = softmax_maps(rng, 5, 6, 6)
    T = torch.from_numpy(rng.choice([0, 1, 255], size=(5, 6, 6)))
    assert focal_loss_maps(A, T).item() >= 0


def test_edge_loss_planes_independent(rng):
    Y = torch.from_numpy(rng.random((4, 8, 8)))
    E = torch.from_numpy((rng.random((4, 8, 8)) < 0.2).astype(float))
    base = edge_loss_maps(Y, E)
    Y2 = Y.clone()
    Y2[2] = torch.from_numpy(rng.random((8, 8)))
    changed = edge_loss_maps(Y2, E)
    assert torch.equal(base[[0, 1, 3]], changed[[0, 1, 3]])
    assert not torch.equal(base[2], changed[2])
    # alpha is per map, so each plane equals its own single-map loss
    for k in range(4):
        assert base[k].item() == pytest.approx(edge_loss_single(Y[k], E[k]).item(), rel=1e-12)


def test_edge_loss_batch_mean(rng):
    Y = torch.from_numpy(rng.random((3, 4, 5, 5)))
    E = torch.from_numpy((rng.random((3, 4, 5, 5)) < 0.3).astype(float))
    per = [edge_loss(Y[b], E[b]).item() for b in range(3)]
    assert edge_loss(Y, E).item() == pytest.approx(np.mean(per), rel=1e-12)


def test_edge_loss_rejects_out_of_range():
    with pytest.raises(ValueError):
        edge_loss_single(torch.tensor([[1.2]]), torch.tensor([[1.0]]))


def test_focal_ignore_excludes_entries(rng):
    A = softmax_maps(rng, 5, 4, 4)
    T = torch.zeros((5, 4, 4), dtype=torch.int64)
    T[0] = 1
    T[:, 1, 2] = 255
    base = focal_loss_maps(A, T).item()
    # changing A only at the ignored pixel leaves the loss untouched
    A2 = A.clone()
    A2[:, 1, 2] = torch.tensor([0.96, 0.01, 0.01, 0.01, 0.01], dtype=A.dtype)
    assert focal_loss_maps(A2, T).item() == base
    A2.requires_grad_(True)
    focal_loss_maps(A2, T).backward()
    assert (A2.grad[:, 1, 2] == 0).all()


def test_focal_all_ignored_is_zero(rng):
    A = softmax_maps(rng, 5, 3, 3)
    assert focal_loss_maps(A, torch.full((5, 3, 3), 255)).item() == 0.0


def test_focal_contract_errors(rng):
    A = softmax_maps(rng, 5, 4, 4)
    with pytest.raises(ContractError):
        focal_loss_maps(A * 0.5, torch.zeros((5, 4, 4), dtype=torch.int64))
    with pytest.raises(ContractError):
        focal_loss_maps(A, torch.zeros((4, 4, 4), dtype=torch.int64))


def test_focal_batch_mean(rng):
    A = torch.stack([softmax_maps(rng, 5, 4, 4) for _ in range(3)])
    T = torch.from_numpy((rng.random((3, 5, 4, 4)) < 0.2).astype(np.int64))
    per = focal_loss_maps(A, T)
    assert per.shape == (3,)
    assert focal_attention_loss(A, T).item() == pytest.approx(per.mean().item(), rel=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.1, 1.0])
def test_total_loss_weighting(lam):
    assert total_loss(2.0, 5.0, lam) == pytest.approx(lam * 2.0 + (1 - lam) * 5.0)
    if lam == 0.0:
        assert total_loss(2.0, 5.0, lam) == 5.0
    if lam == 1.0:
        assert total_loss(2.0, 5.0, lam) == 2.0


def _rel_err(analytic, numeric):
    return (analytic - numeric).abs().max().item() / max(numeric.abs().max().item(), 1e-12)


def central_difference(fn, x, step=1e-4):
    grad = torch.zeros_like(x)
    flat, g = x.view(-1), grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + step
        up = fn(x).item()
        flat[i] = orig - step
        down = fn(x).item()
        flat[i] = orig
        g[i] = (up - down) / (2 * step)
    return grad


def test_edge_loss_gradient_finite_difference(rng):
    # keep Y away from the clamp boundaries so the loss is smooth there
    Y = torch.from_numpy(rng.uniform(0.05, 0.95, (4, 8, 8)))
    E = torch.from_numpy((rng.random((4, 8, 8)) < 0.2).astype(float))
    Yg = Y.clone().requires_grad_(True)
    edge_loss(Yg, E).backward()
    numeric = central_difference(lambda y: edge_loss(y, E), Y.clone())
    assert _rel_err(Yg.grad, numeric) < 1e-4


def test_focal_loss_gradient_finite_difference(rng):
    # differentiate through the softmax logits so the normalization contract holds
    Z = torch.from_numpy(rng.normal(size=(5, 8, 8)))
    T = torch.from_numpy((rng.random((5, 8, 8)) < 0.2).astype(np.int64))
    T[:, 0, 0] = 255

    def fn(z):
        return focal_attention_loss(torch.softmax(z, dim=0), T)

    Zg = Z.clone().requires_grad_(True)
    fn(Zg).backward()
    numeric = central_difference(fn, Z.clone())
    assert _rel_err(Zg.grad, numeric) < 1e-4
