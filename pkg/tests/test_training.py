import math

import numpy as np
import pytest
import torch

from _fd import TOL, directional_check
from realmotion.backbone import Forecast
from realmotion.errors import ConfigInvalid, NonFiniteLoss
from realmotion.model import ModelConfig, RealMotion
from realmotion.training import LossBreakdown, TrainConfig, best_mode, compute_losses, sequence_loss, train

K = 5


def forecast(Y, logits=None, aux=None):
    B, M = Y.shape[:2]
    logits = torch.zeros(B, M, dtype=Y.dtype) if logits is None else logits
    return Forecast(Y, logits, torch.zeros(B, M, 4, dtype=Y.dtype), aux)


def test_exact_prediction_zero_reg_and_refine():
    gt = torch.randn(2, K, 2, dtype=torch.float64)
    Y = torch.randn(2, 6, K, 2, dtype=torch.float64)
    Y[:, 3] = gt
    out = compute_losses(forecast(Y), forecast(Y.clone()), gt)
    assert out.reg == 0 and out.refine == 0
    assert out.cls > 0


def test_total_is_plain_sum():
    lb = LossBreakdown(torch.tensor(1.0), torch.tensor(2.0), torch.tensor(0.5))
    assert float(lb.total) == 3.5


@pytest.mark.parametrize("residual, want", [(0.5, 0.125), (2.0, 1.5)])
def test_smooth_l1_values(residual, want):
    gt = torch.zeros(1, 1, 2, dtype=torch.float64)
    Y = torch.zeros(1, 1, 1, 2, dtype=torch.float64)
    Y[0, 0, 0, 0] = residual
    out = compute_losses(forecast(Y), None, gt)
    # mean over the two coordinates; only one carries the residual
    assert float(out.reg) * 2 == pytest.approx(want, abs=1e-15)


def test_no_refinement_stage_contributes_zero():
    gt = torch.randn(1, K, 2)
    out = compute_losses(forecast(torch.randn(1, 6, K, 2)), None, gt)
    assert float(out.refine) == 0.0


def test_best_mode_ties_go_to_lowest_index():
    gt = torch.zeros(1, K, 2)
    Y = torch.ones(1, 6, K, 2)
    Y[0, 2, -1] = 0.5
    Y[0, 4, -1] = -0.5  # same final distance as mode 2
    assert int(best_mode(Y, gt)[0]) == 2


def test_winner_takes_all_gradient_isolation():
    gt = torch.randn(3, K, 2, dtype=torch.float64)
    Y = torch.randn(3, 6, K, 2, dtype=torch.float64, requires_grad=True)
    out = compute_losses(forecast(Y), None, gt)
    out.reg.backward()
    best = best_mode(Y.detach(), gt)
    for b in range(3):
        for m in range(6):
            g = Y.grad[b, m]
            if m == int(best[b]):
                assert g.abs().sum() > 0
            else:
                assert torch.all(g == 0)


def test_non_finite_raises():
    gt = torch.zeros(1, K, 2)
    Y = torch.full((1, 6, K, 2), float("nan"))
    with pytest.raises(NonFiniteLoss):
        compute_losses(forecast(Y), None, gt)


def test_loss_gradients_match_finite_differences():
    g = torch.Generator().manual_seed(0)
    B, N_a = 2, 2
    gt = torch.randn(B, K, 2, generator=g, dtype=torch.float64) * 3
    Y = (gt[:, None] + torch.randn(B, 6, K, 2, generator=g, dtype=torch.float64) * 2).requires_grad_(True)
    logits = torch.randn(B, 6, generator=g, dtype=torch.float64, requires_grad=True)
    aux = torch.randn(B, N_a, K, 2, generator=g, dtype=torch.float64, requires_grad=True)
    aux_gt = torch.randn(B, N_a, K, 2, generator=g, dtype=torch.float64)
    aux_mask = torch.ones(B, N_a, K, dtype=torch.bool)
    aux_mask[0, 0] = False
    Yr = (Y.detach() + 0.3 * torch.randn(B, 6, K, 2, generator=g, dtype=torch.float64)).requires_grad_(True)

    def parts():
        return compute_losses(forecast(Y, logits, aux), forecast(Yr, logits), gt, aux_gt, aux_mask)

    for term in ("reg", "cls", "refine"):
        worst = directional_check(lambda: getattr(parts(), term), {"Y": Y, "logits": logits, "aux": aux, "Yr": Yr})
        assert max(worst.values()) <= TOL, (term, worst)


def test_gradient_steps_bounds():
    assert TrainConfig().resolved_steps() == 3
    assert TrainConfig(gradient_steps=1).resolved_steps() == 1
    for bad in (0, 4):
        with pytest.raises(ConfigInvalid):
            TrainConfig(gradient_steps=bad).resolved_steps()


def test_config_round_trip():
    cfg = TrainConfig(epochs=3, gradient_steps=2, split_points=(20, 35, 50))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigInvalid):
        TrainConfig.from_dict({"epochs": 1, "nope": 2})


def _small_model(**kw):
    torch.manual_seed(0)
    return RealMotion(ModelConfig(dim=16, heads=2, horizon=20, **kw))


def test_only_trailing_segments_are_supervised(tiny_dataset):
    model = _small_model()
    segs = tiny_dataset.batch(torch.arange(4))
    _, parts = sequence_loss(model, segs, 1)
    assert len(parts) == 1
    _, parts = sequence_loss(model, segs, 3)
    assert len(parts) == 3


def test_single_step_gives_no_gradient_through_earlier_segments(tiny_dataset):
    model = _small_model()
    segs = tiny_dataset.batch(torch.arange(4))
    segs[0].A.requires_grad_(True)
    segs[2].A.requires_grad_(True)
    loss, _ = sequence_loss(model, segs, 1)
    loss.backward()
    assert segs[0].A.grad is None
    assert segs[2].A.grad is not None


def test_smoke_fifty_steps_reduce_loss(tiny_dataset):
    model = _small_model()
    segs = tiny_dataset.batch(torch.arange(8))
    opt = torch.optim.AdamW(model.parameters(), lr=1e-3, weight_decay=0.01)
    first = None
    for _ in range(50):
        loss, _ = sequence_loss(model, segs, 3)
        first = float(loss.detach()) if first is None else first
        opt.zero_grad()
        loss.backward()
        opt.step()
    final, _ = sequence_loss(model, segs, 3)
    assert float(final.detach()) <= 0.8 * first


def test_two_epoch_run_is_bit_reproducible(small_world):
    from realmotion.data import build_dataset
    from realmotion.world import generate_scene

    data = build_dataset([generate_scene(small_world, 100 + i) for i in range(64)], (30, 40, 50), horizon=20)
    states = []
    for _ in range(2):
        model = _small_model()
        hist = train(model, data, TrainConfig(epochs=2, batch_size=16, seed=3))
        states.append((hist, [p.detach().clone() for p in model.parameters()]))
    assert states[0][0] == states[1][0]
    assert all(torch.equal(a, b) for a, b in zip(states[0][1], states[1][1]))


def test_train_rejects_mismatched_segmentation(tiny_dataset):
    with pytest.raises(ConfigInvalid):
        train(_small_model(), tiny_dataset, TrainConfig(epochs=1, split_points=(50,)))
