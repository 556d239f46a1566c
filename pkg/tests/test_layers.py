# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: The morphkit contributors
"""Tests for the network building blocks and the joint loss."""

from collections.abc import Sequence

import numpy as np
import pytest

from morphkit import autodiff as ad
from morphkit.autodiff import Tape, Tensor, backward, grad_check
from morphkit.layers import (
    TAG_TASKS,
    ConvLayer,
    DenseHead,
    GRUCell,
    LossWeights,
    LuongAttention,
    Predictions,
    Targets,
    bigru,
    build_context_seq,
    build_z,
    combine_losses,
    conv_forward,
    dense_head,
    dropout,
    embed,
    gaussian_noise,
    gru_step,
    joint_loss,
    luong_attention,
    pool,
    task_losses,
)

RNG = np.random.default_rng(0)


def gru_cell(inputs: int, hidden: int, seed: int = 0) -> GRUCell:
    rng = np.random.default_rng(seed)
    values = {}
    for gate in ("z", "r", "h"):
        values[f"w_{gate}"] = Tensor(rng.normal(0, 0.5, size=(inputs, hidden)))
        values[f"u_{gate}"] = Tensor(rng.normal(0, 0.5, size=(hidden, hidden)))
        values[f"b_{gate}"] = Tensor(rng.normal(0, 0.1, size=(hidden,)))
    return GRUCell(**values)


def conv_layer(width: int, dim: int, maps: int, seed: int = 0) -> ConvLayer:
    rng = np.random.default_rng(seed)
    return ConvLayer(width, Tensor(rng.normal(size=(width * dim, maps))), Tensor(np.zeros(maps)))


def test_conv_and_pool_shapes_at_reference_length() -> None:
    x = Tensor(RNG.normal(size=(2, 18, 6)))
    maps4 = conv_forward(x, conv_layer(4, 6, 5))
    maps5 = conv_forward(x, conv_layer(5, 6, 5))
    assert maps4.shape == (2, 15, 5)
    assert maps5.shape == (2, 14, 5)
    pooled = [pool(m, mode) for m in (maps4, maps5) for mode in ("max", "avg")]
    assert all(p.shape == (2, 7, 5) for p in pooled)
    assert build_z(*pooled).shape == (2, 28 * 5)


def test_conv_matches_direct_sum() -> None:
    x = RNG.normal(size=(6, 2))
    layer = ConvLayer(
        3, Tensor(RNG.normal(size=(6, 1))), Tensor(np.array([0.25]))
    )
    out = conv_forward(Tensor(x), layer).data
    kernel = layer.weight.data.reshape(3, 2)
    expected = [max(0.0, float(np.sum(x[i : i + 3] * kernel)) + 0.25) for i in range(4)]
    np.testing.assert_allclose(out[:, 0], expected)


def test_conv_rejects_short_input() -> None:
    with pytest.raises(ValueError, match="exceeds input length"):
        conv_forward(Tensor(np.zeros((3, 2))), conv_layer(4, 2, 1))


def test_pool_drops_trailing_odd_position() -> None:
    x = Tensor(np.array([[1.0], [3.0], [2.0], [0.0], [9.0]]))
    np.testing.assert_array_equal(pool(x, "max").data[:, 0], [3.0, 2.0])
    np.testing.assert_array_equal(pool(x, "avg").data[:, 0], [2.0, 1.0])
    with pytest.raises(ValueError, match="Unknown pooling"):
        pool(x, "min")  # type: ignore[arg-type]


def test_build_z_rejects_ragged_blocks() -> None:
    with pytest.raises(ValueError, match="differ in length"):
        build_z(Tensor(np.zeros((7, 2))), Tensor(np.zeros((6, 2))))


def test_context_sequence_shape_and_order() -> None:
    words = [Tensor(np.full((2, 3), float(i))) for i in range(5)]
    seq = build_context_seq(words, cw=2)
    assert seq.shape == (2, 5, 3)
    np.testing.assert_array_equal(seq.data[0, :, 0], [0, 1, 2, 3, 4])
    with pytest.raises(ValueError, match="needs 5 word vectors"):
        build_context_seq(words[:3], cw=2)


def test_bigru_output_shapes() -> None:
    fwd, bwd = gru_cell(3, 4, 1), gru_cell(3, 4, 2)
    seq = Tensor(RNG.normal(size=(2, 5, 3)))
    assert bigru(seq, fwd, bwd, "last").shape == (2, 8)
    assert bigru(seq, fwd, bwd, "per-step").shape == (2, 5, 8)


def test_bigru_mask_ignores_padding() -> None:
    fwd, bwd = gru_cell(3, 4, 1), gru_cell(3, 4, 2)
    real = RNG.normal(size=(1, 3, 3))
    padded = np.concatenate([real, RNG.normal(size=(1, 2, 3))], axis=1)
    mask = np.array([[True, True, True, False, False]])
    short = bigru(Tensor(real), fwd, bwd, "last").data
    masked = bigru(Tensor(padded), fwd, bwd, "last", mask=mask).data
    np.testing.assert_allclose(masked, short)


def test_gru_step_gradients() -> None:
    def f(t: Sequence[Tensor]) -> Tensor:
        cell = GRUCell(*t[2:])
        return ad.sum(gru_step(t[0], t[1], cell))

    rng = np.random.default_rng(4)
    shapes = [(2, 3), (2, 4)] + [
        s for _ in range(3) for s in ((3, 4), (4, 4), (4,))
    ]
    params = [rng.normal(0, 0.5, size=s) for s in shapes]
    assert grad_check(f, params) < 1e-5


def test_conv_pool_z_gradients() -> None:
    def f(t: Sequence[Tensor]) -> Tensor:
        maps = conv_forward(t[0], ConvLayer(3, t[1], t[2]))
        z = build_z(pool(maps, "max"), pool(maps, "avg"))
        return ad.sum(z * z)

    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 7, 2))
    assert grad_check(f, [x, rng.normal(size=(6, 2)), np.full(2, 0.3)]) < 1e-5


def test_dense_head_and_attention_gradients() -> None:
    rng = np.random.default_rng(6)

    def head_loss(t: Sequence[Tensor]) -> Tensor:
        probs = dense_head(t[0], t[1], DenseHead(*t[2:]))
        return -ad.sum(ad.log(probs[:, 0]))

    params = [
        rng.normal(size=(2, 3)),
        rng.normal(size=(2, 2)),
        rng.normal(size=(5, 4)),
        rng.normal(size=(4,)) * 0.1,
        rng.normal(size=(4, 4)),
        rng.normal(size=(4,)) * 0.1,
        rng.normal(size=(4, 3)),
        rng.normal(size=(3,)) * 0.1,
    ]
    # relu kinks are unlikely with these draws; a generous bound covers them.
    assert grad_check(head_loss, params) < 1e-4

    def attention_loss(t: Sequence[Tensor]) -> Tensor:
        context, _ = luong_attention(t[0], t[1], LuongAttention(t[2], t[3]))
        return ad.sum(context * context)

    attention_params = [
        rng.normal(size=(2, 3)),
        rng.normal(size=(2, 4, 5)),
        rng.normal(size=(3, 5)),
        np.array(0.2),
    ]
    assert grad_check(attention_loss, attention_params) < 1e-5


def test_dense_head_outputs_distributions() -> None:
    head = DenseHead(
        Tensor(RNG.normal(size=(4, 3))),
        Tensor(np.zeros(3)),
        Tensor(RNG.normal(size=(3, 3))),
        Tensor(np.zeros(3)),
        Tensor(RNG.normal(size=(3, 5))),
        Tensor(np.zeros(5)),
    )
    probs = dense_head(Tensor(RNG.normal(size=(6, 4))), None, head).data
    assert probs.shape == (6, 5)
    np.testing.assert_allclose(probs.sum(axis=1), np.ones(6))


def test_dense_head_needs_two_classes() -> None:
    with pytest.raises(ValueError, match="at least 2 classes"):
        DenseHead(*(Tensor(np.zeros(s)) for s in ((2, 2), (2,), (2, 2), (2,), (2, 1), (1,))))


def test_attention_masks_padded_positions() -> None:
    states = Tensor(RNG.normal(size=(1, 4, 3)))
    attention = LuongAttention(Tensor(RNG.normal(size=(2, 3))), Tensor(np.array(0.0)))
    mask = np.array([[True, True, False, False]])
    context, weights = luong_attention(Tensor(RNG.normal(size=(1, 2))), states, attention, mask)
    np.testing.assert_allclose(weights.data[0, 2:], 0.0, atol=1e-12)
    assert weights.data.sum() == pytest.approx(1.0)
    expected = weights.data[0, :2] @ states.data[0, :2]
    np.testing.assert_allclose(context.data[0], expected)


def test_embed_rejects_unknown_ids() -> None:
    table = Tensor(np.zeros((3, 2)))
    assert embed(np.array([[0, 2]]), table).shape == (1, 2, 2)
    with pytest.raises(ValueError, match="out of range"):
        embed(np.array([5]), table)


def test_dropout_and_noise_are_identity_outside_training() -> None:
    x = Tensor(np.ones((4, 4)))
    rng = np.random.default_rng(0)
    assert dropout(x, 0.5, False, rng) is x
    assert gaussian_noise(x, 0.1, False, rng) is x
    dropped = dropout(x, 0.5, True, rng).data
    assert set(np.unique(dropped)) <= {0.0, 2.0}
    assert not np.array_equal(gaussian_noise(x, 0.1, True, rng).data, x.data)
    with pytest.raises(ValueError, match="Dropout rate"):
        dropout(x, 1.0, True, rng)


def test_loss_weight_constructors() -> None:
    heuristic = LossWeights.heuristic(0.7)
    assert heuristic.pos == heuristic.tam == 0.7
    assert heuristic.lemma == pytest.approx(0.3)
    assert LossWeights.reference().as_dict() == {
        "pos": 0.7,
        "gender": 0.9,
        "number": 0.7,
        "person": 0.9,
        "case": 0.95,
        "tam": 0.7,
        "lemma": 0.3,
    }
    assert LossWeights.only("case").active() == ("case",)
    assert LossWeights().with_weight("gender", 0.8).gender == 0.8
    with pytest.raises(ValueError, match=r"must be in \[0, 1\]"):
        LossWeights.heuristic(1.5)
    with pytest.raises(ValueError, match=">= 0"):
        LossWeights(lemma=-0.1)
    with pytest.raises(ValueError, match="Unknown task"):
        LossWeights.only("mood")


def _toy_predictions(requires_grad: bool = True) -> tuple[Predictions, Targets, dict[str, Tensor]]:
    rng = np.random.default_rng(11)
    logits = {tag: Tensor(rng.normal(size=(3, 4)), requires_grad=requires_grad) for tag in TAG_TASKS}
    lemma_logits = Tensor(rng.normal(size=(3, 2, 5)), requires_grad=requires_grad)
    predictions = Predictions(
        tags={tag: ad.softmax(v) for tag, v in logits.items()},
        lemma=ad.softmax(lemma_logits),
    )
    targets = Targets(
        tags={tag: np.array([0, 1, 3]) for tag in TAG_TASKS},
        lemma=np.array([[1, 4], [2, 0], [3, 4]]),
        lemma_mask=np.array([[True, True], [True, False], [True, True]]),
    )
    return predictions, targets, {**logits, "lemma": lemma_logits}


def test_task_losses_match_cross_entropy() -> None:
    predictions, targets, _ = _toy_predictions()
    losses = task_losses(predictions, targets)

    probs = predictions.tags["pos"].data
    expected_pos = -np.mean(np.log(probs[[0, 1, 2], [0, 1, 3]]))
    assert losses["pos"].item() == pytest.approx(expected_pos)

    p = predictions.lemma.data
    per_example = [
        (np.log(p[0, 0, 1]) + np.log(p[0, 1, 4])) / 2,
        np.log(p[1, 0, 2]),
        (np.log(p[2, 0, 3]) + np.log(p[2, 1, 4])) / 2,
    ]
    assert losses["lemma"].item() == pytest.approx(-np.mean(per_example))


def test_joint_loss_is_the_weighted_sum() -> None:
    predictions, targets, _ = _toy_predictions()
    weights = LossWeights.reference()
    losses = task_losses(predictions, targets)
    expected = sum(weights.get(task) * loss.item() for task, loss in losses.items())
    assert joint_loss(predictions, targets, weights).item() == pytest.approx(expected)


def test_zero_weight_tasks_get_no_gradient() -> None:
    predictions, targets, leaves = _toy_predictions()
    weights = LossWeights.heuristic(1.0)
    with Tape() as tape:
        # Rebuild the outputs on the tape.
        preds = Predictions(
            tags={tag: ad.softmax(leaves[tag]) for tag in TAG_TASKS},
            lemma=ad.softmax(leaves["lemma"]),
        )
        loss = joint_loss(preds, targets, weights)
    grads = backward(tape, loss)
    assert "lemma" not in task_losses(preds, targets, weights)
    np.testing.assert_array_equal(grads.of(leaves["lemma"]), np.zeros((3, 2, 5)))
    assert np.any(grads.of(leaves["pos"]) != 0)


def test_combine_losses_with_nothing_active() -> None:
    assert combine_losses({}, LossWeights()).item() == 0.0


def test_targets_out_of_range_raise() -> None:
    predictions, targets, _ = _toy_predictions(requires_grad=False)
    bad = Targets(tags={"pos": np.array([0, 1, 9])})
    with pytest.raises(ValueError, match="out of range"):
        task_losses(Predictions(tags={"pos": predictions.tags["pos"]}), bad)
