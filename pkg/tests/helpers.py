"""Shared oracles for the test-suite."""
from __future__ import annotations

import numpy as np

from volcast.tcn import TcnModel, mse_loss_seq, mse_loss_seq_grad

# Denominator floor for relative gradient errors. Central differences at
# h = 1e-5 carry rounding noise near eps * |L| / h ~ 2e-11 for O(1) losses,
# so coordinates with |g| below ~1e-5 cannot be resolved to 1e-5 relative
# accuracy. The floor amounts to an absolute allowance of 1e-10.
REL_FLOOR = 1e-5


def random_case(seed: int, input_length: int = 64):
    """Standard network with random weights and biases, an input and a target."""
    rng = np.random.default_rng(seed)
    model = TcnModel.standard(seed=rng.integers(2**32), input_length=input_length)
    flat = model.get_flat()
    offset = 0
    for layer in model.layers:
        offset += layer.weights.size
        flat[offset:offset + layer.biases.size] = rng.normal(0.0, 0.1, layer.biases.size)
        offset += layer.biases.size
    model.set_flat(flat)
    x = rng.normal(size=input_length)
    target = rng.normal(size=input_length)
    return model, x, target


def _loss_and_masks(model, x, target):
    out, tape = model.forward(x)
    masks = [a > 0 for a, l in zip(tape.acts[1:], model.layers) if l.activation == "relu"]
    return mse_loss_seq(out, target), masks


def _same(m1, m2) -> bool:
    return all(np.array_equal(a, b) for a, b in zip(m1, m2))


def analytic_gradient(model, x, target) -> np.ndarray:
    out, tape = model.forward(x)
    return model.backward(tape, mse_loss_seq_grad(out, target))


def numeric_gradient(model, x, target, h: float = 1e-5, max_halvings: int = 4):
    """Central differences, made exact-path aware.

    A coordinate whose +-h stencil flips a ReLU mask straddles a kink, where
    the loss is not differentiable along that direction. Such coordinates
    retry with h halved; if the kink persists, a second-order one-sided
    stencil on a side whose masks match the base point is used. Returns the
    gradient and the number of kinked coordinates.
    """
    base = model.get_flat()
    _, base_masks = _loss_and_masks(model, x, target)
    grad = np.empty_like(base)
    kinked = 0

    def at(theta):
        model.set_flat(theta)
        return _loss_and_masks(model, x, target)

    try:
        for i in range(base.size):
            step = h
            for attempt in range(max_halvings + 1):
                e = np.zeros_like(base)
                e[i] = step
                fp, mp = at(base + e)
                fm, mm = at(base - e)
                if _same(mp, base_masks) and _same(mm, base_masks):
                    grad[i] = (fp - fm) / (2 * step)
                    break
                step /= 2
            else:
                kinked += 1
                e = np.zeros_like(base)
                e[i] = h
                f0, _ = at(base)
                fp, mp = at(base + e)
                fp2, mp2 = at(base + 2 * e)
                if _same(mp, base_masks) and _same(mp2, base_masks):
                    grad[i] = (-3 * f0 + 4 * fp - fp2) / (2 * h)
                else:
                    fm, _ = at(base - e)
                    fm2, _ = at(base - 2 * e)
                    grad[i] = (3 * f0 - 4 * fm + fm2) / (2 * h)
    finally:
        model.set_flat(base)
    return grad, kinked


def relative_error(analytic, numeric, floor: float = REL_FLOOR) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom
