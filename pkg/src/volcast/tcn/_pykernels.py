"""Pure-numpy causal dilated convolution kernels (fallback for ``_ckernels``)."""
import numpy as np


def conv1d_forward(x, weights, bias, dilation, relu, out=None):
    batch, cin, T = x.shape
    cout, w_cin, k = weights.shape
    if w_cin != cin:
        raise ValueError(f"input has {cin} channels, layer expects {w_cin}")
    if out is None:
        out = np.empty((batch, cout, T))
    out[...] = bias[None, :, None]
    for j in range(k):
        s = (k - 1 - j) * dilation
        if s >= T:
            continue
        out[:, :, s:] += np.matmul(weights[:, :, j], x[:, :, : T - s])
    if relu:
        np.maximum(out, 0.0, out=out)
    return out


def conv1d_backward(x, weights, dilation, relu, out, gout, need_input_grad=True):
    """Gradients of a layer given dL/d(output); returns (dweights, dbias, dx or None)."""
    T = x.shape[2]
    k = weights.shape[2]
    gpre = np.where(out > 0.0, gout, 0.0) if relu else gout
    dweights = np.zeros_like(weights)
    dbias = gpre.sum(axis=(0, 2))
    gx = np.zeros_like(x) if need_input_grad else None
    for j in range(k):
        s = (k - 1 - j) * dilation
        if s >= T:
            continue
        dweights[:, :, j] = np.einsum("bft,bct->fc", gpre[:, :, s:], x[:, :, : T - s])
        if need_input_grad:
            gx[:, :, : T - s] += np.matmul(weights[:, :, j].T, gpre[:, :, s:])
    return dweights, dbias, gx
