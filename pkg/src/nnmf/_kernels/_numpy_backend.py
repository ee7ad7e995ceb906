"""Pure-NumPy implementation of the hot training kernels.

This is the fallback backend and the reference the compiled extension is
checked against.  Both backends implement the same two entry points:

``forward(weights, biases, inputs)``
    Batched MLP forward pass: sigmoid hidden layers, affine output.

``fused_gradient(U, V, Up, Vp, rows, cols, values, weights, biases)``
    One full-batch pass over the observed entries: gather latent features,
    build network inputs, forward, backpropagate the squared-error loss
    and scatter feature gradients back to the per-entity arrays.  Returns
    ``(sse, preds, dU, dV, dUp, dVp, dWs, dbs)`` where sse is the plain sum
    of squared residuals (no regularizer).

Accumulation follows triple order (bincount over the batch axis), so
results are bit-reproducible run to run.
"""

import numpy as np

NAME = "numpy"


def sigmoid(z):
    # expit-free so the backend only needs numpy; stable for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def build_inputs(U, V, Up, Vp, rows, cols):
    """Network input rows for a batch of (row, col) index pairs."""
    prod = np.einsum("bdk,bdk->bd", Up[rows], Vp[cols])
    return np.concatenate([U[rows], V[cols], prod], axis=1)


def forward(weights, biases, inputs):
    a = inputs
    for W, b in zip(weights[:-1], biases[:-1]):
        a = sigmoid(a @ W + b)
    return (a @ weights[-1] + biases[-1]).ravel()


def _scatter_rows(idx, contrib, n):
    """Sum rows of ``contrib`` into an (n, ...) array grouped by ``idx``."""
    flat = contrib.reshape(len(idx), -1)
    out = np.empty((n, flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.bincount(idx, weights=flat[:, j], minlength=n)
    return out.reshape((n,) + contrib.shape[1:])


def fused_gradient(U, V, Up, Vp, rows, cols, values, weights, biases):
    D = U.shape[1]
    Upn = Up[rows]
    Vpm = Vp[cols]
    inputs = np.concatenate(
        [U[rows], V[cols], np.einsum("bdk,bdk->bd", Upn, Vpm)], axis=1
    )

    n_layers = len(weights)
    acts = [inputs]
    a = inputs
    for W, b in zip(weights[:-1], biases[:-1]):
        a = sigmoid(a @ W + b)
        acts.append(a)
    preds = (a @ weights[-1] + biases[-1]).ravel()

    resid = preds - values
    sse = float(resid @ resid)

    dWs = [None] * n_layers
    dbs = [None] * n_layers
    delta = (2.0 * resid)[:, None]
    d_inputs = None
    for layer in range(n_layers - 1, -1, -1):
        dWs[layer] = acts[layer].T @ delta
        dbs[layer] = delta.sum(axis=0)
        da = delta @ weights[layer].T
        if layer > 0:
            delta = da * acts[layer] * (1.0 - acts[layer])
        else:
            d_inputs = da

    d_Un = d_inputs[:, :D]
    d_Vm = d_inputs[:, D : 2 * D]
    d_prod = d_inputs[:, 2 * D :]
    dU = _scatter_rows(rows, d_Un, U.shape[0])
    dV = _scatter_rows(cols, d_Vm, V.shape[0])
    dUp = _scatter_rows(rows, d_prod[:, :, None] * Vpm, Up.shape[0])
    dVp = _scatter_rows(cols, d_prod[:, :, None] * Upn, Vp.shape[0])
    return sse, preds, dU, dV, dUp, dVp, dWs, dbs
