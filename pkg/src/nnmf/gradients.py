"""Exact gradients of the training objective, plus a finite-difference oracle.

The objective over a training set J is

    sum_{(n,m) in J} (X_nm - Xhat_nm)^2
      + lambda * (sum_n |U'_n|_F^2 + sum_n |U_n|^2
                  + sum_m |V'_m|_F^2 + sum_m |V_m|^2)

Only the latent features are penalized; network weights and biases are not.
``backward`` returns the exact reverse-mode gradient; ``finite_diff_gradient``
recomputes it with central differences and exists purely as a verification
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import ObservationSet
from .errors import NumericalError
from .model import LatentState, MlpNetwork


@dataclass
class GradientBundle:
    """Gradient arrays mirroring the parameter shapes exactly."""

    d_weights: list
    d_biases: list
    d_U: np.ndarray
    d_V: np.ndarray
    d_Uprime: np.ndarray
    d_Vprime: np.ndarray

    def blocks(self):
        named = [(f"weights[{l}]", w) for l, w in enumerate(self.d_weights)]
        named += [(f"biases[{l}]", b) for l, b in enumerate(self.d_biases)]
        named += [
            ("U", self.d_U),
            ("V", self.d_V),
            ("Uprime", self.d_Uprime),
            ("Vprime", self.d_Vprime),
        ]
        return named


def feature_penalty(state: LatentState) -> float:
    """Sum of squared latent feature entries (the bracket of the objective)."""
    return float(
        np.sum(state.Uprime * state.Uprime)
        + np.sum(state.U * state.U)
        + np.sum(state.Vprime * state.Vprime)
        + np.sum(state.V * state.V)
    )


def objective(net: MlpNetwork, state: LatentState, train: ObservationSet, lam: float,
              backend=None) -> float:
    """Penalized sum of squared errors over the training observations."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    kern = _kernels.get_backend(backend)
    sse = 0.0
    if len(train) > 0:
        inputs = _kernels.build_inputs(
            state.U, state.V, state.Uprime, state.Vprime, train.rows, train.cols
        )
        preds = kern.forward(net.weights, net.biases, inputs)
        resid = preds - train.values
        sse = float(resid @ resid)
    if lam == 0.0:
        return sse
    return sse + lam * feature_penalty(state)


def backward(net: MlpNetwork, state: LatentState, train: ObservationSet, lam: float,
             backend=None):
    """Exact gradient of :func:`objective` at the current parameters.

    Returns (GradientBundle, objective value).  Rows or columns with no
    observed entries receive only the regularizer term.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    kern = _kernels.get_backend(backend)
    if len(train) > 0:
        sse, _preds, dU, dV, dUp, dVp, dWs, dbs = kern.fused_gradient(
            state.U,
            state.V,
            state.Uprime,
            state.Vprime,
            train.rows,
            train.cols,
            train.values,
            net.weights,
            net.biases,
        )
    else:
        sse = 0.0
        dU = np.zeros_like(state.U)
        dV = np.zeros_like(state.V)
        dUp = np.zeros_like(state.Uprime)
        dVp = np.zeros_like(state.Vprime)
        dWs = [np.zeros_like(w) for w in net.weights]
        dbs = [np.zeros_like(b) for b in net.biases]
    value = sse
    if lam != 0.0:
        dU += 2.0 * lam * state.U
        dV += 2.0 * lam * state.V
        dUp += 2.0 * lam * state.Uprime
        dVp += 2.0 * lam * state.Vprime
        value = sse + lam * feature_penalty(state)
    bundle = GradientBundle(dWs, dbs, dU, dV, dUp, dVp)
    for name, block in bundle.blocks():
        if not np.all(np.isfinite(block)):
            raise NumericalError(f"non-finite gradient in block {name}")
    return bundle, value


def finite_difference(func, arrays, h):
    """Central-difference gradient of ``func()`` w.r.t. each array entry.

    Mutates each array in place by +-h around its current value and
    restores it exactly.  Verification oracle only: cost is two function
    evaluations per scalar parameter.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            f_plus = func()
            arr[idx] = orig - h
            f_minus = func()
            arr[idx] = orig
            g[idx] = (f_plus - f_minus) / (2.0 * h)
        grads.append(g)
    return grads


def finite_diff_gradient(net: MlpNetwork, state: LatentState, train: ObservationSet,
                         lam: float, h: float) -> GradientBundle:
    """Finite-difference version of :func:`backward` for every parameter."""
    arrays = (
        list(net.weights)
        + list(net.biases)
        + [state.U, state.V, state.Uprime, state.Vprime]
    )
    func = lambda: objective(net, state, train, lam)
    grads = finite_difference(func, arrays, h)
    n_layers = len(net.weights)
    return GradientBundle(
        d_weights=grads[:n_layers],
        d_biases=grads[n_layers : 2 * n_layers],
        d_U=grads[2 * n_layers],
        d_V=grads[2 * n_layers + 1],
        d_Uprime=grads[2 * n_layers + 2],
        d_Vprime=grads[2 * n_layers + 3],
    )


def max_relative_error(analytic: GradientBundle, numeric: GradientBundle,
                       floor=1e-8) -> float:
    """Largest relative disagreement across all parameter blocks.

    Denominators are floored so that near-zero entries compare absolutely.
    """
    worst = 0.0
    for (_, a), (_, n) in zip(analytic.blocks(), numeric.blocks()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
