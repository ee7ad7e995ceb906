"""Latent features, the prediction network, and the NNMF forward pass.

The model predicts entry (n, m) of a partially observed array by feeding
the network a vector of 2D + D' inputs: the D-dimensional row features
U_n, the D-dimensional column features V_m, and D' interaction channels,
channel d being the inner product of the d-th rows of the D' x K feature
matrices U'_n and V'_m (for K = 1, the element-wise product of two
D'-vectors).  Hidden layers are sigmoidal; the output unit is affine with
identity activation, so predictions are unbounded reals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError

SIGMOID = "sigmoid"
IDENTITY = "identity"


@dataclass
class LatentState:
    """Trainable per-entity features for an N x M array.

    U: (N, D), V: (M, D), Uprime: (N, D', K), Vprime: (M, D', K).
    """

    U: np.ndarray
    V: np.ndarray
    Uprime: np.ndarray
    Vprime: np.ndarray

    def __post_init__(self):
        if self.U.ndim != 2 or self.V.ndim != 2:
            raise DimensionError("U and V must be 2-d")
        if self.Uprime.ndim != 3 or self.Vprime.ndim != 3:
            raise DimensionError("Uprime and Vprime must be 3-d")
        if self.U.shape[1] != self.V.shape[1]:
            raise DimensionError("U and V disagree on D")
        if self.Uprime.shape[1:] != self.Vprime.shape[1:]:
            raise DimensionError("Uprime and Vprime disagree on (D', K)")
        if self.Uprime.shape[0] != self.U.shape[0]:
            raise DimensionError("U and Uprime disagree on N")
        if self.Vprime.shape[0] != self.V.shape[0]:
            raise DimensionError("V and Vprime disagree on M")

    @property
    def dims(self):
        """(N, M, D, D', K)."""
        return (
            self.U.shape[0],
            self.V.shape[0],
            self.U.shape[1],
            self.Uprime.shape[1],
            self.Uprime.shape[2],
        )

    def check_finite(self):
        for name in ("U", "V", "Uprime", "Vprime"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")

    def copy(self):
        return LatentState(
            self.U.copy(), self.V.copy(), self.Uprime.copy(), self.Vprime.copy()
        )


@dataclass
class MlpNetwork:
    """Feed-forward network: weights[l] has shape (n_in, n_out), biases[l] (n_out,)."""

    layer_dims: list
    weights: list
    biases: list
    hidden_activation: str = SIGMOID
    output_activation: str = IDENTITY

    def __post_init__(self):
        dims = list(self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise DimensionError("layer_dims must hold at least two positive sizes")
        if dims[-1] != 1:
            raise DimensionError("output layer must have exactly one unit")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise DimensionError("need one weight matrix and bias vector per layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[l], dims[l + 1]):
                raise DimensionError(
                    f"layer {l} weights have shape {w.shape}, expected {(dims[l], dims[l+1])}"
                )
            if b.shape != (dims[l + 1],):
                raise DimensionError(f"layer {l} bias has shape {b.shape}")
        if self.hidden_activation != SIGMOID or self.output_activation != IDENTITY:
            raise DimensionError("only sigmoid hidden / identity output supported")

    @property
    def n_inputs(self):
        return self.layer_dims[0]

    def copy(self):
        return MlpNetwork(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )


@dataclass(frozen=True)
class InitSpec:
    """Initialization policy: uniform weights in +-4*sqrt(6)/sqrt(n_in+n_out),
    zero biases, Gaussian features with the given standard deviation."""

    feature_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.feature_std <= 0:
            raise ValueError("feature_std must be positive")


def weight_bound(n_in: int, n_out: int) -> float:
    return 4.0 * math.sqrt(6.0) / math.sqrt(n_in + n_out)


def default_layer_dims(D, Dprime, hidden_layers=3, hidden_units=50):
    return [2 * D + Dprime] + [hidden_units] * hidden_layers + [1]


def init_model(dims, layer_dims, spec: InitSpec):
    """Draw a fresh (MlpNetwork, LatentState) pair.

    dims is (N, M, D, D', K).  layer_dims[0] must equal 2D + D' and the
    last layer must have one unit.  Weights for a layer of n_in inputs and
    n_out outputs are uniform on [-b, b] with b = 4*sqrt(6)/sqrt(n_in+n_out);
    biases start at zero; every latent feature is N(0, feature_std^2).
    Deterministic given spec.seed.
    """
    N, M, D, Dprime, K = dims
    if any(d < 1 for d in (N, M, D, Dprime, K)):
        raise DimensionError("all of N, M, D, D', K must be positive")
    layer_dims = list(layer_dims)
    if layer_dims[0] != 2 * D + Dprime:
        raise DimensionError(
            f"layer_dims[0] = {layer_dims[0]} but 2D + D' = {2 * D + Dprime}"
        )
    rng = np.random.default_rng(spec.seed)
    weights, biases = [], []
    for l in range(len(layer_dims) - 1):
        n_in, n_out = layer_dims[l], layer_dims[l + 1]
        b = weight_bound(n_in, n_out)
        weights.append(rng.uniform(-b, b, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    net = MlpNetwork(layer_dims, weights, biases)
    std = spec.feature_std
    state = LatentState(
        U=std * rng.standard_normal((N, D)),
        V=std * rng.standard_normal((M, D)),
        Uprime=std * rng.standard_normal((N, Dprime, K)),
        Vprime=std * rng.standard_normal((M, Dprime, K)),
    )
    return net, state


def build_input(Un, Vm, Uprime_n, Vprime_m):
    """Assemble one network input vector from the features of a single pair.

    The last D' entries are the inner products of matching rows of the two
    feature matrices; with K = 1 this is their element-wise product.
    """
    Un = np.asarray(Un, dtype=np.float64)
    Vm = np.asarray(Vm, dtype=np.float64)
    Uprime_n = np.asarray(Uprime_n, dtype=np.float64)
    Vprime_m = np.asarray(Vprime_m, dtype=np.float64)
    if Un.ndim != 1 or Vm.ndim != 1 or Un.shape != Vm.shape:
        raise DimensionError("Un and Vm must be equal-length vectors")
    if Uprime_n.ndim != 2 or Uprime_n.shape != Vprime_m.shape:
        raise DimensionError("Uprime_n and Vprime_m must be equal-shape matrices")
    prod = np.einsum("dk,dk->d", Uprime_n, Vprime_m)
    return np.concatenate([Un, Vm, prod])


def predict_batch(net: MlpNetwork, state: LatentState, rows, cols, backend=None):
    """Predictions for arrays of (row, col) index pairs."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    N, M = state.U.shape[0], state.V.shape[0]
    if len(rows) and (rows.min() < 0 or rows.max() >= N):
        raise IndexError(f"row index out of range [0, {N})")
    if len(cols) and (cols.min() < 0 or cols.max() >= M):
        raise IndexError(f"column index out of range [0, {M})")
    kern = _kernels.get_backend(backend)
    inputs = _kernels.build_inputs(
        state.U, state.V, state.Uprime, state.Vprime, rows, cols
    )
    return kern.forward(net.weights, net.biases, inputs)


def predict(net: MlpNetwork, state: LatentState, n: int, m: int) -> float:
    """The model's estimate for entry (n, m)."""
    return float(predict_batch(net, state, [n], [m])[0])


class NnmfModel:
    """Bundles (net, state) behind the generic trainable-model interface.

    The optimizer alternates between a "network" phase updating weights
    and biases and a "features" phase updating U, V, U', V'.
    """

    kind = "nnmf"
    phases = ("network", "features")

    def __init__(self, net: MlpNetwork, state: LatentState, backend=None):
        self.net = net
        self.state = state
        self.backend = backend  # backend name or None for the active default

    def param_blocks(self, phase):
        if phase == "network":
            return list(self.net.weights) + list(self.net.biases)
        if phase == "features":
            s = self.state
            return [s.U, s.V, s.Uprime, s.Vprime]
        raise ValueError(f"unknown phase {phase!r}")

    def gradient(self, obs, lam):
        from .gradients import backward  # local import to avoid a cycle

        bundle, value = backward(self.net, self.state, obs, lam, backend=self.backend)
        grads = {
            "network": list(bundle.d_weights) + list(bundle.d_biases),
            "features": [bundle.d_U, bundle.d_V, bundle.d_Uprime, bundle.d_Vprime],
        }
        return value, grads

    def predict_batch(self, rows, cols):
        return predict_batch(self.net, self.state, rows, cols, backend=self.backend)

    def clone(self):
        return NnmfModel(self.net.copy(), self.state.copy(), backend=self.backend)

    def to_arrays(self):
        arrays = {
            "U": self.state.U,
            "V": self.state.V,
            "Uprime": self.state.Uprime,
            "Vprime": self.state.Vprime,
        }
        for l, (w, b) in enumerate(zip(self.net.weights, self.net.biases)):
            arrays[f"W{l}"] = w
            arrays[f"b{l}"] = b
        return arrays

    def meta(self):
        N, M, D, Dp, K = self.state.dims
        return {"N": N, "M": M, "D": D, "Dprime": Dp, "K": K,
                "layer_dims": list(self.net.layer_dims)}

    @classmethod
    def from_arrays(cls, arrays, meta):
        dims = meta["layer_dims"]
        n_layers = len(dims) - 1
        weights = [arrays[f"W{l}"] for l in range(n_layers)]
        biases = [arrays[f"b{l}"] for l in range(n_layers)]
        net = MlpNetwork(list(dims), weights, biases)
        state = LatentState(arrays["U"], arrays["V"], arrays["Uprime"], arrays["Vprime"])
        return cls(net, state)
