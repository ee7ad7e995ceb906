"""PMF, BiasedMF and NTN baselines under the shared training harness.

All three expose the same trainable-model interface as NnmfModel (phases,
param_blocks, gradient, predict_batch, clone), train with the same
squared-error objective with an l2 penalty on latent features only, and
share the checkpoint container.

The NTN scores each pair through a single hidden layer combining a
bilinear tensor term with a linear term:

    out = a . tanh(Un^T Q^{[1:H]} Vm + W [Un; Vm] + b)

optionally squashed by a sigmoid so outputs live in [0, 1]; targets are
then mapped into [0, 1] by an affine transform and predictions mapped
back for evaluation on the native scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import sigmoid
from .errors import DimensionError, NumericalError, UnsupportedError
from .model import InitSpec, weight_bound

_NTN_CHUNK_ELEMS = 2_000_000  # bound on chunk * D * H temporaries


def _check_index(name, idx, n):
    if not 0 <= idx < n:
        raise IndexError(f"{name} index {idx} out of range [0, {n})")


def _scatter_rows(idx, contrib, n):
    flat = contrib.reshape(len(idx), -1)
    out = np.empty((n, flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.bincount(idx, weights=flat[:, j], minlength=n)
    return out.reshape((n,) + contrib.shape[1:])


def _finite_or_raise(arrays):
    for name, a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite gradient in block {name}")


# --------------------------------------------------------------------------
# PMF
# --------------------------------------------------------------------------

@dataclass
class PmfState:
    """Classic low-rank factorization: entry (n, m) is predicted by Un . Vm."""

    U: np.ndarray
    V: np.ndarray

    kind = "pmf"
    phases = ("features",)

    def __post_init__(self):
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != self.V.shape[1]:
            raise DimensionError("U and V must be 2-d with a common rank")

    def param_blocks(self, phase):
        if phase != "features":
            raise ValueError(f"unknown phase {phase!r}")
        return [self.U, self.V]

    def predict_batch(self, rows, cols):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if len(rows) and (rows.min() < 0 or rows.max() >= self.U.shape[0]):
            raise IndexError("row index out of range")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.V.shape[0]):
            raise IndexError("column index out of range")
        return np.einsum("bd,bd->b", self.U[rows], self.V[cols])

    def gradient(self, obs, lam):
        Un = self.U[obs.rows]
        Vm = self.V[obs.cols]
        resid = np.einsum("bd,bd->b", Un, Vm) - obs.values
        sse = float(resid @ resid)
        r2 = (2.0 * resid)[:, None]
        dU = _scatter_rows(obs.rows, r2 * Vm, self.U.shape[0])
        dV = _scatter_rows(obs.cols, r2 * Un, self.V.shape[0])
        value = sse
        if lam != 0.0:
            dU += 2.0 * lam * self.U
            dV += 2.0 * lam * self.V
            value += lam * float(np.sum(self.U * self.U) + np.sum(self.V * self.V))
        _finite_or_raise([("U", dU), ("V", dV)])
        return value, {"features": [dU, dV]}

    def clone(self):
        return PmfState(self.U.copy(), self.V.copy())

    def to_arrays(self):
        return {"U": self.U, "V": self.V}

    def meta(self):
        return {"N": self.U.shape[0], "M": self.V.shape[0], "D": self.U.shape[1]}

    @classmethod
    def from_arrays(cls, arrays, meta):
        return cls(arrays["U"], arrays["V"])


def init_pmf(N, M, D, spec: InitSpec) -> PmfState:
    rng = np.random.default_rng(spec.seed)
    std = spec.feature_std
    return PmfState(
        std * rng.standard_normal((N, D)), std * rng.standard_normal((M, D))
    )


def pmf_predict(state: PmfState, n: int, m: int) -> float:
    _check_index("row", n, state.U.shape[0])
    _check_index("column", m, state.V.shape[0])
    return float(state.U[n] @ state.V[m])


# --------------------------------------------------------------------------
# BiasedMF
# --------------------------------------------------------------------------

@dataclass
class BiasedMfState:
    """PMF plus per-row bias mu, per-column bias tau and a global bias beta.

    beta is stored as a length-1 array so it updates through the same
    optimizer path as every other block.  The l2 penalty covers U, V, mu
    and tau; the global offset is left unpenalized.
    """

    U: np.ndarray
    V: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    beta: np.ndarray

    kind = "biasedmf"
    phases = ("features",)

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        if self.mu.shape != (self.U.shape[0],) or self.tau.shape != (self.V.shape[0],):
            raise DimensionError("bias vector shapes must match U/V row counts")
        if self.beta.shape != (1,):
            raise DimensionError("beta must be a single scalar")

    def param_blocks(self, phase):
        if phase != "features":
            raise ValueError(f"unknown phase {phase!r}")
        return [self.U, self.V, self.mu, self.tau, self.beta]

    def predict_batch(self, rows, cols):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if len(rows) and (rows.min() < 0 or rows.max() >= self.U.shape[0]):
            raise IndexError("row index out of range")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.V.shape[0]):
            raise IndexError("column index out of range")
        inner = np.einsum("bd,bd->b", self.U[rows], self.V[cols])
        return inner + self.mu[rows] + self.tau[cols] + self.beta[0]

    def gradient(self, obs, lam):
        Un = self.U[obs.rows]
        Vm = self.V[obs.cols]
        preds = (
            np.einsum("bd,bd->b", Un, Vm)
            + self.mu[obs.rows]
            + self.tau[obs.cols]
            + self.beta[0]
        )
        resid = preds - obs.values
        sse = float(resid @ resid)
        r2 = 2.0 * resid
        dU = _scatter_rows(obs.rows, r2[:, None] * Vm, self.U.shape[0])
        dV = _scatter_rows(obs.cols, r2[:, None] * Un, self.V.shape[0])
        dmu = np.bincount(obs.rows, weights=r2, minlength=self.U.shape[0])
        dtau = np.bincount(obs.cols, weights=r2, minlength=self.V.shape[0])
        dbeta = np.array([r2.sum()])
        value = sse
        if lam != 0.0:
            dU += 2.0 * lam * self.U
            dV += 2.0 * lam * self.V
            dmu += 2.0 * lam * self.mu
            dtau += 2.0 * lam * self.tau
            value += lam * float(
                np.sum(self.U * self.U)
                + np.sum(self.V * self.V)
                + np.sum(self.mu * self.mu)
                + np.sum(self.tau * self.tau)
            )
        _finite_or_raise([("U", dU), ("V", dV), ("mu", dmu), ("tau", dtau), ("beta", dbeta)])
        return value, {"features": [dU, dV, dmu, dtau, dbeta]}

    def clone(self):
        return BiasedMfState(
            self.U.copy(), self.V.copy(), self.mu.copy(), self.tau.copy(),
            self.beta.copy(),
        )

    def to_arrays(self):
        return {"U": self.U, "V": self.V, "mu": self.mu, "tau": self.tau,
                "beta": self.beta}

    def meta(self):
        return {"N": self.U.shape[0], "M": self.V.shape[0], "D": self.U.shape[1]}

    @classmethod
    def from_arrays(cls, arrays, meta):
        return cls(arrays["U"], arrays["V"], arrays["mu"], arrays["tau"],
                   arrays["beta"])


def init_biasedmf(N, M, D, spec: InitSpec, global_bias=0.0) -> BiasedMfState:
    rng = np.random.default_rng(spec.seed)
    std = spec.feature_std
    return BiasedMfState(
        U=std * rng.standard_normal((N, D)),
        V=std * rng.standard_normal((M, D)),
        mu=np.zeros(N),
        tau=np.zeros(M),
        beta=np.array([float(global_bias)]),
    )


def biasedmf_predict(state: BiasedMfState, n: int, m: int) -> float:
    _check_index("row", n, state.U.shape[0])
    _check_index("column", m, state.V.shape[0])
    return float(state.U[n] @ state.V[m] + state.mu[n] + state.tau[m] + state.beta[0])


# --------------------------------------------------------------------------
# NTN
# --------------------------------------------------------------------------

@dataclass
class NtnModel:
    """Neural tensor network over 0-based (row, col) pairs.

    Q has shape (D, D, H) with slice Q[:, :, h]; W is (H, 2D); a and b are
    H-vectors.  ``target_offset``/``target_scale`` define the affine map
    between native values x and fit targets t = (x - offset) / scale;
    predict_batch returns offset + scale * model_output.
    """

    U: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    W: np.ndarray
    b: np.ndarray
    a: np.ndarray
    output_sigmoid: bool = False
    target_offset: float = 0.0
    target_scale: float = 1.0

    kind = "ntn"
    phases = ("network", "features")

    def __post_init__(self):
        D = self.U.shape[1]
        H = self.a.shape[0]
        if H < 1:
            raise DimensionError("H must be >= 1")
        if self.V.shape[1] != D:
            raise DimensionError("U and V disagree on D")
        if self.Q.shape != (D, D, H):
            raise DimensionError(f"Q must have shape {(D, D, H)}, got {self.Q.shape}")
        if self.W.shape != (H, 2 * D):
            raise DimensionError(f"W must have shape {(H, 2 * D)}, got {self.W.shape}")
        if self.b.shape != (H,):
            raise DimensionError("b must be an H-vector")
        if self.target_scale == 0:
            raise ValueError("target_scale must be nonzero")

    @property
    def dims(self):
        return self.U.shape[0], self.V.shape[0], self.U.shape[1], self.a.shape[0]

    def param_blocks(self, phase):
        if phase == "network":
            return [self.Q, self.W, self.b, self.a]
        if phase == "features":
            return [self.U, self.V]
        raise ValueError(f"unknown phase {phase!r}")

    def _chunk(self):
        _, _, D, H = self.dims
        return max(1, _NTN_CHUNK_ELEMS // max(1, D * H))

    def _raw_forward(self, rows, cols):
        """Model-space outputs (sigmoid applied when configured)."""
        D = self.U.shape[1]
        out = np.empty(len(rows))
        tanh_store = np.empty((len(rows), self.a.shape[0]))
        step = self._chunk()
        for lo in range(0, len(rows), step):
            sl = slice(lo, lo + step)
            Un = self.U[rows[sl]]
            Vm = self.V[cols[sl]]
            # bilinear term: tmp[b, j, h] = sum_i Un[b, i] Q[i, j, h]
            tmp = np.tensordot(Un, self.Q, axes=([1], [0]))
            pre = np.einsum("bjh,bj->bh", tmp, Vm)
            pre += np.concatenate([Un, Vm], axis=1) @ self.W.T
            pre += self.b
            t = np.tanh(pre)
            tanh_store[sl] = t
            out[sl] = t @ self.a
        if self.output_sigmoid:
            out = sigmoid(out)
        return out, tanh_store

    def predict_batch(self, rows, cols):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if len(rows) and (rows.min() < 0 or rows.max() >= self.U.shape[0]):
            raise IndexError("row index out of range")
        if len(cols) and (cols.min() < 0 or cols.max() >= self.V.shape[0]):
            raise IndexError("column index out of range")
        raw, _ = self._raw_forward(rows, cols)
        return self.target_offset + self.target_scale * raw

    def gradient(self, obs, lam):
        D = self.U.shape[1]
        targets = (obs.values - self.target_offset) / self.target_scale
        raw, t = self._raw_forward(obs.rows, obs.cols)
        resid = raw - targets
        sse = float(resid @ resid)
        dout = 2.0 * resid
        if self.output_sigmoid:
            dout = dout * raw * (1.0 - raw)

        da = t.T @ dout
        dpre = (dout[:, None] * self.a) * (1.0 - t * t)
        db = dpre.sum(axis=0)
        dQ = np.zeros_like(self.Q)
        dW = np.zeros_like(self.W)
        dUrows = np.empty((len(obs.rows), D))
        dVrows = np.empty((len(obs.cols), D))
        step = self._chunk()
        for lo in range(0, len(obs.rows), step):
            sl = slice(lo, lo + step)
            Un = self.U[obs.rows[sl]]
            Vm = self.V[obs.cols[sl]]
            dp = dpre[sl]
            dQ += np.einsum("bi,bh,bj->ijh", Un, dp, Vm)
            dW += dp.T @ np.concatenate([Un, Vm], axis=1)
            qv = np.einsum("ijh,bj->bih", self.Q, Vm)
            dUrows[sl] = np.einsum("bh,bih->bi", dp, qv) + dp @ self.W[:, :D]
            qu = np.einsum("ijh,bi->bjh", self.Q, Un)
            dVrows[sl] = np.einsum("bh,bjh->bj", dp, qu) + dp @ self.W[:, D:]
        dU = _scatter_rows(obs.rows, dUrows, self.U.shape[0])
        dV = _scatter_rows(obs.cols, dVrows, self.V.shape[0])
        value = sse
        if lam != 0.0:
            dU += 2.0 * lam * self.U
            dV += 2.0 * lam * self.V
            value += lam * float(np.sum(self.U * self.U) + np.sum(self.V * self.V))
        _finite_or_raise(
            [("Q", dQ), ("W", dW), ("b", db), ("a", da), ("U", dU), ("V", dV)]
        )
        return value, {"network": [dQ, dW, db, da], "features": [dU, dV]}

    def clone(self):
        return NtnModel(
            self.U.copy(), self.V.copy(), self.Q.copy(), self.W.copy(),
            self.b.copy(), self.a.copy(), self.output_sigmoid,
            self.target_offset, self.target_scale,
        )

    def to_arrays(self):
        return {"U": self.U, "V": self.V, "Q": self.Q, "W": self.W,
                "b": self.b, "a": self.a}

    def meta(self):
        N, M, D, H = self.dims
        return {"N": N, "M": M, "D": D, "H": H,
                "output_sigmoid": self.output_sigmoid,
                "target_offset": self.target_offset,
                "target_scale": self.target_scale}

    @classmethod
    def from_arrays(cls, arrays, meta):
        return cls(
            arrays["U"], arrays["V"], arrays["Q"], arrays["W"], arrays["b"],
            arrays["a"], bool(meta["output_sigmoid"]),
            float(meta["target_offset"]), float(meta["target_scale"]),
        )


def init_ntn(N, M, D, H, spec: InitSpec, output_sigmoid=False,
             target_offset=0.0, target_scale=1.0) -> NtnModel:
    """Fresh NTN: uniform network weights with the same fan-based bound as
    the MLP (the bilinear slices use the (2D, H) fan), zero hidden biases,
    Gaussian features."""
    rng = np.random.default_rng(spec.seed)
    std = spec.feature_std
    bq = weight_bound(2 * D, H)
    bw = weight_bound(2 * D, H)
    ba = weight_bound(H, 1)
    return NtnModel(
        U=std * rng.standard_normal((N, D)),
        V=std * rng.standard_normal((M, D)),
        Q=rng.uniform(-bq, bq, size=(D, D, H)),
        W=rng.uniform(-bw, bw, size=(H, 2 * D)),
        b=np.zeros(H),
        a=rng.uniform(-ba, ba, size=H),
        output_sigmoid=output_sigmoid,
        target_offset=target_offset,
        target_scale=target_scale,
    )


def ntn_predict(model: NtnModel, n: int, m: int) -> float:
    """Model-space output for one pair (no target rescaling)."""
    _check_index("row", n, model.U.shape[0])
    _check_index("column", m, model.V.shape[0])
    raw, _ = model._raw_forward(np.array([n]), np.array([m]))
    return float(raw[0])


# --------------------------------------------------------------------------
# NTN construction that reproduces the first layer of NNMF
# --------------------------------------------------------------------------

@dataclass
class NtnEmbedding:
    """Diagonal-tensor NTN fragment whose bilinear form equals the first
    NNMF layer's pre-activations (bias excluded).

    Built from the (H, 2D+D') first-layer weight matrix: padded features
    Ubar = [Un; 1_D; U'_n] and Vbar = [1_D; Vm; V'_m] make the diagonal
    quadratic form Ubar^T Q^h Vbar recover sum_i W'_{h,i} * input_i.
    """

    Q: np.ndarray  # (P, P, H) with P = 2D + D'
    D: int
    Dprime: int

    def pad_row(self, Un, Uprime_n):
        Un = np.asarray(Un, dtype=np.float64)
        Uprime_n = np.asarray(Uprime_n, dtype=np.float64)
        if Uprime_n.ndim == 2:
            if Uprime_n.shape[1] != 1:
                raise UnsupportedError("the first-layer embedding requires K = 1")
            Uprime_n = Uprime_n[:, 0]
        return np.concatenate([Un, np.ones(self.D), Uprime_n])

    def pad_col(self, Vm, Vprime_m):
        Vm = np.asarray(Vm, dtype=np.float64)
        Vprime_m = np.asarray(Vprime_m, dtype=np.float64)
        if Vprime_m.ndim == 2:
            if Vprime_m.shape[1] != 1:
                raise UnsupportedError("the first-layer embedding requires K = 1")
            Vprime_m = Vprime_m[:, 0]
        return np.concatenate([np.ones(self.D), Vm, Vprime_m])

    def bilinear(self, u_bar, v_bar):
        """All H values of u_bar^T Q^h v_bar."""
        return np.einsum("i,ijh,j->h", u_bar, self.Q, v_bar)

    def pre_activations(self, state, n: int, m: int):
        """First-layer pre-activations for pair (n, m) of a LatentState."""
        u_bar = self.pad_row(state.U[n], state.Uprime[n])
        v_bar = self.pad_col(state.V[m], state.Vprime[m])
        return self.bilinear(u_bar, v_bar)


def embed_nnmf_first_layer(Wprime, D: int, Dprime: int) -> NtnEmbedding:
    """Diagonal slices Q^h_{ii} = W'_{h,i} over padded (2D+D')-vectors.

    ``Wprime`` is (H, 2D+D'): row h holds the incoming weights of hidden
    unit h of the first NNMF layer.  Only K = 1 feature matrices can be
    packed into the padded vectors.
    """
    Wprime = np.asarray(Wprime, dtype=np.float64)
    P = 2 * D + Dprime
    if Wprime.ndim != 2 or Wprime.shape[1] != P:
        raise DimensionError(f"Wprime must have shape (H, {P})")
    H = Wprime.shape[0]
    Q = np.zeros((P, P, H))
    idx = np.arange(P)
    Q[idx, idx, :] = Wprime.T
    return NtnEmbedding(Q=Q, D=D, Dprime=Dprime)
