"""CNN and (bi)LSTM document encoders with hand-written reverse-mode gradients.

Inputs follow the document-matrix convention: ``x`` is d_w x N, one column
per token. Outputs are N support points stored as rows (N x d_out).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, LoadError

KINDS = ("cnn", "lstm", "bilstm")
BN_EPS = 1e-5
BN_MOMENTUM = 0.9
GATES = ("i", "f", "o", "g")


def _uniform_init(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], shape[0])
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=shape)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class EncoderOutput:
    support_points: np.ndarray
    doc_id: str = ""
    cache: dict | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.support_points.shape[0]


# ---------------------------------------------------------------- CNN


@dataclass
class CnnParams:
    S: np.ndarray
    g: np.ndarray
    l: int = 1

    @classmethod
    def init(cls, d_w: int, d_c: int, l: int, rng: np.random.Generator) -> "CnnParams":
        if l < 0:
            raise ConfigError("half window l must be >= 0")
        S = _uniform_init(rng, ((2 * l + 1) * d_w, d_c))
        return cls(S, np.zeros(d_c), l)

    @property
    def d_w(self) -> int:
        return self.S.shape[0] // (2 * self.l + 1)

    def tensors(self) -> dict[str, np.ndarray]:
        return {"S": self.S, "g": self.g}


def _windows(rows: np.ndarray, l: int) -> np.ndarray:
    n, d = rows.shape
    padded = np.zeros((n + 2 * l, d))
    padded[l : l + n] = rows
    return np.concatenate([padded[k : k + n] for k in range(2 * l + 1)], axis=1)


def cnn_forward(x: np.ndarray, params: CnnParams, doc_id: str = "") -> EncoderOutput:
    """x~_t = x_tl S + g with zero padding, so N outputs for N inputs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or params.S.shape[0] != (2 * params.l + 1) * x.shape[0]:
        raise ConfigError(
            f"CNN expects d_w={params.d_w} rows with window {2 * params.l + 1}, got input {x.shape}"
        )
    xw = _windows(np.ascontiguousarray(x.T), params.l)
    z = xw @ params.S + params.g
    return EncoderOutput(z, doc_id, {"xw": xw, "n": x.shape[1], "d_w": x.shape[0]})


def cnn_backward(out: EncoderOutput, params: CnnParams, dz: np.ndarray):
    xw = out.cache["xw"]
    if dz.shape != out.support_points.shape:
        raise ValueError("upstream gradient shape mismatch")
    grads = {"S": xw.T @ dz, "g": dz.sum(axis=0)}
    dxw = dz @ params.S.T
    n, d_w, l = out.cache["n"], out.cache["d_w"], params.l
    dpad = np.zeros((n + 2 * l, d_w))
    for k in range(2 * l + 1):
        dpad[k : k + n] += dxw[:, k * d_w : (k + 1) * d_w]
    return grads, dpad[l : l + n].T


# ---------------------------------------------------------------- LSTM


@dataclass
class LstmParams:
    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_g: np.ndarray
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @classmethod
    def init(cls, d_w: int, d_h: int, rng: np.random.Generator) -> "LstmParams":
        kw = {}
        for gate in GATES:
            kw[f"U_{gate}"] = _uniform_init(rng, (d_w, d_h))
        for gate in GATES:
            kw[f"W_{gate}"] = _uniform_init(rng, (d_h, d_h))
        for name in ("b_i", "b_f", "b_o", "b_c"):
            kw[name] = np.zeros(d_h)
        return cls(**kw)

    @classmethod
    def zeros(cls, d_w: int, d_h: int) -> "LstmParams":
        kw = {f.name: None for f in fields(cls)}
        for gate in GATES:
            kw[f"U_{gate}"] = np.zeros((d_w, d_h))
            kw[f"W_{gate}"] = np.zeros((d_h, d_h))
        for name in ("b_i", "b_f", "b_o", "b_c"):
            kw[name] = np.zeros(d_h)
        return cls(**kw)

    @property
    def d_w(self) -> int:
        return self.U_i.shape[0]

    @property
    def d_h(self) -> int:
        return self.U_i.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def stacked(self):
        U = np.concatenate([self.U_i, self.U_f, self.U_o, self.U_g], axis=1)
        W = np.concatenate([self.W_i, self.W_f, self.W_o, self.W_g], axis=1)
        b = np.concatenate([self.b_i, self.b_f, self.b_o, self.b_c])
        return U, W, b


def _lstm_run(rows: np.ndarray, p: LstmParams, paper_exact_cell: bool):
    n = rows.shape[0]
    h_dim = p.d_h
    U, W, b = p.stacked()
    pre_x = rows @ U + b
    H = np.zeros((n + 1, h_dim))  # H[0] = h_0
    C = np.zeros((n + 1, h_dim))
    gates = np.zeros((n, 4 * h_dim))
    for t in range(n):
        a = pre_x[t] + H[t] @ W
        sg = sigmoid(a[: 3 * h_dim])
        c_tilde = np.tanh(a[3 * h_dim :])
        i, f, o = sg[:h_dim], sg[h_dim : 2 * h_dim], sg[2 * h_dim :]
        s = f * C[t] + i * c_tilde
        C[t + 1] = sigmoid(s) if paper_exact_cell else s
        H[t + 1] = np.tanh(C[t + 1]) * o
        gates[t, : 3 * h_dim] = sg
        gates[t, 3 * h_dim :] = c_tilde
    return H, C, gates


def lstm_forward(
    x: np.ndarray, params: LstmParams, doc_id: str = "", paper_exact_cell: bool = False
) -> EncoderOutput:
    """Run the recurrence left to right from h_0 = C_0 = 0; return h_1..h_N."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != params.d_w:
        raise ConfigError(f"LSTM expects d_w={params.d_w}, got input {x.shape}")
    rows = np.ascontiguousarray(x.T)
    H, C, gates = _lstm_run(rows, params, paper_exact_cell)
    cache = {"rows": rows, "H": H, "C": C, "gates": gates, "paper_exact_cell": paper_exact_cell}
    return EncoderOutput(H[1:].copy(), doc_id, cache)


def lstm_backward(out: EncoderOutput, params: LstmParams, dh_out: np.ndarray):
    """Full backpropagation through time over every returned hidden state."""
    c = out.cache
    rows, H, C, gates = c["rows"], c["H"], c["C"], c["gates"]
    if dh_out.shape != out.support_points.shape:
        raise ValueError("upstream gradient shape mismatch")
    n, h_dim = dh_out.shape
    U, W, _ = params.stacked()
    da = np.zeros((n, 4 * h_dim))
    dW = np.zeros_like(W)
    dh_next = np.zeros(h_dim)
    dc_next = np.zeros(h_dim)
    for t in range(n - 1, -1, -1):
        i = gates[t, :h_dim]
        f = gates[t, h_dim : 2 * h_dim]
        o = gates[t, 2 * h_dim : 3 * h_dim]
        g = gates[t, 3 * h_dim :]
        ct = C[t + 1]
        tc = np.tanh(ct)
        dh = dh_out[t] + dh_next
        dct = dh * o * (1.0 - tc * tc) + dc_next
        ds = dct * ct * (1.0 - ct) if c["paper_exact_cell"] else dct
        dc_next = ds * f
        dz = da[t]
        dz[:h_dim] = ds * g * i * (1.0 - i)
        dz[h_dim : 2 * h_dim] = ds * C[t] * f * (1.0 - f)
        dz[2 * h_dim : 3 * h_dim] = dh * tc * o * (1.0 - o)
        dz[3 * h_dim :] = ds * i * (1.0 - g * g)
        dW += np.outer(H[t], dz)
        dh_next = W @ dz
    dU = rows.T @ da
    db = da.sum(axis=0)
    grads = {}
    for k, gate in enumerate(GATES):
        sl = slice(k * h_dim, (k + 1) * h_dim)
        grads[f"U_{gate}"] = dU[:, sl]
        grads[f"W_{gate}"] = dW[:, sl]
        grads["b_c" if gate == "g" else f"b_{gate}"] = db[sl]
    dx = (da @ U.T).T
    return grads, dx


def bilstm_forward(
    x: np.ndarray,
    fwd: LstmParams,
    bwd: LstmParams,
    doc_id: str = "",
    paper_exact_cell: bool = False,
) -> EncoderOutput:
    """Point t = [h_t of the forward pass, backward-pass state aligned to position t]."""
    x = np.asarray(x, dtype=np.float64)
    out_f = lstm_forward(x, fwd, doc_id, paper_exact_cell)
    out_b = lstm_forward(x[:, ::-1], bwd, doc_id, paper_exact_cell)
    z = np.concatenate([out_f.support_points, out_b.support_points[::-1]], axis=1)
    return EncoderOutput(z, doc_id, {"fwd": out_f, "bwd": out_b})


def bilstm_backward(out: EncoderOutput, fwd: LstmParams, bwd: LstmParams, dz: np.ndarray):
    h_dim = fwd.d_h
    g_f, dx_f = lstm_backward(out.cache["fwd"], fwd, np.ascontiguousarray(dz[:, :h_dim]))
    g_b, dx_b = lstm_backward(out.cache["bwd"], bwd, np.ascontiguousarray(dz[::-1, h_dim:]))
    grads = {f"fwd.{k}": v for k, v in g_f.items()}
    grads.update({f"bwd.{k}": v for k, v in g_b.items()})
    return grads, dx_f + dx_b[:, ::-1]


# ---------------------------------------------------------------- batch norm


def batchnorm_forward(blocks: list[np.ndarray], gamma, beta, eps: float = BN_EPS):
    """Normalize every feature over all points of all blocks together."""
    stacked = np.concatenate(blocks, axis=0)
    mean = stacked.mean(axis=0)
    var = stacked.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (stacked - mean) * inv
    y = xhat * gamma + beta
    bounds = np.cumsum([0] + [b.shape[0] for b in blocks])
    outs = [y[bounds[k] : bounds[k + 1]] for k in range(len(blocks))]
    cache = {"xhat": xhat, "inv": inv, "bounds": bounds, "gamma": gamma}
    return outs, cache, mean, var


def batchnorm_backward(dys: list[np.ndarray], cache):
    dy = np.concatenate(dys, axis=0)
    xhat, inv, gamma = cache["xhat"], cache["inv"], cache["gamma"]
    m = dy.shape[0]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    dx = inv / m * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    b = cache["bounds"]
    return [dx[b[k] : b[k + 1]] for k in range(len(dys))], dgamma, dbeta


# ---------------------------------------------------------------- container


@dataclass
class EncoderConfig:
    kind: str = "cnn"
    d_w: int = 300
    d_h: int = 300
    d_c: int = 300
    half_window: int = 1
    batch_norm: bool = True
    paper_exact_cell: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"encoder kind must be one of {KINDS}, got {self.kind!r}")
        if min(self.d_w, self.d_h, self.d_c) < 1 or self.half_window < 0:
            raise ConfigError("encoder dimensions must be positive")

    @property
    def d_out(self) -> int:
        return {"cnn": self.d_c, "lstm": self.d_h, "bilstm": 2 * self.d_h}[self.kind]


class EncoderParams:
    """All trainable tensors of one encoder plus batch-norm state.

    ``tensors()`` returns live references keyed by stable names; optimizers
    update them in place.
    """

    def __init__(self, config: EncoderConfig, parts: dict, bn: dict | None = None):
        self.config = config
        self.parts = parts
        d = config.d_out
        bn = bn or {}
        self.bn_gamma = bn.get("gamma", np.ones(d))
        self.bn_beta = bn.get("beta", np.zeros(d))
        self.running_mean = bn.get("running_mean", np.zeros(d))
        self.running_var = bn.get("running_var", np.ones(d))

    @classmethod
    def init(cls, config: EncoderConfig) -> "EncoderParams":
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5EED]))
        if config.kind == "cnn":
            parts = {"cnn": CnnParams.init(config.d_w, config.d_c, config.half_window, rng)}
        elif config.kind == "lstm":
            parts = {"fwd": LstmParams.init(config.d_w, config.d_h, rng)}
        else:
            parts = {
                "fwd": LstmParams.init(config.d_w, config.d_h, rng),
                "bwd": LstmParams.init(config.d_w, config.d_h, rng),
            }
        return cls(config, parts)

    @property
    def kind(self) -> str:
        return self.config.kind

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        if self.kind == "cnn":
            out.update(self.parts["cnn"].tensors())
        elif self.kind == "lstm":
            out.update(self.parts["fwd"].tensors())
        else:
            for side in ("fwd", "bwd"):
                out.update({f"{side}.{k}": v for k, v in self.parts[side].tensors().items()})
        if self.config.batch_norm:
            out["bn.gamma"] = self.bn_gamma
            out["bn.beta"] = self.bn_beta
        return out

    def forward(self, x: np.ndarray, doc_id: str = "") -> EncoderOutput:
        """Raw encoder output, before batch normalization."""
        exact = self.config.paper_exact_cell
        if self.kind == "cnn":
            return cnn_forward(x, self.parts["cnn"], doc_id)
        if self.kind == "lstm":
            return lstm_forward(x, self.parts["fwd"], doc_id, exact)
        return bilstm_forward(x, self.parts["fwd"], self.parts["bwd"], doc_id, exact)

    def backward(self, out: EncoderOutput, dz: np.ndarray):
        if self.kind == "cnn":
            return cnn_backward(out, self.parts["cnn"], dz)
        if self.kind == "lstm":
            return lstm_backward(out, self.parts["fwd"], dz)
        return bilstm_backward(out, self.parts["fwd"], self.parts["bwd"], dz)

    def encode(self, x: np.ndarray, doc_id: str = "") -> np.ndarray:
        """Inference-time support points (running batch-norm statistics)."""
        z = self.forward(x, doc_id).support_points
        if self.config.batch_norm:
            z = (z - self.running_mean) / np.sqrt(self.running_var + BN_EPS)
            z = z * self.bn_gamma + self.bn_beta
        return z

    def update_running_stats(self, mean: np.ndarray, var: np.ndarray) -> None:
        self.running_mean *= BN_MOMENTUM
        self.running_mean += (1.0 - BN_MOMENTUM) * mean
        self.running_var *= BN_MOMENTUM
        self.running_var += (1.0 - BN_MOMENTUM) * var

    # checkpoint: JSON container of named row-major f64 tensors

    def state(self) -> dict[str, np.ndarray]:
        st = dict(self.tensors())
        st.setdefault("bn.gamma", self.bn_gamma)
        st.setdefault("bn.beta", self.bn_beta)
        st["bn.running_mean"] = self.running_mean
        st["bn.running_var"] = self.running_var
        return st

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        payload = {
            "format": "corelw-checkpoint/1",
            "config": asdict(self.config),
            "extra": extra or {},
            "tensors": {
                name: {"shape": list(arr.shape), "data": np.asarray(arr, np.float64).ravel().tolist()}
                for name, arr in sorted(self.state().items())
            },
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EncoderParams":
        return cls.load_checkpoint(path)[0]

    @classmethod
    def load_checkpoint(cls, path: str | Path):
        """``(params, extra)`` from a file written by :meth:`save`."""
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            if payload.get("format") != "corelw-checkpoint/1":
                raise ValueError("unknown checkpoint format")
            config = EncoderConfig(**payload["config"])
            arrays = {
                name: np.array(t["data"], dtype=np.float64).reshape(t["shape"])
                for name, t in payload["tensors"].items()
            }
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"cannot read checkpoint {path}: {exc}") from exc
        params = cls.init(config)
        for name, arr in params.tensors().items():
            arr[...] = arrays[name]
        params.bn_gamma[...] = arrays["bn.gamma"]
        params.bn_beta[...] = arrays["bn.beta"]
        params.running_mean[...] = arrays["bn.running_mean"]
        params.running_var[...] = arrays["bn.running_var"]
        return params, payload.get("extra", {})


def encoder_backward(x: np.ndarray, params: EncoderParams, upstream: np.ndarray, out=None):
    """Parameter gradients and dL/dx for raw encoder output ``upstream``."""
    if out is None:
        out = params.forward(x)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != out.support_points.shape:
        raise ValueError(
            f"upstream gradient has shape {upstream.shape}, expected {out.support_points.shape}"
        )
    return params.backward(out, upstream)
