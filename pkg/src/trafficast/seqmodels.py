"""Recurrent forecasting models over lagged windows.

Five architectures share one training loop: a plain tanh RNN, an LSTM, a
GRU, an LSTM encoder-decoder (one decoder step from a zero start token),
and the same encoder-decoder with additive attention over the encoder's
hidden states. All are single-step-ahead regressors: a window of p lagged
values in, one value out.

Training minimizes mean squared error with Adam and is bitwise
reproducible for a fixed seed (seeded init, seeded shuffling, sequential
updates).
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InsufficientData, MalformedInput, ShapeError, TrainingDiverged
from .series import TrafficSeries

_CHECKPOINT_VERSION = 1


class Architecture(enum.Enum):
    RNN = "rnn"
    LSTM = "lstm"
    GRU = "gru"
    LSTM_SEQ2SEQ = "lstm_seq2seq"
    LSTM_SEQ2SEQ_ATN = "lstm_seq2seq_atn"


@dataclass(frozen=True)
class ModelSpec:
    architecture: Architecture
    hidden_size: int = 64
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 42

    def __post_init__(self):
        if self.hidden_size < 1:
            raise MalformedInput("hidden_size must be >= 1")
        if self.epochs < 1:
            raise MalformedInput("epochs must be >= 1")


@dataclass(frozen=True)
class WindowedDataset:
    """Rows of p consecutive values, each paired with its successor."""

    inputs: np.ndarray  # (samples, p), chronological within each row
    targets: np.ndarray  # (samples,)
    p: int

    @property
    def samples(self) -> int:
        return self.targets.size


@dataclass
class FittedModel:
    spec: ModelSpec
    p: int
    params: dict[str, np.ndarray]
    loss_history: list[float] = field(default_factory=list)


def make_windows(s: TrafficSeries, p: int) -> WindowedDataset:
    """Lagged windows in temporal order (no shuffling)."""
    if s.has_missing:
        raise MalformedInput("fill missing values before windowing")
    n = len(s)
    if n <= p:
        raise InsufficientData(f"series length {n} must exceed lag count {p}")
    idx = np.arange(p)[None, :] + np.arange(n - p)[:, None]
    return WindowedDataset(inputs=s.values[idx], targets=s.values[p:], p=p)


def split(ds: WindowedDataset, train_frac: float = 0.70) -> tuple[WindowedDataset, WindowedDataset]:
    """Chronological split; every test target follows all train targets."""
    if not 0 < train_frac < 1:
        raise MalformedInput(f"train_frac must be in (0,1), got {train_frac}")
    cut = int(np.floor(train_frac * ds.samples))
    if cut < 1 or cut >= ds.samples:
        raise InsufficientData(
            f"split of {ds.samples} samples at {train_frac} leaves an empty part"
        )
    train = WindowedDataset(ds.inputs[:cut], ds.targets[:cut], ds.p)
    test = WindowedDataset(ds.inputs[cut:], ds.targets[cut:], ds.p)
    return train, test


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------


def rnn_cell(x: Tensor, h: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """h' = tanh([x, h] @ W + b)."""
    return ad.tanh(ad.add(ad.matmul(ad.concat([x, h], axis=1), W), b))


def lstm_cell(
    x: Tensor, h: Tensor, c: Tensor, W: Tensor, b: Tensor, hidden: int
) -> tuple[Tensor, Tensor]:
    """Fused-gate LSTM step; gate order input, forget, candidate, output."""
    z = ad.add(ad.matmul(ad.concat([x, h], axis=1), W), b)
    i = ad.sigmoid(z.slice(1, 0, hidden))
    f = ad.sigmoid(z.slice(1, hidden, 2 * hidden))
    g = ad.tanh(z.slice(1, 2 * hidden, 3 * hidden))
    o = ad.sigmoid(z.slice(1, 3 * hidden, 4 * hidden))
    c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_next = ad.mul(o, ad.tanh(c_next))
    return h_next, c_next


def gru_cell(
    x: Tensor, h: Tensor, Wrz: Tensor, brz: Tensor, Wn: Tensor, bn: Tensor, hidden: int
) -> Tensor:
    """Reset/update-gate GRU step."""
    rz = ad.sigmoid(ad.add(ad.matmul(ad.concat([x, h], axis=1), Wrz), brz))
    r = rz.slice(1, 0, hidden)
    z = rz.slice(1, hidden, 2 * hidden)
    n = ad.tanh(ad.add(ad.matmul(ad.concat([x, ad.mul(r, h)], axis=1), Wn), bn))
    one_minus_z = ad.add(ad.mul(z, -1.0), np.ones_like(z.data))
    return ad.add(ad.mul(one_minus_z, n), ad.mul(z, h))


# ---------------------------------------------------------------------------
# Parameter initialization
# ---------------------------------------------------------------------------


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def init_params(architecture: Architecture, hidden: int, seed: int) -> dict[str, np.ndarray]:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    rng = np.random.default_rng(seed)
    fan = 1 + hidden
    params: dict[str, np.ndarray] = {}
    if architecture is Architecture.RNN:
        params["cell.W"] = _uniform(rng, fan, (fan, hidden))
        params["cell.b"] = np.zeros(hidden)
        head_in = hidden
    elif architecture is Architecture.LSTM:
        params["cell.W"] = _uniform(rng, fan, (fan, 4 * hidden))
        params["cell.b"] = np.zeros(4 * hidden)
        head_in = hidden
    elif architecture is Architecture.GRU:
        params["cell.Wrz"] = _uniform(rng, fan, (fan, 2 * hidden))
        params["cell.brz"] = np.zeros(2 * hidden)
        params["cell.Wn"] = _uniform(rng, fan, (fan, hidden))
        params["cell.bn"] = np.zeros(hidden)
        head_in = hidden
    else:  # both encoder-decoder variants
        params["enc.W"] = _uniform(rng, fan, (fan, 4 * hidden))
        params["enc.b"] = np.zeros(4 * hidden)
        params["dec.W"] = _uniform(rng, fan, (fan, 4 * hidden))
        params["dec.b"] = np.zeros(4 * hidden)
        head_in = hidden
        if architecture is Architecture.LSTM_SEQ2SEQ_ATN:
            params["attn.We"] = _uniform(rng, hidden, (hidden, hidden))
            params["attn.Wd"] = _uniform(rng, hidden, (hidden, hidden))
            params["attn.v"] = _uniform(rng, hidden, (hidden, 1))
            head_in = 2 * hidden
    params["head.W"] = _uniform(rng, head_in, (head_in, 1))
    params["head.b"] = np.zeros(1)
    return params


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------


def _zero_state(batch: int, hidden: int) -> Tensor:
    return Tensor(np.zeros((batch, hidden)))


def seq2seq_forward(
    windows: np.ndarray,
    tensors: dict[str, Tensor],
    hidden: int,
    attention: bool,
) -> tuple[Tensor, Tensor | None]:
    """Encode the window, decode one step; returns (prediction, weights).

    Attention scores each encoder hidden state against the decoder state
    (additive form), softmaxes them into weights, and appends the weighted
    context to the decoder output before the head projection. The weights
    tensor is None without attention.
    """
    batch, p = windows.shape
    h = _zero_state(batch, hidden)
    c = _zero_state(batch, hidden)
    encoder_states = []
    for t in range(p):
        x = Tensor(windows[:, t : t + 1])
        h, c = lstm_cell(x, h, c, tensors["enc.W"], tensors["enc.b"], hidden)
        encoder_states.append(h)
    start = Tensor(np.zeros((batch, 1)))
    h_dec, _ = lstm_cell(start, h, c, tensors["dec.W"], tensors["dec.b"], hidden)

    weights = None
    if attention:
        dec_proj = ad.matmul(h_dec, tensors["attn.Wd"])
        scores = []
        for h_enc in encoder_states:
            e = ad.tanh(ad.add(ad.matmul(h_enc, tensors["attn.We"]), dec_proj))
            scores.append(ad.matmul(e, tensors["attn.v"]))
        weights = ad.softmax(ad.concat(scores, axis=1), axis=1)
        context = ad.weighted_sum(weights, encoder_states)
        h_dec = ad.concat([h_dec, context], axis=1)
    pred = ad.add(ad.matmul(h_dec, tensors["head.W"]), tensors["head.b"])
    return pred, weights


def forward(
    windows: np.ndarray,
    tensors: dict[str, Tensor],
    architecture: Architecture,
    hidden: int,
) -> Tensor:
    """Batch prediction tensor of shape (batch, 1) for any architecture."""
    if windows.ndim != 2:
        raise ShapeError(f"windows must be 2-D, got shape {windows.shape}")
    batch, p = windows.shape
    if architecture in (Architecture.LSTM_SEQ2SEQ, Architecture.LSTM_SEQ2SEQ_ATN):
        pred, _ = seq2seq_forward(
            windows, tensors, hidden, architecture is Architecture.LSTM_SEQ2SEQ_ATN
        )
        return pred
    h = _zero_state(batch, hidden)
    if architecture is Architecture.LSTM:
        c = _zero_state(batch, hidden)
        for t in range(p):
            x = Tensor(windows[:, t : t + 1])
            h, c = lstm_cell(x, h, c, tensors["cell.W"], tensors["cell.b"], hidden)
    elif architecture is Architecture.GRU:
        for t in range(p):
            x = Tensor(windows[:, t : t + 1])
            h = gru_cell(
                x, h, tensors["cell.Wrz"], tensors["cell.brz"],
                tensors["cell.Wn"], tensors["cell.bn"], hidden,
            )
    elif architecture is Architecture.RNN:
        for t in range(p):
            x = Tensor(windows[:, t : t + 1])
            h = rnn_cell(x, h, tensors["cell.W"], tensors["cell.b"])
    else:
        raise MalformedInput(f"unknown architecture {architecture}")
    return ad.add(ad.matmul(h, tensors["head.W"]), tensors["head.b"])


# ---------------------------------------------------------------------------
# Training and prediction
# ---------------------------------------------------------------------------


def train(ds_train: WindowedDataset, spec: ModelSpec) -> FittedModel:
    """Fit by MSE + Adam. Deterministic for a fixed seed.

    Expects inputs normalized to roughly [0, 1]; raises TrainingDiverged
    if the loss turns non-finite.
    """
    if ds_train.samples < 1:
        raise InsufficientData("empty training set")
    params = init_params(spec.architecture, spec.hidden_size, spec.seed)
    state = ad.AdamState()
    rng = np.random.default_rng(spec.seed)
    n = ds_train.samples
    history: list[float] = []
    for _ in range(spec.epochs):
        order = rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, spec.batch_size):
            rows = order[start : start + spec.batch_size]
            xb = ds_train.inputs[rows]
            yb = ds_train.targets[rows][:, None]
            tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
            pred = forward(xb, tensors, spec.architecture, spec.hidden_size)
            err = pred - Tensor(yb)
            loss = ad.mul(ad.sum_squares(err), 1.0 / rows.size)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise TrainingDiverged(f"loss became {loss_val}")
            sq_sum += loss_val * rows.size
            grad_map = ad.backward(loss)
            grads = {k: grad_map[t] for k, t in tensors.items() if t in grad_map}
            params = ad.adam_step(
                params, grads, state, lr=spec.learning_rate
            )
        history.append(sq_sum / n)
    return FittedModel(spec=spec, p=ds_train.p, params=params, loss_history=history)


def predict(model: FittedModel, ds: WindowedDataset, batch_size: int = 256) -> np.ndarray:
    """One prediction per row, in row order."""
    if ds.samples == 0:
        return np.empty(0)
    if ds.inputs.shape[1] != model.p:
        raise ShapeError(
            f"window width {ds.inputs.shape[1]} != model lag count {model.p}"
        )
    tensors = {k: Tensor(v) for k, v in model.params.items()}
    chunks = []
    for start in range(0, ds.samples, batch_size):
        xb = ds.inputs[start : start + batch_size]
        out = forward(xb, tensors, model.spec.architecture, model.spec.hidden_size)
        chunks.append(out.data[:, 0])
    return np.concatenate(chunks)


def attention_weights(model: FittedModel, windows: np.ndarray) -> np.ndarray:
    """Attention distribution over encoder steps for each window row."""
    if model.spec.architecture is not Architecture.LSTM_SEQ2SEQ_ATN:
        raise MalformedInput("model has no attention layer")
    tensors = {k: Tensor(v) for k, v in model.params.items()}
    _, weights = seq2seq_forward(windows, tensors, model.spec.hidden_size, True)
    return weights.data


# ---------------------------------------------------------------------------
# Checkpoints: version byte, JSON header line, raw little-endian float64
# ---------------------------------------------------------------------------


def save_model(path, model: FittedModel) -> None:
    names = sorted(model.params)
    header = {
        "architecture": model.spec.architecture.value,
        "hidden_size": model.spec.hidden_size,
        "epochs": model.spec.epochs,
        "batch_size": model.spec.batch_size,
        "learning_rate": model.spec.learning_rate,
        "seed": model.spec.seed,
        "p": model.p,
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<BI", _CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n], dtype="<f8").tobytes())


def load_model(path) -> FittedModel:
    with open(path, "rb") as fh:
        version, hlen = struct.unpack("<BI", fh.read(5))
        if version != _CHECKPOINT_VERSION:
            raise MalformedInput(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode())
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            params[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    spec = ModelSpec(
        architecture=Architecture(header["architecture"]),
        hidden_size=header["hidden_size"],
        epochs=header["epochs"],
        batch_size=header["batch_size"],
        learning_rate=header["learning_rate"],
        seed=header["seed"],
    )
    return FittedModel(spec=spec, p=header["p"], params=params)
