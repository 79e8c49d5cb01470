"""Recurrent model definitions.

Two architectures share one parameter container:

* ``I2DRNN``: hierarchical recurrent net. Layer j at time t sees the layer
  below at time t (feed matrix), the previous-step state of its own layer and
  of every layer above it (recurrent feedback matrices), and a bias. The
  output is a linear, bias-free sum of readouts from every layer.

* ``StackedRNN``: conventional stack. Layer j sees the layer below at time t
  and its own previous state; only the top layer is read out.

With one layer the two coincide, and an I2DRNN whose cross-layer feedback and
non-top readouts are zero reproduces the stacked net exactly.

An optional input encoder (a single-layer tanh RNN) compresses a block of
fine-scale steps into a context vector; the model input at each step is the
concatenation (context, coarse features, same-scale features) in that order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, spectral_radius_scale

ARCH_I2DRNN = "I2DRNN"
ARCH_STACKED = "StackedRNN"
CELL_TANH = "vanilla_tanh"

CHECKPOINT_FORMAT_VERSION = 1

# cross-layer feedback is initialised at half the same-layer spectral radius
CROSS_LAYER_RADIUS_FACTOR = 0.5


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. ``layer_dims[0]`` is the bottom layer."""

    arch: str
    layer_dims: tuple[int, ...]
    input_dim: int
    output_dim: int
    encoder_dim: int = 0
    fine_dim: int = 0
    cell: str = CELL_TANH

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if self.arch not in (ARCH_I2DRNN, ARCH_STACKED):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.cell != CELL_TANH:
            raise ValueError(f"unknown cell {self.cell!r}")
        if len(self.layer_dims) < 1:
            raise ValueError("need at least one layer")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError(f"layer dims must be positive, got {self.layer_dims}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.output_dim < 1:
            raise ValueError("output_dim must be positive")
        if self.encoder_dim < 0:
            raise ValueError("encoder_dim must be >= 0")
        if self.encoder_dim > 0 and self.fine_dim < 1:
            raise ValueError("encoder needs fine_dim >= 1")
        if self.encoder_dim >= self.input_dim and self.encoder_dim > 0:
            raise ValueError("encoder output must leave room for other input parts")

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims)


@dataclass
class ModelParams:
    """Weights for either architecture.

    feed[j] maps layer j-1 (or the assembled input for j=1) into layer j.
    rec[(i, j)] maps layer i's previous state into layer j; the hierarchical
    net has entries for every i >= j, the stacked net only for i == j.
    out[l] is the linear readout of layer l; the stacked net only reads the
    top layer. Readouts carry no bias.
    """

    config: ModelConfig
    feed: dict[int, np.ndarray] = field(default_factory=dict)
    rec: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    bias: dict[int, np.ndarray] = field(default_factory=dict)
    out: dict[int, np.ndarray] = field(default_factory=dict)
    enc_feed: np.ndarray | None = None
    enc_rec: np.ndarray | None = None
    enc_bias: np.ndarray | None = None

    def named_arrays(self):
        """Deterministic (name, array) iteration over every weight tensor."""
        for j in sorted(self.feed):
            yield f"feed_{j}", self.feed[j]
        for (i, j) in sorted(self.rec):
            yield f"rec_{i}_{j}", self.rec[(i, j)]
        for l in sorted(self.out):
            yield f"out_{l}", self.out[l]
        for j in sorted(self.bias):
            yield f"bias_{j}", self.bias[j]
        if self.enc_feed is not None:
            yield "enc_feed", self.enc_feed
            yield "enc_rec", self.enc_rec
            yield "enc_bias", self.enc_bias

    def set_named(self, name: str, value: np.ndarray) -> None:
        if name.startswith("feed_"):
            self.feed[int(name[5:])] = value
        elif name.startswith("rec_"):
            i, j = name[4:].split("_")
            self.rec[(int(i), int(j))] = value
        elif name.startswith("out_"):
            self.out[int(name[4:])] = value
        elif name.startswith("bias_"):
            self.bias[int(name[5:])] = value
        elif name == "enc_feed":
            self.enc_feed = value
        elif name == "enc_rec":
            self.enc_rec = value
        elif name == "enc_bias":
            self.enc_bias = value
        else:
            raise KeyError(name)

    def copy(self) -> "ModelParams":
        p = ModelParams(self.config)
        for name, arr in self.named_arrays():
            p.set_named(name, arr.copy())
        return p

    def zeros_like(self) -> "ModelParams":
        p = ModelParams(self.config)
        for name, arr in self.named_arrays():
            p.set_named(name, np.zeros_like(arr))
        return p


def _uniform_fan_in(rng: Rng, rows: int, cols: int) -> np.ndarray:
    s = 1.0 / np.sqrt(cols)
    return rng.uniform(-s, s, (rows, cols))


def init_params(config: ModelConfig, rng: Rng, rec_radius: float = 0.9) -> ModelParams:
    """Draw initial weights.

    Feed and readout matrices are uniform with 1/sqrt(fan_in) scale; biases
    start at zero. Same-layer recurrent matrices are rescaled to spectral
    radius `rec_radius`, cross-layer feedback to half of it, keeping the
    recurrent map contractive at init.
    """
    if not (0.0 < rec_radius <= 1.0):
        raise ValueError(f"rec_radius must be in (0, 1], got {rec_radius}")
    dims = config.layer_dims
    L = config.num_layers
    p = ModelParams(config)
    for j in range(1, L + 1):
        below = config.input_dim if j == 1 else dims[j - 2]
        p.feed[j] = _uniform_fan_in(rng.split(f"feed{j}"), dims[j - 1], below)
        p.bias[j] = np.zeros(dims[j - 1])
        top = L if config.arch == ARCH_I2DRNN else j
        for i in range(j, top + 1):
            m = _uniform_fan_in(rng.split(f"rec{i}.{j}"), dims[j - 1], dims[i - 1])
            radius = rec_radius if i == j else CROSS_LAYER_RADIUS_FACTOR * rec_radius
            p.rec[(i, j)] = spectral_radius_scale(m, radius)
    readouts = range(1, L + 1) if config.arch == ARCH_I2DRNN else (L,)
    for l in readouts:
        p.out[l] = _uniform_fan_in(rng.split(f"out{l}"), config.output_dim, dims[l - 1])
    if config.encoder_dim > 0:
        p.enc_feed = _uniform_fan_in(rng.split("enc_feed"),
                                     config.encoder_dim, config.fine_dim)
        enc_rec = _uniform_fan_in(rng.split("enc_rec"),
                                  config.encoder_dim, config.encoder_dim)
        p.enc_rec = spectral_radius_scale(enc_rec, rec_radius)
        p.enc_bias = np.zeros(config.encoder_dim)
    return p


def zero_state(config: ModelConfig) -> list[np.ndarray]:
    return [np.zeros(d) for d in config.layer_dims]


def forward_step(params: ModelParams, x: np.ndarray,
                 state: list[np.ndarray]) -> tuple[list[np.ndarray], np.ndarray]:
    """One hierarchical step: new state per layer (bottom-up) and the output.

    Layer j: h_j = tanh(feed_j . below + sum_{i>=j} rec_ij . state_i + bias_j)
    where `below` is x for j=1, else the freshly computed h_{j-1}.
    Output: sum over layers of out_l . h_l.
    """
    cfg = params.config
    if cfg.arch != ARCH_I2DRNN:
        raise ValueError("forward_step drives the hierarchical net; "
                         "use stacked_forward_step for StackedRNN params")
    return _step(params, x, state, cross=True, all_readouts=True)


def stacked_forward_step(params: ModelParams, x: np.ndarray,
                         state: list[np.ndarray]) -> tuple[list[np.ndarray], np.ndarray]:
    """One stacked-RNN step: h_j = tanh(feed_j . below + rec_jj . state_j + bias_j),
    output read from the top layer only."""
    cfg = params.config
    if cfg.arch != ARCH_STACKED:
        raise ValueError("stacked_forward_step needs StackedRNN params")
    return _step(params, x, state, cross=False, all_readouts=False)


def _step(params, x, state, cross: bool, all_readouts: bool):
    cfg = params.config
    L = cfg.num_layers
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({cfg.input_dim},)")
    if len(state) != L:
        raise ValueError(f"state carries {len(state)} layers, expected {L}")
    feed, rec, bias = params.feed, params.rec, params.bias
    new: list[np.ndarray] = []
    below = x
    for j in range(1, L + 1):
        pre = feed[j] @ below + bias[j]
        top = L if cross else j
        for i in range(j, top + 1):
            pre += rec[(i, j)] @ state[i - 1]
        h = np.tanh(pre)
        new.append(h)
        below = h
    if all_readouts:
        o = params.out[1] @ new[0]
        for l in range(2, L + 1):
            o += params.out[l] @ new[l - 1]
    else:
        o = params.out[L] @ new[L - 1]
    return new, o


@dataclass
class Trace:
    """Everything the backward pass needs from one forward run."""

    x: np.ndarray                    # (T, input_dim) assembled inputs
    h: list[np.ndarray]              # per layer, (T, dim_l)
    outputs: np.ndarray              # (T, output_dim)
    init: list[np.ndarray]           # state entering step 0
    enc_states: list[np.ndarray] | None = None   # per step, (block, enc_dim)
    fine: np.ndarray | None = None               # (T, block, fine_dim)


def forward_sequence(params: ModelParams, inputs: np.ndarray,
                     init: list[np.ndarray] | None = None) -> Trace:
    """Run the net over a full sequence of assembled inputs from `init`
    (zeros by default), caching states and outputs for backprop."""
    cfg = params.config
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != cfg.input_dim:
        raise ValueError(f"inputs have shape {X.shape}, expected (T, {cfg.input_dim})")
    T = X.shape[0]
    state = [s.copy() for s in init] if init is not None else zero_state(cfg)
    init_copy = [s.copy() for s in state]
    step = forward_step if cfg.arch == ARCH_I2DRNN else stacked_forward_step
    H = [np.empty((T, d)) for d in cfg.layer_dims]
    O = np.empty((T, cfg.output_dim))
    for t in range(T):
        state, o = step(params, X[t], state)
        for l, h in enumerate(state):
            H[l][t] = h
        O[t] = o
    return Trace(x=X, h=H, outputs=O, init=init_copy)


def encode_fine(params: ModelParams, fine_block: np.ndarray) -> np.ndarray:
    """Compress a (block_len, fine_dim) window into one context vector: final
    state of a single-layer tanh RNN run over the block from a zero state."""
    c, _ = encode_fine_trace(params, fine_block)
    return c


def encode_fine_trace(params: ModelParams, fine_block: np.ndarray):
    if params.enc_feed is None:
        raise ValueError("model has no encoder (encoder_dim = 0)")
    block = np.asarray(fine_block, dtype=np.float64)
    cfg = params.config
    if block.ndim != 2 or block.shape[1] != cfg.fine_dim:
        raise ValueError(f"fine block has shape {block.shape}, "
                         f"expected (steps, {cfg.fine_dim})")
    if block.shape[0] < 1:
        raise ValueError("fine block must contain at least one step")
    states = np.empty((block.shape[0], cfg.encoder_dim))
    e = np.zeros(cfg.encoder_dim)
    for s in range(block.shape[0]):
        e = np.tanh(params.enc_feed @ block[s] + params.enc_rec @ e + params.enc_bias)
        states[s] = e
    return e, states


def assemble_input(context: np.ndarray | None, coarse: np.ndarray | None,
                   same: np.ndarray, input_dim: int) -> np.ndarray:
    """Concatenate (context, coarse, same) in that fixed order and check the
    total width against the model's input_dim."""
    parts = [np.asarray(p, dtype=np.float64)
             for p in (context, coarse, same) if p is not None and np.size(p) > 0]
    x = np.concatenate(parts) if parts else np.empty(0)
    if x.shape != (input_dim,):
        raise ValueError(f"assembled input has {x.shape[0]} entries, "
                         f"model expects {input_dim}")
    return x


def forward_sample(params: ModelParams, same: np.ndarray,
                   coarse: np.ndarray | None = None,
                   fine: np.ndarray | None = None,
                   init: list[np.ndarray] | None = None) -> Trace:
    """Forward over one sample given raw per-scale streams.

    same: (T, same_dim); coarse: (T, coarse_dim), already aligned per step;
    fine: (T, block, fine_dim) windows for the encoder. Streams are encoded
    and concatenated per step, then run through forward_sequence.
    """
    cfg = params.config
    same = np.asarray(same, dtype=np.float64)
    T = same.shape[0]
    enc_states = None
    if cfg.encoder_dim > 0:
        if fine is None:
            raise ValueError("model has an encoder but the sample has no fine stream")
        fine = np.asarray(fine, dtype=np.float64)
        enc_states = []
        context = np.empty((T, cfg.encoder_dim))
        for t in range(T):
            c, states = encode_fine_trace(params, fine[t])
            context[t] = c
            enc_states.append(states)
    X = np.empty((T, cfg.input_dim))
    for t in range(T):
        X[t] = assemble_input(context[t] if enc_states is not None else None,
                              coarse[t] if coarse is not None else None,
                              same[t], cfg.input_dim)
    trace = forward_sequence(params, X, init)
    trace.enc_states = enc_states
    trace.fine = fine if cfg.encoder_dim > 0 else None
    return trace


# ---------------------------------------------------------------------------
# checkpoint serialization


def params_to_dict(params: ModelParams) -> dict:
    cfg = params.config
    matrices = {}
    biases = {}
    for name, arr in params.named_arrays():
        if arr.ndim == 2:
            matrices[name] = {"rows": arr.shape[0], "cols": arr.shape[1],
                              "data": [float(v) for v in arr.ravel()]}
        else:
            biases[name] = [float(v) for v in arr]
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": {
            "arch": cfg.arch,
            "layer_dims": list(cfg.layer_dims),
            "input_dim": cfg.input_dim,
            "output_dim": cfg.output_dim,
            "encoder_dim": cfg.encoder_dim,
            "fine_dim": cfg.fine_dim,
            "cell": cfg.cell,
        },
        "matrices": matrices,
        "biases": biases,
    }


def params_from_dict(doc: dict) -> ModelParams:
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    c = doc["config"]
    cfg = ModelConfig(arch=c["arch"], layer_dims=tuple(c["layer_dims"]),
                      input_dim=c["input_dim"], output_dim=c["output_dim"],
                      encoder_dim=c.get("encoder_dim", 0),
                      fine_dim=c.get("fine_dim", 0),
                      cell=c.get("cell", CELL_TANH))
    p = ModelParams(cfg)
    for name, m in doc["matrices"].items():
        arr = np.asarray(m["data"], dtype=np.float64).reshape(m["rows"], m["cols"])
        p.set_named(name, arr)
    for name, b in doc["biases"].items():
        p.set_named(name, np.asarray(b, dtype=np.float64))
    _check_complete(p)
    return p


def _check_complete(p: ModelParams) -> None:
    cfg = p.config
    L = cfg.num_layers
    dims = cfg.layer_dims
    for j in range(1, L + 1):
        below = cfg.input_dim if j == 1 else dims[j - 2]
        if j not in p.feed or p.feed[j].shape != (dims[j - 1], below):
            raise ValueError(f"checkpoint missing or misshapen feed_{j}")
        if j not in p.bias or p.bias[j].shape != (dims[j - 1],):
            raise ValueError(f"checkpoint missing or misshapen bias_{j}")
        top = L if cfg.arch == ARCH_I2DRNN else j
        for i in range(j, top + 1):
            if (i, j) not in p.rec or p.rec[(i, j)].shape != (dims[j - 1], dims[i - 1]):
                raise ValueError(f"checkpoint missing or misshapen rec_{i}_{j}")
    readouts = range(1, L + 1) if cfg.arch == ARCH_I2DRNN else (L,)
    for l in readouts:
        if l not in p.out or p.out[l].shape != (cfg.output_dim, dims[l - 1]):
            raise ValueError(f"checkpoint missing or misshapen out_{l}")
    if cfg.encoder_dim > 0:
        if p.enc_feed is None or p.enc_feed.shape != (cfg.encoder_dim, cfg.fine_dim):
            raise ValueError("checkpoint missing or misshapen enc_feed")
        if p.enc_rec is None or p.enc_rec.shape != (cfg.encoder_dim, cfg.encoder_dim):
            raise ValueError("checkpoint missing or misshapen enc_rec")
        if p.enc_bias is None or p.enc_bias.shape != (cfg.encoder_dim,):
            raise ValueError("checkpoint missing or misshapen enc_bias")


def save_params(params: ModelParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params), fh)
        fh.write("\n")


def load_params(path) -> ModelParams:
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
