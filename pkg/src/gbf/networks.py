"""Feed-forward and recurrent network controllers, and their text fixture format.

A layer computes ``y = act(W.T @ u + b)`` with ``W`` of shape ``(inputs, outputs)``.

Fixture format (one token group per line, ``#`` starts a comment)::

    gbf-network 1
    kind fnn                      # or rnn-continuous / rnn-discrete
    state_dim 2                   # rnn only
    section state_map             # rnn only; also 'section output_map'
    layers 2
    layer 2 3 tanh                # inputs outputs activation
    W                             # then `inputs` rows of `outputs` numbers
    ...
    b                             # then one row of `outputs` numbers
    ...

Numbers are written with ``repr`` so a save/load round trip is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

ACTIVATIONS = {"identity": 0, "tanh": 1, "logistic": 2}
_ALIASES = {"purelin": "identity", "linear": "identity", "tansig": "tanh", "logsig": "logistic", "sigmoid": "logistic"}


class NetworkFormatError(ValueError):
    pass


def _activate(name: str, s: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(s)
    if name == "logistic":
        return 1.0 / (1.0 + np.exp(-s))
    return s


@dataclass(frozen=True, eq=False)
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if W.ndim != 2:
            raise ValueError(f"layer weights must be a matrix, got shape {W.shape}")
        if b.shape[0] != W.shape[1]:
            raise ValueError(f"bias has {b.shape[0]} entries but layer has {W.shape[1]} outputs")
        act = _ALIASES.get(self.activation, self.activation)
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {sorted(ACTIVATIONS)}")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "activation", act)

    @property
    def in_dim(self) -> int:
        return self.W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W.shape[1]

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return _activate(self.activation, self.W.T @ u + self.b)


@dataclass(frozen=True)
class FnnSpec:
    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for i in range(len(layers) - 1):
            if layers[i].out_dim != layers[i + 1].in_dim:
                raise ValueError(
                    f"layer {i + 1} has {layers[i].out_dim} outputs but layer {i + 2} expects {layers[i + 1].in_dim} inputs"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def __call__(self, u) -> np.ndarray:
        return fnn_eval(self, u)

    def __eq__(self, other):
        if not isinstance(other, FnnSpec) or len(other.layers) != len(self.layers):
            return NotImplemented if not isinstance(other, FnnSpec) else False
        return all(
            a.activation == b.activation and np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)
            for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RnnSpec:
    """Recurrent controller ``x_nn' = state_map([x_nn, u])``, ``y = output_map(x_nn)``.

    With ``discrete=True`` the state map is a one-step update applied once per
    grid step instead of a time derivative. The initial state is always zero.
    """

    state_dim: int
    state_map: FnnSpec
    output_map: FnnSpec
    discrete: bool = False

    def __post_init__(self):
        b = self.state_dim
        if b < 1:
            raise ValueError("recurrent network needs at least one state")
        if self.state_map.out_dim != b:
            raise ValueError(f"state map produces {self.state_map.out_dim} values for {b} states")
        if self.state_map.in_dim <= b:
            raise ValueError("state map must take [x_nn, u] with at least one controller input")
        if self.output_map.in_dim != b:
            raise ValueError(f"output map expects {self.output_map.in_dim} inputs for {b} states")

    @property
    def input_dim(self) -> int:
        return self.state_map.in_dim - self.state_dim

    @property
    def out_dim(self) -> int:
        return self.output_map.out_dim

    @property
    def initial_state(self) -> np.ndarray:
        return np.zeros(self.state_dim)

    def __eq__(self, other):
        if not isinstance(other, RnnSpec):
            return NotImplemented
        return (
            self.state_dim == other.state_dim
            and self.discrete == other.discrete
            and self.state_map == other.state_map
            and self.output_map == other.output_map
        )

    __hash__ = None


def fnn_eval(net: FnnSpec, u) -> np.ndarray:
    v = np.atleast_1d(np.asarray(u, dtype=float))
    if v.shape != (net.in_dim,):
        raise ValueError(f"network expects {net.in_dim} inputs, got {v.shape[0]}")
    for layer in net.layers:
        v = layer(v)
    return v


def _check_rnn_args(net: RnnSpec, x_nn, u=None):
    x_nn = np.atleast_1d(np.asarray(x_nn, dtype=float))
    if x_nn.shape != (net.state_dim,):
        raise ValueError(f"network has {net.state_dim} states, got {x_nn.shape[0]}")
    if u is None:
        return x_nn, None
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (net.input_dim,):
        raise ValueError(f"network expects {net.input_dim} inputs, got {u.shape[0]}")
    return x_nn, u


def rnn_derivative(net: RnnSpec, x_nn, u) -> np.ndarray:
    """Time derivative of the network state of a continuous-time RNN."""
    if net.discrete:
        raise ValueError("discrete-time RNN has no state derivative; use rnn_update")
    x_nn, u = _check_rnn_args(net, x_nn, u)
    return fnn_eval(net.state_map, np.concatenate([x_nn, u]))


def rnn_update(net: RnnSpec, x_nn, u) -> np.ndarray:
    if not net.discrete:
        raise ValueError("continuous-time RNN has no one-step update; use rnn_derivative")
    x_nn, u = _check_rnn_args(net, x_nn, u)
    return fnn_eval(net.state_map, np.concatenate([x_nn, u]))


def rnn_output(net: RnnSpec, x_nn) -> np.ndarray:
    x_nn, _ = _check_rnn_args(net, x_nn)
    return fnn_eval(net.output_map, x_nn)


def pack_fnn(net: FnnSpec | None) -> tuple[np.ndarray, np.ndarray]:
    """Flatten a network for the jitted kernels.

    Returns ``(flat, meta)`` where row ``l`` of ``meta`` holds
    ``(inputs, outputs, activation code, weight offset, bias offset)``.
    """
    if net is None:
        return np.zeros(0), np.zeros((0, 5), dtype=np.int64)
    chunks, meta, off = [], [], 0
    for layer in net.layers:
        wo = off
        chunks.append(layer.W.ravel())
        off += layer.W.size
        bo = off
        chunks.append(layer.b)
        off += layer.b.size
        meta.append((layer.in_dim, layer.out_dim, ACTIVATIONS[layer.activation], wo, bo))
    return np.concatenate(chunks), np.array(meta, dtype=np.int64)


# --- fixture files ----------------------------------------------------------


def _fmt_row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _dump_fnn(net: FnnSpec) -> list[str]:
    lines = [f"layers {net.depth}"]
    for layer in net.layers:
        lines.append(f"layer {layer.in_dim} {layer.out_dim} {layer.activation}")
        lines.append("W")
        lines.extend(_fmt_row(row) for row in layer.W)
        lines.append("b")
        lines.append(_fmt_row(layer.b))
    return lines


def dumps_network(net: FnnSpec | RnnSpec) -> str:
    lines = ["gbf-network 1"]
    if isinstance(net, FnnSpec):
        lines.append("kind fnn")
        lines.extend(_dump_fnn(net))
    else:
        lines.append("kind rnn-discrete" if net.discrete else "kind rnn-continuous")
        lines.append(f"state_dim {net.state_dim}")
        lines.append("section state_map")
        lines.extend(_dump_fnn(net.state_map))
        lines.append("section output_map")
        lines.extend(_dump_fnn(net.output_map))
    return "\n".join(lines) + "\n"


def save_network(net: FnnSpec | RnnSpec, path) -> None:
    Path(path).write_text(dumps_network(net))


class _Lines:
    def __init__(self, text: str, source: str):
        self.source = source
        self.items = []
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                self.items.append((no, line.split()))
        self.pos = 0

    def fail(self, msg: str, no: int | None = None):
        if no is None:
            no = self.items[min(self.pos, len(self.items) - 1)][0] if self.items else 0
        raise NetworkFormatError(f"{self.source}:{no}: {msg}")

    def next(self) -> tuple[int, list[str]]:
        if self.pos >= len(self.items):
            self.fail("unexpected end of file")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def keyword(self, word: str, nargs: int) -> list[str]:
        no, toks = self.next()
        if toks[0] != word or len(toks) != nargs + 1:
            self.fail(f"expected '{word}' with {nargs} argument(s), found {' '.join(toks)!r}", no)
        return toks[1:]

    def numbers(self, count: int) -> np.ndarray:
        no, toks = self.next()
        if len(toks) != count:
            self.fail(f"expected {count} numbers, found {len(toks)}", no)
        try:
            return np.array([float(t) for t in toks])
        except ValueError:
            self.fail(f"malformed number in {' '.join(toks)!r}", no)

    def integer(self, tok: str) -> int:
        try:
            return int(tok)
        except ValueError:
            self.fail(f"expected an integer, found {tok!r}")


def _load_fnn(lines: _Lines) -> FnnSpec:
    (n,) = lines.keyword("layers", 1)
    layers = []
    for _ in range(lines.integer(n)):
        m_in, m_out, act = lines.keyword("layer", 3)
        m_in, m_out = lines.integer(m_in), lines.integer(m_out)
        lines.keyword("W", 0)
        W = np.stack([lines.numbers(m_out) for _ in range(m_in)]) if m_in else np.zeros((0, m_out))
        lines.keyword("b", 0)
        b = lines.numbers(m_out)
        try:
            layers.append(Layer(W, b, act))
        except ValueError as e:
            lines.fail(str(e))
    try:
        return FnnSpec(tuple(layers))
    except ValueError as e:
        lines.fail(str(e))


def loads_network(text: str, source: str = "<string>") -> FnnSpec | RnnSpec:
    lines = _Lines(text, source)
    header = lines.keyword("gbf-network", 1)
    if header != ["1"]:
        lines.fail(f"unsupported format version {header[0]}")
    (kind,) = lines.keyword("kind", 1)
    if kind == "fnn":
        net = _load_fnn(lines)
    elif kind in ("rnn-continuous", "rnn-discrete"):
        (b,) = lines.keyword("state_dim", 1)
        if lines.keyword("section", 1) != ["state_map"]:
            lines.fail("expected 'section state_map'")
        state_map = _load_fnn(lines)
        if lines.keyword("section", 1) != ["output_map"]:
            lines.fail("expected 'section output_map'")
        output_map = _load_fnn(lines)
        try:
            net = RnnSpec(lines.integer(b), state_map, output_map, discrete=kind == "rnn-discrete")
        except ValueError as e:
            lines.fail(str(e))
    else:
        lines.fail(f"unknown network kind {kind!r}")
    if lines.pos != len(lines.items):
        lines.fail("trailing content after network definition")
    return net


def load_network(path) -> FnnSpec | RnnSpec:
    path = Path(path)
    return loads_network(path.read_text(), str(path))
