"""Multi-input Q-network with an attention block, replay memory, and DQN updates.

The network is cluster-size invariant: the three input vectors are fixed-length
aggregates, so the same weights apply to clusters of any DC count.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .workload import (BW_NORM_MBPS, MAX_E2E_TOLERANCE_MS, SFC_ORDER, VNF_ORDER,
                       Catalog, default_catalog)

SFC_FEATURES = 4 + len(VNF_ORDER)  # per-type summary + next-VNF histogram
INPUT_A_DIM = len(SFC_ORDER) * SFC_FEATURES            # 60
INPUT_B_DIM = 2 * len(VNF_ORDER) + 3                   # 15
INPUT_C_DIM = INPUT_A_DIM + 2                          # 62
INSTANCE_NORM = 10.0

_MAGIC = b"SFCQNET1"


class DrlError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    branch_width: int = 32
    hidden_widths: tuple[int, ...] = (128, 64)
    vnf_count: int = len(VNF_ORDER)
    learning_rate: float = 1e-3
    momentum: float = 0.9
    discount: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay: float = 0.995
    replay_capacity: int = 200_000
    batch_size: int = 64
    target_sync: int = 50
    use_target: bool = True

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if self.branch_width <= 0 or any(w <= 0 for w in self.hidden_widths):
            raise DrlError("layer widths must be positive")

    @property
    def action_count(self) -> int:
        return 2 * self.vnf_count + 1

    def arch_dict(self) -> dict:
        return {"branch_width": self.branch_width,
                "hidden_widths": list(self.hidden_widths),
                "vnf_count": self.vnf_count}

    def arch_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.arch_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class StateEncoding:
    input_a: np.ndarray  # current DC's incoming SFC summary
    input_b: np.ndarray  # current DC resources and installed VNFI counts
    input_c: np.ndarray  # cluster-wide SFC summary plus coordinator signals

    def as_tuple(self):
        return (self.input_a, self.input_b, self.input_c)


@dataclass
class PendingItem:
    sfc_name: str
    remaining_ms: float  # tolerance minus accrued delay and elapsed waiting
    bandwidth: float
    completion_frac: float
    next_vnf_name: str


@dataclass
class StateView:
    """Everything the encoder needs, pre-extracted by the owning agent."""
    items_local: list[PendingItem]
    items_cluster: list[PendingItem]
    installed: dict[str, int]
    idle: dict[str, int]
    free_fracs: tuple[float, float, float]
    transfer_pending: bool
    out_of_cluster_frac: float


def _clip01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def _sfc_summary(items: list[PendingItem], catalog: Catalog) -> np.ndarray:
    out = np.zeros(INPUT_A_DIM)
    vnf_index = {name: i for i, name in enumerate(VNF_ORDER)}
    for t, name in enumerate(SFC_ORDER):
        sfc = catalog.sfcs[name]
        group = [it for it in items if it.sfc_name == name]
        base = t * SFC_FEATURES
        if not group:
            continue
        out[base + 0] = _clip01(len(group) / sfc.bundle_range[1])
        out[base + 1] = _clip01(min(it.remaining_ms for it in group)
                                / MAX_E2E_TOLERANCE_MS)
        out[base + 2] = _clip01(sum(it.bandwidth for it in group)
                                / len(group) / BW_NORM_MBPS)
        out[base + 3] = _clip01(sum(it.completion_frac for it in group) / len(group))
        for it in group:
            out[base + 4 + vnf_index[it.next_vnf_name]] += 1.0 / len(group)
    return out


def encode_state(view: StateView, catalog: Catalog | None = None) -> StateEncoding:
    """Fixed-length normalized encoding, independent of cluster size."""
    catalog = catalog or default_catalog()
    input_a = _sfc_summary(view.items_local, catalog)
    input_b = np.zeros(INPUT_B_DIM)
    for i, name in enumerate(VNF_ORDER):
        input_b[2 * i] = _clip01(view.installed.get(name, 0) / INSTANCE_NORM)
        input_b[2 * i + 1] = _clip01(view.idle.get(name, 0) / INSTANCE_NORM)
    input_b[-3:] = [_clip01(f) for f in view.free_fracs]
    input_c = np.zeros(INPUT_C_DIM)
    input_c[:INPUT_A_DIM] = _sfc_summary(view.items_cluster, catalog)
    input_c[-2] = 1.0 if view.transfer_pending else 0.0
    input_c[-1] = _clip01(view.out_of_cluster_frac)
    return StateEncoding(input_a, input_b, input_c)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


class QNetwork:
    """Three affine input branches -> concatenation -> attention -> hidden
    layers -> Q-values. All math in float64 numpy; analytic gradients."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.update_count = 0
        rng = np.random.default_rng(seed)
        F = config.branch_width
        self.params: dict[str, np.ndarray] = {}

        def init(name, fan_in, fan_out):
            self.params["W" + name] = rng.normal(
                0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            self.params["b" + name] = np.zeros(fan_out)

        init("a", INPUT_A_DIM, F)
        init("b", INPUT_B_DIM, F)
        init("c", INPUT_C_DIM, F)
        init("att", 3 * F, 3 * F)
        prev = 3 * F
        for i, width in enumerate(config.hidden_widths):
            init(f"h{i}", prev, width)
            prev = width
        init("out", prev, config.action_count)
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}

    # ---- forward ----------------------------------------------------------

    def _forward_cached(self, xa, xb, xc):
        p = self.params
        F = self.config.branch_width
        cache = {"xa": xa, "xb": xb, "xc": xc}
        za = xa @ p["Wa"] + p["ba"]
        zb = xb @ p["Wb"] + p["bb"]
        zc = xc @ p["Wc"] + p["bc"]
        cache["za"], cache["zb"], cache["zc"] = za, zb, zc
        z = np.concatenate([_relu(za), _relu(zb), _relu(zc)], axis=1)
        cache["z"] = z
        u = z @ p["Watt"] + p["batt"]
        u_shift = u - u.max(axis=1, keepdims=True)
        exp = np.exp(u_shift)
        alpha = exp / exp.sum(axis=1, keepdims=True)
        cache["alpha"] = alpha
        h = 3 * F * z * alpha
        cache["o"] = h
        for i in range(len(self.config.hidden_widths)):
            zi = h @ p[f"Wh{i}"] + p[f"bh{i}"]
            cache[f"zh{i}"] = zi
            cache[f"in_h{i}"] = h
            h = _relu(zi)
        cache["h_last"] = h
        q = h @ p["Wout"] + p["bout"]
        return q, cache

    def forward(self, state) -> np.ndarray:
        """Q-values for one StateEncoding or a batch of stacked input arrays."""
        if isinstance(state, StateEncoding):
            xa = state.input_a[None, :]
            xb = state.input_b[None, :]
            xc = state.input_c[None, :]
            q, _ = self._forward_cached(xa, xb, xc)
            return q[0]
        xa, xb, xc = state
        self._check_dims(xa, xb, xc)
        q, _ = self._forward_cached(xa, xb, xc)
        return q

    def _check_dims(self, xa, xb, xc):
        if xa.shape[1] != INPUT_A_DIM or xb.shape[1] != INPUT_B_DIM \
                or xc.shape[1] != INPUT_C_DIM:
            raise DrlError("input dimension mismatch")

    # ---- backward ---------------------------------------------------------

    def loss_and_grads(self, xa, xb, xc, actions, targets):
        """Mean squared TD error on the selected actions, with gradients."""
        p = self.params
        F = self.config.branch_width
        B = xa.shape[0]
        q, cache = self._forward_cached(xa, xb, xc)
        idx = np.arange(B)
        diff = q[idx, actions] - targets
        loss = float(np.mean(diff ** 2))

        grads = {}
        dq = np.zeros_like(q)
        dq[idx, actions] = 2.0 * diff / B

        grads["Wout"] = cache["h_last"].T @ dq
        grads["bout"] = dq.sum(axis=0)
        dh = dq @ p["Wout"].T
        for i in reversed(range(len(self.config.hidden_widths))):
            dz = dh * (cache[f"zh{i}"] > 0)
            grads[f"Wh{i}"] = cache[f"in_h{i}"].T @ dz
            grads[f"bh{i}"] = dz.sum(axis=0)
            dh = dz @ p[f"Wh{i}"].T

        # attention block: o = 3F * z * softmax(z Watt + batt)
        z, alpha = cache["z"], cache["alpha"]
        g = dh
        dz = 3 * F * g * alpha
        dalpha = 3 * F * g * z
        du = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        grads["Watt"] = z.T @ du
        grads["batt"] = du.sum(axis=0)
        dz = dz + du @ p["Watt"].T

        for name, x_key, z_key, lo in (("a", "xa", "za", 0),
                                       ("b", "xb", "zb", F),
                                       ("c", "xc", "zc", 2 * F)):
            dbranch = dz[:, lo:lo + F] * (cache[z_key] > 0)
            grads["W" + name] = cache[x_key].T @ dbranch
            grads["b" + name] = dbranch.sum(axis=0)
        return loss, grads

    def apply_grads(self, grads: dict[str, np.ndarray]) -> None:
        lr, mom = self.config.learning_rate, self.config.momentum
        for k, g in grads.items():
            self.velocity[k] = mom * self.velocity[k] - lr * g
            self.params[k] += self.velocity[k]

    # ---- weight transfer --------------------------------------------------

    def copy_params_from(self, other: "QNetwork") -> None:
        for k in self.params:
            self.params[k] = other.params[k].copy()

    def clone(self) -> "QNetwork":
        net = QNetwork(self.config, seed=0)
        net.copy_params_from(self)
        return net


def act(net: QNetwork, state: StateEncoding, epsilon: float,
        rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties break to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise DrlError("epsilon must be in [0,1]")
    if rng.random() < epsilon:
        return int(rng.integers(net.config.action_count))
    return int(np.argmax(net.forward(state)))


class ReplayMemory:
    """Ring buffer of (state, action, next_state, reward, terminal) tuples."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.buffer: list[tuple] = []
        self.pos = 0

    def push(self, state: StateEncoding, action: int, next_state: StateEncoding,
             reward: float, terminal: bool) -> None:
        item = (state, action, next_state, reward, terminal)
        if len(self.buffer) < self.capacity:
            self.buffer.append(item)
        else:
            self.buffer[self.pos] = item
        self.pos = (self.pos + 1) % self.capacity

    def __len__(self) -> int:
        return len(self.buffer)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[tuple]:
        idx = rng.choice(len(self.buffer), size=batch_size, replace=False)
        return [self.buffer[int(i)] for i in idx]


def update(net: QNetwork, target_net: QNetwork | None, memory: ReplayMemory,
           config: ModelConfig, rng: np.random.Generator) -> float | None:
    """One DQN gradient step on a random replay batch; None if memory is short."""
    if len(memory) < config.batch_size:
        return None
    batch = memory.sample(config.batch_size, rng)
    xa = np.stack([b[0].input_a for b in batch])
    xb = np.stack([b[0].input_b for b in batch])
    xc = np.stack([b[0].input_c for b in batch])
    na = np.stack([b[2].input_a for b in batch])
    nb = np.stack([b[2].input_b for b in batch])
    nc = np.stack([b[2].input_c for b in batch])
    actions = np.array([b[1] for b in batch], dtype=int)
    rewards = np.array([b[3] for b in batch])
    terminal = np.array([b[4] for b in batch], dtype=bool)

    evaluator = target_net if (config.use_target and target_net is not None) else net
    next_q = evaluator.forward((na, nb, nc))
    targets = rewards + np.where(terminal, 0.0, config.discount * next_q.max(axis=1))

    loss, grads = net.loss_and_grads(xa, xb, xc, actions, targets)
    net.apply_grads(grads)
    net.update_count += 1
    if (config.use_target and target_net is not None
            and net.update_count % config.target_sync == 0):
        target_net.copy_params_from(net)
    return loss


# ---- persistence ----------------------------------------------------------

def save_weights(net: QNetwork, path: str) -> None:
    """Self-describing header (shapes + architecture hash) followed by
    little-endian float64 parameter data. Round-trips bit-exactly."""
    names = sorted(net.params)
    header = {
        "arch": net.config.arch_dict(),
        "arch_hash": net.config.arch_hash(),
        "params": [[name, list(net.params[name].shape)] for name in names],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(net.params[name], dtype="<f8").tobytes())


def load_weights(path: str, config: ModelConfig) -> QNetwork:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(_MAGIC) or len(data) < len(_MAGIC) + 4:
        raise DrlError("not a weight file")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    try:
        header = json.loads(data[off:off + hlen])
    except (ValueError, UnicodeDecodeError) as exc:
        raise DrlError("corrupt weight header") from exc
    off += hlen
    if header.get("arch_hash") != config.arch_hash():
        raise DrlError("weight file does not match the model configuration")
    net = QNetwork(config, seed=0)
    for name, shape in header["params"]:
        size = int(np.prod(shape)) * 8
        if off + size > len(data) or name not in net.params \
                or tuple(shape) != net.params[name].shape:
            raise DrlError("weight file shape mismatch")
        net.params[name] = np.frombuffer(
            data[off:off + size], dtype="<f8").reshape(shape).copy()
        off += size
    if off != len(data):
        raise DrlError("trailing bytes in weight file")
    return net
