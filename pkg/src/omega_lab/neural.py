"""Single-layer Elman recognizer trained with BPTT and AMSGrad (numpy, float64).

Recurrence: ``h_t = tanh(W_in x_t + W_rec h_{t-1} + b_h)`` with one-hot ``x_t``
and ``h_0 = 0``; two logits ``W_out h_L + b_out`` are read at each sequence's
own last symbol.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

PARAM_ORDER = ("W_in", "W_rec", "b_h", "W_out", "b_out")
WEIGHTS = ("W_in", "W_rec", "W_out")
CHECKPOINT_FORMAT = "omega-lab-checkpoint/1"


@dataclass
class RnnParams:
    W_in: np.ndarray
    W_rec: np.ndarray
    b_h: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W_rec.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.W_in.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, k) for k in PARAM_ORDER]

    def copy(self) -> "RnnParams":
        return RnnParams(*(a.copy() for a in self.arrays()))

    @classmethod
    def zeros(cls, alphabet_size: int, hidden: int) -> "RnnParams":
        return cls(
            np.zeros((hidden, alphabet_size)),
            np.zeros((hidden, hidden)),
            np.zeros(hidden),
            np.zeros((2, hidden)),
            np.zeros(2),
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


@dataclass
class TrainConfig:
    hidden: int = 256
    batch: int = 256
    steps: int = 100_000
    lr_peak: float = 1e-3
    lr_start: float = 1e-8
    warmup_fraction: float = 0.2
    l2_weight: float = 5e-4
    train_min_len: int = 2
    train_max_len: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for f in ("hidden", "batch", "steps"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be positive")
        if not 0.0 < self.warmup_fraction <= 1.0:
            raise ValueError("warmup_fraction must lie in (0, 1]")
        if self.lr_peak <= 0 or self.lr_start <= 0 or self.l2_weight < 0:
            raise ValueError("learning rates must be positive and l2_weight non-negative")
        if not 2 <= self.train_min_len <= self.train_max_len:
            raise ValueError("need 2 <= train_min_len <= train_max_len")


@dataclass
class AmsgradState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    v_hat: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: RnnParams, beta1=0.9, beta2=0.999, epsilon=1e-8) -> "AmsgradState":
        zeros = lambda: [np.zeros_like(a) for a in params.arrays()]  # noqa: E731
        return cls(zeros(), zeros(), zeros(), 0, beta1, beta2, epsilon)


@dataclass
class Batch:
    sequences: np.ndarray  # (batch, max_len) int, padded
    lengths: np.ndarray  # (batch,)
    labels: np.ndarray  # (batch,) 0/1

    @classmethod
    def from_sequences(cls, seqs, labels=None, pad: int = 0) -> "Batch":
        lengths = np.array([len(s) for s in seqs], dtype=np.int64)
        if (lengths < 1).any():
            raise ValueError("empty sequence in batch")
        out = np.full((len(seqs), int(lengths.max())), pad, dtype=np.int64)
        for i, s in enumerate(seqs):
            out[i, : len(s)] = s
        lab = np.zeros(len(seqs), dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
        return cls(out, lengths, lab)


@dataclass
class ForwardTrace:
    sequences: np.ndarray
    lengths: np.ndarray
    hs: np.ndarray  # (T + 1, batch, hidden); hs[0] = 0
    h_last: np.ndarray


def init_params(alphabet_size: int, hidden: int, seed: int) -> RnnParams:
    """Glorot-uniform weights, zero biases."""
    if alphabet_size < 1 or hidden < 1:
        raise ValueError("sizes must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 7])))

    def glorot(rows, cols):
        bound = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-bound, bound, size=(rows, cols))

    return RnnParams(
        glorot(hidden, alphabet_size),
        glorot(hidden, hidden),
        np.zeros(hidden),
        glorot(2, hidden),
        np.zeros(2),
    )


def one_hot(indices: np.ndarray, size: int) -> np.ndarray:
    return np.eye(size)[indices]


def forward(params: RnnParams, batch: Batch) -> tuple[np.ndarray, ForwardTrace]:
    seqs = batch.sequences
    if seqs.size and seqs.max() >= params.alphabet_size:
        raise ValueError("symbol index exceeds alphabet size")
    B, T = seqs.shape
    H = params.hidden
    # W_in @ one_hot(x) is column selection; the transposed copy makes it a row gather.
    emb = params.W_in.T
    w_rec_t = params.W_rec.T
    hs = np.zeros((T + 1, B, H))
    for t in range(T):
        hs[t + 1] = np.tanh(emb[seqs[:, t]] + hs[t] @ w_rec_t + params.b_h)
    h_last = hs[batch.lengths, np.arange(B)]
    logits = h_last @ params.W_out.T + params.b_out
    return logits, ForwardTrace(seqs, batch.lengths, hs, h_last)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient with respect to the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    B = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    value = -log_p[np.arange(B), labels].mean()
    d = np.exp(log_p)
    d[np.arange(B), labels] -= 1.0
    return float(value), d / B


def l2_penalty(params: RnnParams, l2_weight: float) -> float:
    return l2_weight * sum(float(np.sum(getattr(params, k) ** 2)) for k in WEIGHTS)


def objective(params: RnnParams, batch: Batch, l2_weight: float) -> float:
    logits, _ = forward(params, batch)
    return loss(logits, batch.labels)[0] + l2_penalty(params, l2_weight)


def backward(params: RnnParams, trace: ForwardTrace, d_logits: np.ndarray, l2_weight: float = 0.0) -> RnnParams:
    """Gradients of ``CE + l2_weight * sum(W**2)`` (biases unpenalized) by BPTT."""
    seqs, lengths, hs = trace.sequences, trace.lengths, trace.hs
    B, T = seqs.shape
    g = RnnParams.zeros(params.alphabet_size, params.hidden)
    g.W_out = d_logits.T @ trace.h_last
    g.b_out = d_logits.sum(axis=0)
    d_h_last = d_logits @ params.W_out
    g_emb = np.zeros((params.alphabet_size, params.hidden))
    dh = np.zeros((B, params.hidden))
    for t in range(T, 0, -1):
        ending = lengths == t
        if ending.any():
            dh[ending] += d_h_last[ending]
        d_pre = dh * (1.0 - hs[t] ** 2)
        np.add.at(g_emb, seqs[:, t - 1], d_pre)
        g.W_rec += d_pre.T @ hs[t - 1]
        g.b_h += d_pre.sum(axis=0)
        dh = d_pre @ params.W_rec
    g.W_in = g_emb.T.copy()
    if l2_weight:
        for k in WEIGHTS:
            setattr(g, k, getattr(g, k) + 2.0 * l2_weight * getattr(params, k))
    return g


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup from ``lr_start`` to ``lr_peak`` at ``floor(warmup_fraction * steps)``, then flat."""
    if not 0 <= step <= cfg.steps:
        raise ValueError(f"step {step} outside 0..{cfg.steps}")
    warm = int(np.floor(cfg.warmup_fraction * cfg.steps))
    if warm == 0 or step >= warm:
        return cfg.lr_peak
    return cfg.lr_start + (cfg.lr_peak - cfg.lr_start) * (step / warm)


def amsgrad_step(params: RnnParams, grads: RnnParams, state: AmsgradState, lr: float) -> None:
    """In-place AMSGrad update without bias correction."""
    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    for i, (p, g) in enumerate(zip(params.arrays(), grads.arrays())):
        m = state.m[i]
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        np.maximum(state.v_hat[i], v, out=state.v_hat[i])
        p -= lr * m / (np.sqrt(state.v_hat[i]) + eps)
    state.t += 1


def param_l2_norm(params: RnnParams) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in params.arrays())))


def predict(params: RnnParams, batch: Batch) -> np.ndarray:
    """Argmax of the two logits; exact ties go to label 0."""
    logits, _ = forward(params, batch)
    return (logits[:, 1] > logits[:, 0]).astype(np.int64)


# ----------------------------------------------------------------------------
# checkpoints


def params_to_json(params: RnnParams) -> dict:
    return {
        "alphabet_size": params.alphabet_size,
        "hidden": params.hidden,
        "order": list(PARAM_ORDER),
        "arrays": {k: getattr(params, k).ravel().tolist() for k in PARAM_ORDER},
    }


def params_from_json(d: dict) -> RnnParams:
    A, H = d["alphabet_size"], d["hidden"]
    shapes = {"W_in": (H, A), "W_rec": (H, H), "b_h": (H,), "W_out": (2, H), "b_out": (2,)}
    return RnnParams(*(np.array(d["arrays"][k], dtype=np.float64).reshape(shapes[k]) for k in PARAM_ORDER))


def checkpoint_to_json(params: RnnParams, state: AmsgradState, cfg: TrainConfig, step: int, rng_state: dict) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(cfg),
        "step": step,
        "params": params_to_json(params),
        "optimizer": {
            "t": state.t,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "epsilon": state.epsilon,
            "m": [a.ravel().tolist() for a in state.m],
            "v": [a.ravel().tolist() for a in state.v],
            "v_hat": [a.ravel().tolist() for a in state.v_hat],
        },
        "rng": rng_state,
    }


def checkpoint_from_json(d: dict) -> tuple[RnnParams, AmsgradState, TrainConfig, int, dict]:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {d.get('format')!r}")
    params = params_from_json(d["params"])
    opt = d["optimizer"]
    shapes = [a.shape for a in params.arrays()]
    unflat = lambda xs: [np.array(x, dtype=np.float64).reshape(s) for x, s in zip(xs, shapes)]  # noqa: E731
    state = AmsgradState(unflat(opt["m"]), unflat(opt["v"]), unflat(opt["v_hat"]), opt["t"], opt["beta1"], opt["beta2"], opt["epsilon"])
    known = {f.name for f in fields(TrainConfig)}
    cfg = TrainConfig(**{k: v for k, v in d["config"].items() if k in known})
    return params, state, cfg, d["step"], d["rng"]
