"""Learned primal-dual power control via deep unfolding.

The inner concave subproblem of the exact primal-dual solver is replaced by
a small fully connected network; the unrolled iteration count N is fixed and
the network weights plus the per-iteration dual step sizes are trained end
to end, unsupervised, by minimizing the negative weighted sum rate of the
final iterate.  Differentiation runs on the tape from `wsropt.autodiff`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict

import numpy as np

from wsropt import autodiff as ad
from wsropt.channel import (
    NetworkInstance,
    ScenarioConfig,
    build_instance,
    sample_positions,
)
from wsropt.solvers import wsr
from wsropt.interference import affine_model

CHECKPOINT_FORMAT_VERSION = 1
POWER_FLOOR = 1e-9
BRACKET_FLOOR = 1e-12


@dataclass
class MlpParameters:
    """Fully connected stack, tanh hidden layers, sigmoid output."""

    layer_dims: list
    weights: list
    biases: list

    def __post_init__(self):
        dims = self.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("weights/biases must have one entry per layer pair")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[l], dims[l + 1]) or b.shape != (dims[l + 1],):
                raise ValueError(f"layer {l}: shape mismatch {W.shape}, {b.shape}")


@dataclass
class UnfoldingParameters:
    mlp: MlpParameters
    alphas: np.ndarray      # dual step size per unrolled iteration
    g_max: float            # gain-feature normalization constant

    @property
    def n_iterations(self) -> int:
        return len(self.alphas)


@dataclass(frozen=True)
class TrainConfig:
    n_train: int = 1000          # scenarios generated per epoch
    batch_size: int = 64
    epochs: int = 200
    lr_initial: float = 1e-3
    lr_decay: float = 0.99
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_mode: str = "uniform01"
    K: int = 10
    seed: int = 0
    n_unroll: int = 8

    def __post_init__(self):
        if min(self.n_train, self.batch_size, self.epochs, self.K,
               self.n_unroll) < 1:
            raise ValueError("counts must be >= 1")
        if self.lr_initial <= 0 or not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("need lr_initial > 0 and lr_decay in (0, 1]")


def default_layer_dims(K: int) -> list:
    """Shrinking hidden widths between input K(K+1) and output K; for K=10
    this is 110 -> 154 -> 132 -> 110 -> 88 -> 66 -> 44 -> 10."""
    n_in = K * (K + 1)
    hidden = [max(K, round(n_in * f)) for f in (1.4, 1.2, 1.0, 0.8, 0.6, 0.4)]
    return [n_in] + hidden + [K]


def init_mlp(layer_dims, rng: np.random.Generator) -> MlpParameters:
    """Symmetric uniform fan-in/fan-out scaling, zero biases."""
    weights, biases = [], []
    for n_in, n_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpParameters(layer_dims=list(layer_dims), weights=weights,
                         biases=biases)


def init_unfolding(K: int, n_unroll: int, g_max: float,
                   rng: np.random.Generator, layer_dims=None) -> UnfoldingParameters:
    dims = default_layer_dims(K) if layer_dims is None else list(layer_dims)
    return UnfoldingParameters(mlp=init_mlp(dims, rng),
                               alphas=np.full(n_unroll, 0.05),
                               g_max=float(g_max))


def gain_features(G: np.ndarray, g_max: float) -> np.ndarray:
    """Log compression of normalized gains into [0, ~1]; monotone per entry."""
    return np.log1p(G) / np.log1p(g_max)


def mlp_input_encode(instance: NetworkInstance, p, g_max: float) -> np.ndarray:
    """Concatenate the power vector with the row-major gain features; length
    K(K+1)."""
    p = np.asarray(p, dtype=float)
    return np.concatenate([p, gain_features(instance.gains, g_max).ravel()])


def mlp_forward(params: MlpParameters, x) -> np.ndarray:
    """Plain numpy forward pass for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.layer_dims[0],):
        raise ValueError(f"input length {x.shape} != ({params.layer_dims[0]},)")
    h = x
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ W + b)
    z = h @ params.weights[-1] + params.biases[-1]
    return 1.0 / (1.0 + np.exp(-z))


class _TapedParameters:
    """Leaf Vars for every trainable scalar of one forward/backward pass."""

    def __init__(self, tape: ad.Tape, uparams: UnfoldingParameters):
        self.weights = [tape.var(W) for W in uparams.mlp.weights]
        self.biases = [tape.var(b) for b in uparams.mlp.biases]
        self.alphas = [tape.var(a) for a in uparams.alphas]

    def all_vars(self):
        return self.weights + self.biases + self.alphas

    def gradients(self):
        def g(v):
            return np.zeros_like(v.value) if v.grad is None else v.grad
        return [g(v) for v in self.all_vars()]


def _mlp_forward_taped(tp: _TapedParameters, x):
    h = x
    n = len(tp.weights)
    for l in range(n - 1):
        h = ad.tanh(ad.matmul(h, tp.weights[l]) + tp.biases[l])
    return ad.sigmoid(ad.matmul(h, tp.weights[-1]) + tp.biases[-1])


def forward_batch(G: np.ndarray, w: np.ndarray, uparams: UnfoldingParameters,
                  tape: ad.Tape, tp: _TapedParameters = None):
    """Unrolled forward pass over a batch of instances.

    G has shape (B, K, K), w has shape (B, K); returns (p_N, loss, tp) where
    p_N and loss are tape Vars and loss is the mean negative WSR.
    """
    B, K, _ = G.shape
    if tp is None:
        tp = _TapedParameters(tape, uparams)
    G_off = G.copy()
    G_off[:, np.arange(K), np.arange(K)] = 0.0
    G_off_T = np.transpose(G_off, (0, 2, 1))
    G_diag = G[:, np.arange(K), np.arange(K)]
    gfeat = gain_features(G, uparams.g_max).reshape(B, K * K)

    p = tape.var(np.ones((B, K)))
    q = tape.var(np.ones((B, K)))
    lam = np.zeros((B, K))
    trace = []
    for k in range(uparams.n_iterations):
        I_p = ad.bmatvec(G_off, p) + 1.0
        den = ad.bmatvec(G_off_T, w / I_p)
        bracket = ad.maximum_const(den + lam, BRACKET_FLOOR)
        I_q = ad.bmatvec(G_off, q) + 1.0
        p_raw = w / bracket - I_q / G_diag
        p = ad.maximum_const(ad.minimum_const(p_raw, 1.0), POWER_FLOOR)
        q = _mlp_forward_taped(tp, ad.concat_const(p, gfeat))
        lam = lam + tp.alphas[k] * (p - q)
        trace.append(p.value.copy())

    I_final = ad.bmatvec(G_off, p) + 1.0
    gamma = G_diag * p / I_final
    rates = ad.log(gamma + 1.0)
    loss = -(w * rates).sum(axis=1).mean()
    return p, loss, trace, tp


def lpda_forward(instance: NetworkInstance, w, uparams: UnfoldingParameters,
                 tape: ad.Tape = None):
    """Run the learned iteration on one instance.

    Returns (p_N, trace) where trace lists (iteration, wsr) per unrolled
    step.  With a tape supplied, p_N is a (1, K) Var recorded on it.
    """
    w = np.asarray(w, dtype=float)
    K = instance.num_links
    model = affine_model()
    if uparams.n_iterations == 0:
        p0 = np.ones(K)
        return p0, [(0, wsr(instance, model, p0, w))]
    own_tape = tape is None
    t = ad.Tape() if own_tape else tape
    G = instance.gains[None, :, :]
    p_var, _, p_trace, _ = forward_batch(G, w[None, :], uparams, t)
    trace = [(k + 1, wsr(instance, model, pk[0], w))
             for k, pk in enumerate(p_trace)]
    if own_tape:
        return p_var.value[0].copy(), trace
    return p_var, trace


def loss(instance: NetworkInstance, w, p_N) -> float:
    """Training loss of one instance: the negative WSR in nats."""
    return -wsr(instance, affine_model(), np.asarray(p_N, dtype=float),
                np.asarray(w, dtype=float))


def backward(tape: ad.Tape, loss_node: ad.Var) -> None:
    """Reverse sweep filling adjoints of every reachable leaf."""
    tape.backward(loss_node)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def like(cls, values) -> "AdamState":
        return cls(m=[np.zeros_like(v) for v in values],
                   v=[np.zeros_like(v) for v in values])


def adam_step(values, grads, state: AdamState, lr: float,
              betas=(0.9, 0.999), eps: float = 1e-8):
    """Bias-corrected Adam update applied in place to `values`."""
    b1, b2 = betas
    state.t += 1
    t = state.t
    for i, (v, g) in enumerate(zip(values, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / (1.0 - b1 ** t)
        v_hat = state.v[i] / (1.0 - b2 ** t)
        v -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return values, state


def _scenario_config(K: int, seed: int) -> ScenarioConfig:
    return ScenarioConfig(num_links=K, rng_seed=seed)


def _generate_batch(config: TrainConfig, epoch: int, start: int, count: int):
    """Fresh instances and weights for one minibatch, deterministically keyed
    by (seed, epoch, index)."""
    scen = _scenario_config(config.K, config.seed)
    G = np.empty((count, config.K, config.K))
    w = np.empty((count, config.K))
    for i in range(count):
        rng = np.random.default_rng([config.seed, epoch, start + i])
        inst = build_instance(sample_positions(scen, rng), scen, rng,
                              weight_mode=config.weight_mode)
        G[i] = inst.gains
        w[i] = inst.weights
    return G, w


def probe_g_max(config: TrainConfig, n_probe: int = 200) -> float:
    """Dataset-level gain ceiling for the input encoding, taken from a probe
    sample drawn with a dedicated stream."""
    scen = _scenario_config(config.K, config.seed)
    g_max = 0.0
    for i in range(n_probe):
        rng = np.random.default_rng([config.seed, -1 & 0xFFFFFFFF, i])
        inst = build_instance(sample_positions(scen, rng), scen, rng,
                              weight_mode="ones")
        g_max = max(g_max, float(np.max(inst.gains)))
    return g_max


def _apply_grads(uparams: UnfoldingParameters, grads, state, lr, config):
    n_w = len(uparams.mlp.weights)
    n_b = len(uparams.mlp.biases)
    # alphas live in one array; unpack for the update, rebuild afterwards
    alpha_vals = [np.array([a]) for a in uparams.alphas]
    values = uparams.mlp.weights + uparams.mlp.biases + alpha_vals
    grads = grads[:n_w + n_b] + [np.atleast_1d(g) for g in grads[n_w + n_b:]]
    adam_step(values, grads, state, lr, config.adam_betas, config.adam_eps)
    uparams.alphas = np.array([a[0] for a in alpha_vals])


def train(config: TrainConfig, rng: np.random.Generator = None):
    """Unsupervised end-to-end training of the unfolded iteration.

    Returns (parameters, log) where log holds one dict per epoch with the
    mean training loss (nats) and the learning rate used.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    g_max = probe_g_max(config)
    uparams = init_unfolding(config.K, config.n_unroll, g_max, rng)
    state = AdamState.like(uparams.mlp.weights + uparams.mlp.biases
                           + [np.zeros(1) for _ in uparams.alphas])
    lr = config.lr_initial
    log = []
    for epoch in range(config.epochs):
        total_loss = 0.0
        n_seen = 0
        start = 0
        while start < config.n_train:
            count = min(config.batch_size, config.n_train - start)
            G, w = _generate_batch(config, epoch, start, count)
            tape = ad.Tape()
            _, loss_var, _, tp = forward_batch(G, w, uparams, tape)
            if not np.isfinite(loss_var.value):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch offset {start} "
                    f"(seed {config.seed})"
                )
            tape.backward(loss_var)
            _apply_grads(uparams, tp.gradients(), state, lr, config)
            total_loss += float(loss_var.value) * count
            n_seen += count
            start += count
        log.append({"epoch": epoch, "mean_train_loss_nats": total_loss / n_seen,
                    "lr": lr})
        lr *= config.lr_decay
    return uparams, log


def write_training_log(log, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_train_loss_nats", "lr"])
        for row in log:
            writer.writerow([row["epoch"], f"{row['mean_train_loss_nats']:.17g}",
                             f"{row['lr']:.17g}"])


def save_checkpoint(uparams: UnfoldingParameters, path,
                    train_config: TrainConfig = None, metadata: dict = None) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "K": uparams.mlp.layer_dims[-1],
        "layer_dims": list(uparams.mlp.layer_dims),
        "activations": {"hidden": "tanh", "output": "sigmoid"},
        "alphas": [float(a) for a in uparams.alphas],
        "G_max": uparams.g_max,
        "weights": [W.ravel().tolist() for W in uparams.mlp.weights],
        "biases": [b.tolist() for b in uparams.mlp.biases],
        "metadata": dict(metadata or {}),
    }
    if train_config is not None:
        doc["metadata"]["train_config"] = asdict(train_config)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> UnfoldingParameters:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"{path}: checkpoint format_version {doc.get('format_version')!r}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    dims = doc["layer_dims"]
    weights = [np.array(flat, dtype=float).reshape(dims[l], dims[l + 1])
               for l, flat in enumerate(doc["weights"])]
    biases = [np.array(b, dtype=float) for b in doc["biases"]]
    mlp = MlpParameters(layer_dims=dims, weights=weights, biases=biases)
    return UnfoldingParameters(mlp=mlp,
                               alphas=np.array(doc["alphas"], dtype=float),
                               g_max=float(doc["G_max"]))
