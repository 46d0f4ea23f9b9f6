"""Stochastic models with Gaussian weight posteriors and bounded losses.

Two architectures: a linear score classifier (binary, label 1 when the
score is nonpositive) and a one-hidden-layer tanh network with softmax
outputs. Weights are drawn from a diagonal Gaussian posterior over the
flattened parameter vector. Losses are clipped and rescaled into [0, 1],
which is what the generalization bounds require of the loss they certify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diff
from .gauss import DiagonalGaussian


@dataclass(frozen=True)
class ModelArchitecture:
    """Shape description of the hypothesis family."""

    kind: str
    input_dim: int
    num_classes: int = 2
    hidden_dim: int | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "mlp1"):
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if self.input_dim < 1 or self.num_classes < 1:
            raise ValueError("dimensions must be positive")
        if self.kind == "linear":
            if self.hidden_dim is not None:
                raise ValueError("linear architecture takes no hidden_dim")
            if self.num_classes != 2:
                raise ValueError("linear architecture is binary (num_classes 2)")
        else:
            if self.hidden_dim is None or self.hidden_dim < 1:
                raise ValueError("mlp1 requires a positive hidden_dim")

    def layer_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Named parameter blocks, in flattening order."""
        if self.kind == "linear":
            return [("w", (self.input_dim,))]
        h, c = self.hidden_dim, self.num_classes
        return [
            ("w1", (self.input_dim, h)),
            ("b1", (h,)),
            ("w2", (h, c)),
            ("b2", (c,)),
        ]

    @property
    def param_count(self) -> int:
        return int(np.sum([np.prod(s) for _, s in self.layer_shapes()]))


def split_flat(arch: ModelArchitecture, flat: np.ndarray) -> dict[str, np.ndarray]:
    """Cut a flat parameter vector into the architecture's named blocks."""
    flat = np.asarray(flat)
    if flat.shape != (arch.param_count,):
        raise ValueError(
            f"expected flat vector of length {arch.param_count}, got {flat.shape}"
        )
    out = {}
    pos = 0
    for name, shape in arch.layer_shapes():
        size = int(np.prod(shape))
        out[name] = flat[pos : pos + size].reshape(shape)
        pos += size
    return out


def join_flat(arch: ModelArchitecture, blocks: dict[str, np.ndarray]) -> np.ndarray:
    """Inverse of split_flat."""
    return np.concatenate(
        [np.asarray(blocks[name]).ravel() for name, _ in arch.layer_shapes()]
    )


@dataclass(frozen=True)
class StochasticModel:
    """An architecture together with a posterior over its flat weights."""

    arch: ModelArchitecture
    posterior: DiagonalGaussian

    def __post_init__(self):
        if self.posterior.dim != self.arch.param_count:
            raise ValueError(
                f"posterior dimension {self.posterior.dim} does not match "
                f"parameter count {self.arch.param_count}"
            )


@dataclass(frozen=True)
class LossSpec:
    """A [0, 1]-valued loss: raw losses are clipped at clip_max and rescaled."""

    kind: str
    clip_max: float = 4.0

    def __post_init__(self):
        if self.kind not in ("zero_one", "logistic_clipped", "cross_entropy_clipped"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.clip_max <= 0.0:
            raise ValueError("clip_max must be positive")


def scores_batch(arch: ModelArchitecture, flat_w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Scores for a batch of inputs under one weight vector.

    Returns (B,) raw scores for linear, (B, C) logits for mlp1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise ValueError(f"inputs must be (B, {arch.input_dim}), got {x.shape}")
    blocks = split_flat(arch, flat_w)
    if arch.kind == "linear":
        return x @ blocks["w"]
    h = np.tanh(x @ blocks["w1"] + blocks["b1"])
    return h @ blocks["w2"] + blocks["b2"]


def predict(model_weights: np.ndarray, arch: ModelArchitecture, x: np.ndarray):
    """Score a single input.

    Linear: returns the scalar score w.x; the predicted label is 1 when the
    score is nonpositive. mlp1: returns the logit vector; predicted label
    is the argmax.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_dim,):
        raise ValueError(f"input must have dimension {arch.input_dim}, got {x.shape}")
    s = scores_batch(arch, model_weights, x[None, :])[0]
    return s


def predicted_labels(arch: ModelArchitecture, scores: np.ndarray) -> np.ndarray:
    """Decision rule on raw scores: sign test for linear, argmax for mlp1."""
    if arch.kind == "linear":
        return (scores <= 0.0).astype(np.int64)
    return np.argmax(scores, axis=-1)


def loss_values(loss: LossSpec, arch: ModelArchitecture,
                scores: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample losses in [0, 1] for raw scores against integer labels."""
    y = np.asarray(y)
    if loss.kind == "zero_one":
        return (predicted_labels(arch, scores) != y).astype(np.float64)
    if loss.kind == "logistic_clipped":
        if arch.kind != "linear":
            raise ValueError("logistic loss applies to the linear architecture")
        # class-0 logit is the score, class-1 logit is 0
        t = (2.0 * y - 1.0) * scores
        raw = np.logaddexp(0.0, t)
    else:
        if scores.ndim != 2:
            raise ValueError("cross-entropy expects logit rows")
        shifted = scores - scores.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=-1))
        raw = lse - shifted[np.arange(scores.shape[0]), y]
    return np.minimum(raw, loss.clip_max) / loss.clip_max


def mc_empirical_risk(model: StochasticModel, x: np.ndarray, y: np.ndarray,
                      loss: LossSpec, mc_samples: int,
                      rng: np.random.Generator) -> float:
    """Average loss over the dataset and mc_samples posterior weight draws."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("dataset must be nonempty")
    if mc_samples < 1:
        raise ValueError("mc_samples must be positive")
    post = model.posterior
    eps = rng.standard_normal((mc_samples, post.dim))
    draws = post.mean + post.std * eps
    if model.arch.kind == "linear":
        s = x @ draws.T  # (B, mc)
        per_draw = loss_values(loss, model.arch, s.T.ravel(), np.tile(y, mc_samples))
        return float(per_draw.mean())
    total = 0.0
    for k in range(mc_samples):
        s = scores_batch(model.arch, draws[k], x)
        total += loss_values(loss, model.arch, s, y).mean()
    return float(total / mc_samples)


def glorot_init(arch: ModelArchitecture, rng: np.random.Generator) -> DiagonalGaussian:
    """Posterior initialization: Glorot-uniform means, noisy small log-variances.

    Weight matrices use the uniform fan rule limit sqrt(6 / (fan_in +
    fan_out)); biases start at zero. Every log-variance is an independent
    N(-10, 0.1^2) draw, i.e. initial per-weight variance near 4.5e-5.
    """
    means = {}
    for name, shape in arch.layer_shapes():
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            means[name] = rng.uniform(-limit, limit, size=shape)
        elif arch.kind == "linear":
            limit = np.sqrt(6.0 / (shape[0] + 1))
            means[name] = rng.uniform(-limit, limit, size=shape)
        else:
            means[name] = np.zeros(shape)
    mean = join_flat(arch, means)
    log_var = rng.normal(-10.0, 0.1, size=arch.param_count)
    return DiagonalGaussian(mean, log_var)


# Tape-side builders. These mirror the numpy paths above but leave the
# posterior parameters as leaves so that bound objectives are differentiable
# through them (pathwise, with the noise draws held fixed per step).


def taped_weights(tape: diff.Tape, mean_nodes: dict, log_var_nodes: dict,
                  eps: dict[str, np.ndarray]) -> dict:
    """Reparametrized weight draw per block: mean + exp(log_var / 2) * eps."""
    return {
        name: mean_nodes[name]
        + diff.exp(log_var_nodes[name] * 0.5) * tape.tensor(eps[name])
        for name in mean_nodes
    }


def taped_scores(tape: diff.Tape, arch: ModelArchitecture, weights: dict,
                 x: np.ndarray):
    """Forward pass with weight-block nodes; x enters as a constant."""
    xs = tape.tensor(np.asarray(x, dtype=np.float64))
    if arch.kind == "linear":
        return diff.matmul(xs, weights["w"])
    h = diff.tanh(diff.matmul(xs, weights["w1"]) + weights["b1"])
    return diff.matmul(h, weights["w2"]) + weights["b2"]


def taped_loss(tape: diff.Tape, arch: ModelArchitecture, loss: LossSpec,
               scores, y: np.ndarray):
    """Mean clipped loss as a scalar node. zero_one has no usable gradient
    and is rejected here."""
    y = np.asarray(y)
    if loss.kind == "logistic_clipped":
        t = scores * tape.tensor(2.0 * y - 1.0)
        # softplus(t) = relu(t) + log(1 + exp(-|t|)), overflow-free
        abs_t = diff.relu(t) + diff.relu(-t)
        raw = diff.relu(t) + diff.log(diff.exp(-abs_t) + 1.0)
    elif loss.kind == "cross_entropy_clipped":
        raw = diff.softmax_cross_entropy(scores, y)
    else:
        raise ValueError(f"loss kind {loss.kind!r} is not differentiable")
    c = loss.clip_max
    clipped = (diff.relu((-raw) + c) * (-1.0) + c) * (1.0 / c)
    return diff.mean(clipped)


def taped_mc_risk(tape: diff.Tape, arch: ModelArchitecture,
                  mean_nodes: dict, log_var_nodes: dict,
                  x: np.ndarray, y: np.ndarray, loss: LossSpec,
                  eps_draws: list[dict[str, np.ndarray]]):
    """Empirical risk averaged over fixed reparametrization draws."""
    total = None
    for eps in eps_draws:
        w = taped_weights(tape, mean_nodes, log_var_nodes, eps)
        s = taped_scores(tape, arch, w, x)
        term = taped_loss(tape, arch, loss, s, y)
        total = term if total is None else total + term
    return total * (1.0 / len(eps_draws))
