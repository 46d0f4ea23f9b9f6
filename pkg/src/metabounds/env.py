"""Synthetic task environments: task sampling and a true-risk oracle.

Three families. The linear environment draws a task weight vector w* from
an isotropic Gaussian and labels uniform inputs by the sign test
y = 1(w*.x <= 0). The permuted-labels and shuffled-features environments
share a fixed small Gaussian-blobs dataset; tasks differ by a uniformly
drawn label permutation, or by a permutation of a fixed coordinate
subset. The oracle estimates the unobservable true risk of a stochastic
model on a task by fresh sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import LossSpec, StochasticModel, loss_values, scores_batch


@dataclass(frozen=True)
class LinearEnvSpec:
    """Binary linear-classification environment over [-1, 1]^d inputs."""

    d: int
    mu_tau: np.ndarray | None = None
    sigma_tau: float = 3.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.sigma_tau <= 0.0:
            raise ValueError("sigma_tau must be positive")
        mu = self.mu_tau
        mu = 10.0 * np.ones(self.d) if mu is None else np.asarray(mu, dtype=float)
        if mu.shape != (self.d,):
            raise ValueError(f"mu_tau must have shape ({self.d},)")
        object.__setattr__(self, "mu_tau", mu)


@dataclass(frozen=True)
class BlobsSpec:
    """A fixed multiclass dataset of Gaussian blobs, reproduced from a seed."""

    num_points: int = 256
    dim: int = 10
    num_classes: int = 4
    center_scale: float = 1.0
    noise: float = 1.0
    seed: int = 0

    def build(self) -> tuple[np.ndarray, np.ndarray]:
        """Materialize the dataset; identical for identical specs."""
        rng = np.random.default_rng(self.seed)
        centers = self.center_scale * rng.standard_normal(
            (self.num_classes, self.dim)
        )
        per = self.num_points // self.num_classes
        counts = [per + (1 if c < self.num_points % self.num_classes else 0)
                  for c in range(self.num_classes)]
        xs, ys = [], []
        for c, k in enumerate(counts):
            xs.append(centers[c] + self.noise * rng.standard_normal((k, self.dim)))
            ys.append(np.full(k, c, dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys)


@dataclass(frozen=True)
class PermutedEnvSpec:
    """Tasks built on a shared base dataset, differing by a permutation.

    mode "permute_labels" permutes the label space per task; mode
    "shuffle_features" permutes a fixed subset of num_shuffled coordinates
    per task. force_identity is a test hook that pins the permutation to
    the identity so a task reproduces the base dataset law exactly.
    """

    base: BlobsSpec = field(default_factory=BlobsSpec)
    mode: str = "permute_labels"
    num_shuffled: int = 5
    force_identity: bool = False

    def __post_init__(self):
        if self.mode not in ("permute_labels", "shuffle_features"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "shuffle_features" and not (
            0 < self.num_shuffled <= self.base.dim
        ):
            raise ValueError("num_shuffled must be in 1..dim")

    def shuffled_subset(self) -> np.ndarray:
        """The fixed coordinate subset that tasks permute (stable per base seed)."""
        rng = np.random.default_rng(self.base.seed + 1)
        return np.sort(rng.choice(self.base.dim, size=self.num_shuffled,
                                  replace=False))


@dataclass(frozen=True)
class Task:
    """A data distribution (spec plus per-task latent) and a drawn train set."""

    spec: object
    latent: np.ndarray
    train_x: np.ndarray
    train_y: np.ndarray

    @property
    def m(self) -> int:
        return self.train_x.shape[0]

    def draw(self, k: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Fresh i.i.d. samples from this task's distribution."""
        return _draw(self.spec, self.latent, k, rng)


def _draw(spec, latent, k, rng):
    if isinstance(spec, LinearEnvSpec):
        x = rng.uniform(-1.0, 1.0, size=(k, spec.d))
        y = (x @ latent <= 0.0).astype(np.int64)
        return x, y
    if isinstance(spec, PermutedEnvSpec):
        base_x, base_y = _base_cache(spec.base)
        idx = rng.integers(0, base_x.shape[0], size=k)
        if spec.mode == "permute_labels":
            perm = latent.astype(np.int64)
            return base_x[idx], perm[base_y[idx]]
        subset = spec.shuffled_subset()
        x = base_x[idx].copy()
        x[:, subset] = x[:, subset[latent.astype(np.int64)]]
        return x, base_y[idx]
    raise ValueError(f"invalid environment spec {type(spec).__name__}")


_BASE_CACHE: dict[BlobsSpec, tuple[np.ndarray, np.ndarray]] = {}


def _base_cache(base: BlobsSpec):
    if base not in _BASE_CACHE:
        _BASE_CACHE[base] = base.build()
    return _BASE_CACHE[base]


def sample_tasks(spec, n: int, m: int, rng: np.random.Generator) -> list[Task]:
    """Draw n independent tasks with m training samples each."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    tasks = []
    for _ in range(n):
        if isinstance(spec, LinearEnvSpec):
            latent = spec.mu_tau + spec.sigma_tau * rng.standard_normal(spec.d)
        elif isinstance(spec, PermutedEnvSpec):
            if spec.mode == "permute_labels":
                size = spec.base.num_classes
            else:
                size = spec.num_shuffled
            if spec.force_identity:
                latent = np.arange(size, dtype=np.float64)
            else:
                latent = rng.permutation(size).astype(np.float64)
        else:
            raise ValueError(f"invalid environment spec {type(spec).__name__}")
        x, y = _draw(spec, latent, m, rng)
        tasks.append(Task(spec, latent, x, y))
    return tasks


def true_risk_mc(task: Task, model: StochasticModel, loss: LossSpec,
                 n_eval: int, rng: np.random.Generator,
                 mc_samples: int = 1000) -> tuple[float, float]:
    """Monte-Carlo estimate of the true risk, with its standard error.

    Averages the loss over n_eval fresh samples and mc_samples posterior
    weight draws. The reported standard error combines both noise sources
    (sample spread at fixed weights, weight spread at fixed samples).
    """
    if n_eval < 1 or mc_samples < 1:
        raise ValueError("n_eval and mc_samples must be >= 1")
    x, y = task.draw(n_eval, rng)
    post = model.posterior
    draws = post.mean + post.std * rng.standard_normal((mc_samples, post.dim))
    per_sample = np.zeros(n_eval)
    per_draw = np.zeros(mc_samples)
    if model.arch.kind == "linear":
        scores = x @ draws.T  # (n_eval, mc)
        for k in range(mc_samples):
            vals = loss_values(loss, model.arch, scores[:, k], y)
            per_sample += vals
            per_draw[k] = vals.mean()
    else:
        for k in range(mc_samples):
            s = scores_batch(model.arch, draws[k], x)
            vals = loss_values(loss, model.arch, s, y)
            per_sample += vals
            per_draw[k] = vals.mean()
    per_sample /= mc_samples
    risk = float(per_sample.mean())
    var_x = float(per_sample.var(ddof=1)) / n_eval if n_eval > 1 else 0.0
    var_w = float(per_draw.var(ddof=1)) / mc_samples if mc_samples > 1 else 0.0
    return risk, float(np.sqrt(var_x + var_w))
