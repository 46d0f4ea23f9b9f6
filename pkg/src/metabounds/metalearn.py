"""Two-prior meta-learning driven by the differentiable certificates.

The learner keeps two Gaussian families over prior parameters.  ``rho0``
controls how the posterior for a fresh task is initialized; ``rho1`` controls
which prior the certificate measures divergence against.  Training minimizes
the two-level certificate itself, in two stages: first with the families tied
to a single parameter vector, then with the initialization family frozen
while the regularization family and the per-task posteriors keep moving.

Prior parameters live in a ``2d``-dimensional space for a ``d``-weight
network: the first half are weight means, the second half weight
log-variances.  On the tape that vector is handled per layer block, mirroring
how the model builders consume weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diff
from .bounds import adaptation_bound
from .env import Task
from .gauss import DiagonalGaussian, kl_diag_gaussian
from .model import (
    LossSpec,
    ModelArchitecture,
    StochasticModel,
    glorot_init,
    join_flat,
    mc_empirical_risk,
    split_flat,
    taped_mc_risk,
)
from .rng import stream

__all__ = [
    "MetaPosterior",
    "MetaPrior",
    "TrainConfig",
    "TrainingTrace",
    "TrainingDiverged",
    "meta_kl",
    "meta_objective",
    "adaptation_objective",
    "train_meta",
    "adapt",
    "independent_baseline",
    "save_meta_posterior",
    "load_meta_posterior",
]


@dataclass(frozen=True)
class MetaPosterior:
    """Product of two Gaussians over prior parameters, with fixed spread.

    Only the centers ``theta0`` and ``theta1`` are learned; both components
    keep every variance pinned at ``kappa_rho**2``, which the constructor
    enforces.
    """

    rho0: DiagonalGaussian
    rho1: DiagonalGaussian
    kappa_rho: float

    def __post_init__(self) -> None:
        if self.kappa_rho <= 0.0:
            raise ValueError("kappa_rho must be positive")
        if self.rho0.dim != self.rho1.dim:
            raise ValueError("rho0 and rho1 must have equal dimension")
        if self.rho0.dim % 2 != 0:
            raise ValueError("dimension must be even: weight means plus log-variances")
        target = 2.0 * math.log(self.kappa_rho)
        for name, comp in (("rho0", self.rho0), ("rho1", self.rho1)):
            if np.max(np.abs(comp.log_var - target)) > 1e-12:
                raise ValueError(f"{name} variances must be fixed at kappa_rho squared")

    @classmethod
    def from_means(cls, theta0: np.ndarray, theta1: np.ndarray, kappa_rho: float) -> "MetaPosterior":
        theta0 = np.asarray(theta0, dtype=np.float64)
        theta1 = np.asarray(theta1, dtype=np.float64)
        if kappa_rho <= 0.0:
            raise ValueError("kappa_rho must be positive")
        if theta0.shape != theta1.shape:
            raise ValueError("theta0 and theta1 must have equal dimension")
        log_var = np.full(theta0.size, 2.0 * math.log(kappa_rho))
        return cls(
            DiagonalGaussian(theta0, log_var),
            DiagonalGaussian(theta1, log_var.copy()),
            kappa_rho,
        )

    @property
    def theta0(self) -> np.ndarray:
        return self.rho0.mean

    @property
    def theta1(self) -> np.ndarray:
        return self.rho1.mean

    @property
    def weight_dim(self) -> int:
        return self.rho0.dim // 2


@dataclass(frozen=True)
class MetaPrior:
    """Zero-centered reference for both meta-posterior components."""

    kappa_pi: float

    def __post_init__(self) -> None:
        if self.kappa_pi <= 0.0:
            raise ValueError("kappa_pi must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the tasks themselves."""

    arch: ModelArchitecture
    loss: LossSpec
    epochs_stage1: int = 100
    epochs_stage2: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 128
    delta: float = 0.1
    kappa_pi: float = 100.0
    kappa_rho: float = 1e-3
    mc_train: int = 1
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.kappa_pi <= 0.0 or self.kappa_rho <= 0.0:
            raise ValueError("kappa_pi and kappa_rho must be positive")
        if self.mc_train < 1:
            raise ValueError("mc_train must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss.kind == "zero_one":
            raise ValueError("training requires a differentiable loss")


@dataclass
class TrainingTrace:
    """Per-epoch objective values; one entry per epoch across both stages."""

    objectives: list = field(default_factory=list)
    stage_boundary: int = 0


class TrainingDiverged(RuntimeError):
    """The optimized objective stopped being finite.

    Carries the trace accumulated up to the failing step.
    """

    def __init__(self, message: str, trace: TrainingTrace):
        super().__init__(message)
        self.trace = trace


def meta_kl(rho: MetaPosterior, pi: MetaPrior) -> float:
    """Divergence of the two-component meta-posterior from its reference.

    Closed form for equal-spread Gaussians against the zero-centered
    reference; equals the sum of the two component KLs.
    """
    d = rho.weight_dim
    squares = float(rho.theta0 @ rho.theta0 + rho.theta1 @ rho.theta1)
    return (
        (4.0 * d * rho.kappa_rho**2 + squares) / (2.0 * pi.kappa_pi**2)
        - 2.0 * d
        + 4.0 * d * math.log(pi.kappa_pi / rho.kappa_rho)
    )


# Parameter plumbing. A parameter set is a flat dict keyed
# "<group>.mean.<layer>" / "<group>.lv.<layer>" holding ndarrays; per step the
# arrays become tape leaves under the same keys so gradients map back 1:1.


def _halves(arch: ModelArchitecture, flat2d: np.ndarray) -> tuple[dict, dict]:
    d = arch.param_count
    return split_flat(arch, flat2d[:d]), split_flat(arch, flat2d[d:])


def _store(params: dict, group: str, mean_blocks: dict, lv_blocks: dict) -> None:
    for name, value in mean_blocks.items():
        params[f"{group}.mean.{name}"] = np.array(value, dtype=np.float64)
    for name, value in lv_blocks.items():
        params[f"{group}.lv.{name}"] = np.array(value, dtype=np.float64)


def _flatten(params: dict, group: str, arch: ModelArchitecture) -> np.ndarray:
    means = {name: params[f"{group}.mean.{name}"] for name, _ in arch.layer_shapes()}
    lvs = {name: params[f"{group}.lv.{name}"] for name, _ in arch.layer_shapes()}
    return np.concatenate([join_flat(arch, means), join_flat(arch, lvs)])


def _leaves(tape: diff.Tape, params: dict, group: str, arch: ModelArchitecture,
            leaf_map: dict | None = None) -> tuple[dict, dict]:
    mean_nodes, lv_nodes = {}, {}
    for name, _ in arch.layer_shapes():
        mk, lk = f"{group}.mean.{name}", f"{group}.lv.{name}"
        mean_nodes[name] = tape.tensor(params[mk])
        lv_nodes[name] = tape.tensor(params[lk])
        if leaf_map is not None:
            leaf_map[mk] = mean_nodes[name]
            leaf_map[lk] = lv_nodes[name]
    return mean_nodes, lv_nodes


def _constant_blocks(tape: diff.Tape, mean_blocks: dict, lv_blocks: dict) -> tuple[dict, dict]:
    return (
        {name: tape.tensor(value) for name, value in mean_blocks.items()},
        {name: tape.tensor(value) for name, value in lv_blocks.items()},
    )


def _taped_block_kl(q_mean, q_lv, p_mean, p_lv):
    """Diagonal-Gaussian KL with all four parameter blocks as tape nodes."""
    dlv = q_lv - p_lv
    dm = q_mean - p_mean
    inv_p = diff.exp(-p_lv)
    per_weight = diff.exp(dlv) + dm * dm * inv_p - dlv + (-1.0)
    return diff.sum(per_weight) * 0.5


def _taped_meta_kl(theta_parts, d: int, kappa_rho: float, kappa_pi: float):
    """Tape version of meta_kl; theta_parts covers both components' blocks."""
    squares = None
    for part in theta_parts:
        term = diff.sum(part * part)
        squares = term if squares is None else squares + term
    scale = 1.0 / (2.0 * kappa_pi**2)
    shift = (
        4.0 * d * kappa_rho**2 * scale
        - 2.0 * d
        + 4.0 * d * math.log(kappa_pi / kappa_rho)
    )
    return squares * scale + shift


def _eps_blocks(arch: ModelArchitecture, rng: np.random.Generator) -> dict:
    return {name: rng.standard_normal(shape) for name, shape in arch.layer_shapes()}


def _objective_node(tape, cfg: TrainConfig, n: int, m: int, theta0_nodes, theta1_nodes,
                    q_nodes, batches, rng: np.random.Generator):
    """Assemble the certificate on one tape.

    ``m`` is each task's full sample count; ``batches`` may hold minibatches,
    which only matters for the risk estimate, never for the slack constants.
    """
    arch = cfg.arch
    d = arch.param_count
    c_task = math.log(4.0 * math.sqrt(n) / cfg.delta)
    c_multi = math.log(8.0 * m * n / cfg.delta) + 1.0

    th0_mean, th0_lv = theta0_nodes
    th1_mean, th1_lv = theta1_nodes

    draw = rng.standard_normal(2 * d)
    eps_mean, eps_lv = _halves(arch, cfg.kappa_rho * draw)
    p_mean = {name: th1_mean[name] + tape.tensor(eps_mean[name]) for name in th1_mean}
    p_lv = {name: th1_lv[name] + tape.tensor(eps_lv[name]) for name in th1_lv}

    risk_sum = None
    kl_sum = None
    for (q_mean, q_lv), (x, y) in zip(q_nodes, batches):
        eps_draws = [_eps_blocks(arch, rng) for _ in range(cfg.mc_train)]
        risk = taped_mc_risk(tape, arch, q_mean, q_lv, x, y, cfg.loss, eps_draws)
        risk_sum = risk if risk_sum is None else risk_sum + risk
        for name in q_mean:
            kl = _taped_block_kl(q_mean[name], q_lv[name], p_mean[name], p_lv[name])
            kl_sum = kl if kl_sum is None else kl_sum + kl

    mkl = _taped_meta_kl(
        list(th0_mean.values()) + list(th0_lv.values())
        + list(th1_mean.values()) + list(th1_lv.values()),
        d, cfg.kappa_rho, cfg.kappa_pi,
    )
    empirical = risk_sum * (1.0 / n)
    task_term = diff.sqrt((mkl + c_task) * (1.0 / (2.0 * n)))
    multi_term = diff.sqrt((mkl + kl_sum + c_multi) * (1.0 / (2.0 * n * m)))
    return empirical + task_term + multi_term


def _shared_sample_count(tasks) -> int:
    counts = {task.m for task in tasks}
    if len(counts) != 1:
        raise ValueError("tasks must share a sample count")
    return counts.pop()


def meta_objective(rho: MetaPosterior, task_posteriors, tasks, cfg: TrainConfig,
                   rng: np.random.Generator | None = None,
                   leaves_out: dict | None = None):
    """Differentiable certificate at the given parameter point.

    Evaluates on each task's full training set with ``cfg.mc_train`` weight
    draws and a single sampled regularization prior.  Returns the scalar tape
    node; when ``leaves_out`` is a dict it receives the parameter leaves keyed
    by group, so callers can read gradients after a backward pass.
    """
    if len(task_posteriors) != len(tasks):
        raise ValueError("need exactly one task posterior per task")
    if not tasks:
        raise ValueError("at least one task is required")
    arch = cfg.arch
    if rho.weight_dim != arch.param_count:
        raise ValueError("meta-posterior dimension does not match the architecture")
    for model in task_posteriors:
        if model.arch != arch:
            raise ValueError("task posterior architecture differs from the config's")
    m = _shared_sample_count(tasks)
    if rng is None:
        rng = stream(cfg.seed, "objective")

    tape = diff.Tape()
    leaf_map: dict = {} if leaves_out is None else leaves_out
    th0 = _leaves_from_flat(tape, arch, rho.theta0, "theta0", leaf_map)
    th1 = _leaves_from_flat(tape, arch, rho.theta1, "theta1", leaf_map)
    qs = []
    for i, model in enumerate(task_posteriors):
        post = model.posterior
        qs.append(_leaves_from_blocks(
            tape, arch, split_flat(arch, post.mean), split_flat(arch, post.log_var),
            f"q{i}", leaf_map,
        ))
    batches = [(task.train_x, task.train_y) for task in tasks]
    return _objective_node(tape, cfg, len(tasks), m, th0, th1, qs, batches, rng)


def _leaves_from_blocks(tape, arch, mean_blocks, lv_blocks, group, leaf_map):
    mean_nodes, lv_nodes = {}, {}
    for name, _ in arch.layer_shapes():
        mean_nodes[name] = tape.tensor(mean_blocks[name])
        lv_nodes[name] = tape.tensor(lv_blocks[name])
        leaf_map[f"{group}.mean.{name}"] = mean_nodes[name]
        leaf_map[f"{group}.lv.{name}"] = lv_nodes[name]
    return mean_nodes, lv_nodes


def _leaves_from_flat(tape, arch, flat2d, group, leaf_map):
    mean_blocks, lv_blocks = _halves(arch, flat2d)
    return _leaves_from_blocks(tape, arch, mean_blocks, lv_blocks, group, leaf_map)


def adaptation_objective(model: StochasticModel, prior: DiagonalGaussian, task: Task,
                         cfg: TrainConfig, rng: np.random.Generator | None = None,
                         leaves_out: dict | None = None):
    """Differentiable single-task certificate against a fixed prior."""
    arch = cfg.arch
    if model.arch != arch:
        raise ValueError("model architecture differs from the config's")
    if prior.dim != arch.param_count:
        raise ValueError("prior dimension does not match the architecture")
    if rng is None:
        rng = stream(cfg.seed, "adapt-objective")
    tape = diff.Tape()
    leaf_map: dict = {} if leaves_out is None else leaves_out
    post = model.posterior
    q_mean, q_lv = _leaves_from_blocks(
        tape, arch, split_flat(arch, post.mean), split_flat(arch, post.log_var),
        "q", leaf_map,
    )
    p_mean, p_lv = _constant_blocks(
        tape, split_flat(arch, prior.mean), split_flat(arch, prior.log_var)
    )
    eps_draws = [_eps_blocks(arch, rng) for _ in range(cfg.mc_train)]
    risk = taped_mc_risk(tape, arch, q_mean, q_lv, task.train_x, task.train_y,
                         cfg.loss, eps_draws)
    kl_sum = None
    for name in q_mean:
        kl = _taped_block_kl(q_mean[name], q_lv[name], p_mean[name], p_lv[name])
        kl_sum = kl if kl_sum is None else kl_sum + kl
    c = math.log(8.0 * task.m / cfg.delta) + 1.0
    return risk + diff.sqrt((kl_sum + c) * (1.0 / (2.0 * task.m)))


class _Adam:
    """Moment-tracking update rule; state is keyed like the parameter dict."""

    def __init__(self, lr: float):
        self.lr = lr
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - 0.9**self.t
        bc2 = 1.0 - 0.999**self.t
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = 0.9 * self.m[key] + 0.1 * g
            self.v[key] = 0.999 * self.v[key] + 0.001 * (g * g)
            step = (self.m[key] / bc1) / (np.sqrt(self.v[key] / bc2) + 1e-8)
            params[key] -= self.lr * step


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for key, g in grads.items():
            params[key] -= self.lr * g


def _make_optimizer(cfg: TrainConfig):
    return _Adam(cfg.learning_rate) if cfg.optimizer == "adam" else _Sgd(cfg.learning_rate)


def _minibatch_plan(tasks, batch_size: int, rng: np.random.Generator):
    """Index chunks for one epoch: a list over steps of per-task index arrays.

    Every task's samples are visited once per epoch in a fresh shuffled
    order; a task with fewer chunks than the longest one cycles through its
    chunks so each global step still covers all tasks.
    """
    chunk_lists = []
    for task in tasks:
        perm = rng.permutation(task.m)
        count = math.ceil(task.m / batch_size)
        chunk_lists.append([perm[j * batch_size:(j + 1) * batch_size] for j in range(count)])
    steps = max(len(chunks) for chunks in chunk_lists)
    return [
        [chunks[s % len(chunks)] for chunks in chunk_lists]
        for s in range(steps)
    ]


def _stage_loop(cfg: TrainConfig, tasks, params: dict, tied: bool, theta0_blocks,
                epochs: int, opt, rng: np.random.Generator, trace: TrainingTrace,
                m: int, n: int) -> None:
    arch = cfg.arch
    for _ in range(epochs):
        plan = _minibatch_plan(tasks, cfg.batch_size, rng)
        per_step = []
        for step_indices in plan:
            tape = diff.Tape()
            leaf_map: dict = {}
            if tied:
                th = _leaves(tape, params, "theta", arch, leaf_map)
                th0 = th1 = th
            else:
                th0 = _constant_blocks(tape, *theta0_blocks)
                th1 = _leaves(tape, params, "theta1", arch, leaf_map)
            qs = [_leaves(tape, params, f"q{i}", arch, leaf_map) for i in range(n)]
            batches = [
                (task.train_x[idx], task.train_y[idx])
                for task, idx in zip(tasks, step_indices)
            ]
            value = _objective_node(tape, cfg, n, m, th0, th1, qs, batches, rng)
            current = float(value.value)
            if not math.isfinite(current):
                raise TrainingDiverged("objective became non-finite", trace)
            diff.backward(value)
            grads = {key: leaf.grad for key, leaf in leaf_map.items()}
            opt.step(params, grads)
            if not all(np.all(np.isfinite(v)) for v in params.values()):
                raise TrainingDiverged("parameters became non-finite", trace)
            per_step.append(current)
        trace.objectives.append(float(np.mean(per_step)))


def train_meta(env_tasks, cfg: TrainConfig) -> tuple[MetaPosterior, TrainingTrace]:
    """Fit the meta-posterior on the training tasks by the two-stage schedule.

    Stage one optimizes a single tied prior-parameter vector together with
    all task posteriors.  Stage two freezes that vector as the
    initialization component, resamples every task posterior from it, and
    optimizes the regularization component and the posteriors.  Optimizer
    state does not survive the boundary.  Returns the final meta-posterior
    and the per-epoch objective trace.
    """
    if not env_tasks:
        raise ValueError("at least one training task is required")
    arch = cfg.arch
    d = arch.param_count
    n = len(env_tasks)
    m = _shared_sample_count(env_tasks)
    trace = TrainingTrace()

    init = glorot_init(arch, stream(cfg.seed, "init", "prior"))
    theta = np.concatenate([init.mean, init.log_var])
    params: dict = {}
    _store(params, "theta", *_halves(arch, theta))
    for i in range(n):
        q = glorot_init(arch, stream(cfg.seed, "init", f"task{i}"))
        _store(params, f"q{i}", split_flat(arch, q.mean), split_flat(arch, q.log_var))

    _stage_loop(cfg, env_tasks, params, True, None, cfg.epochs_stage1,
                _make_optimizer(cfg), stream(cfg.seed, "stage1"), trace, m, n)
    trace.stage_boundary = len(trace.objectives)

    theta0 = _flatten(params, "theta", arch)
    theta1 = theta0
    if cfg.epochs_stage2 > 0:
        stage2: dict = {}
        _store(stage2, "theta1", *_halves(arch, theta0))
        for i in range(n):
            draw = stream(cfg.seed, "reinit", f"task{i}").standard_normal(2 * d)
            fresh = theta0 + cfg.kappa_rho * draw
            _store(stage2, f"q{i}", *_halves(arch, fresh))
        _stage_loop(cfg, env_tasks, stage2, False, _halves(arch, theta0),
                    cfg.epochs_stage2, _make_optimizer(cfg),
                    stream(cfg.seed, "stage2"), trace, m, n)
        theta1 = _flatten(stage2, "theta1", arch)

    return MetaPosterior.from_means(theta0, theta1, cfg.kappa_rho), trace


def adapt(rho: MetaPosterior, new_task: Task, cfg: TrainConfig,
          adapt_epochs: int = 100, rng: np.random.Generator | None = None,
          mc_eval: int = 1000) -> tuple[StochasticModel, float]:
    """Train a posterior for a fresh task and certify it.

    Samples an initialization from ``rho0`` and a prior from ``rho1``, then
    minimizes the single-task certificate for ``adapt_epochs`` epochs.
    Returns the model and its certificate value, with the empirical risk in
    the certificate estimated from ``mc_eval`` weight draws.
    """
    arch = cfg.arch
    d = arch.param_count
    if rho.weight_dim != d:
        raise ValueError("meta-posterior dimension does not match the architecture")
    if rng is None:
        rng = stream(cfg.seed, "adapt")
    init = rho.theta0 + rho.kappa_rho * rng.standard_normal(2 * d)
    drawn = rho.theta1 + rho.kappa_rho * rng.standard_normal(2 * d)
    prior = DiagonalGaussian(drawn[:d].copy(), drawn[d:].copy())

    params: dict = {}
    _store(params, "q", *_halves(arch, init))
    prior_blocks = _halves(arch, np.concatenate([prior.mean, prior.log_var]))
    m = new_task.m
    c = math.log(8.0 * m / cfg.delta) + 1.0
    opt = _make_optimizer(cfg)

    for _ in range(adapt_epochs):
        perm = rng.permutation(m)
        for j in range(math.ceil(m / cfg.batch_size)):
            idx = perm[j * cfg.batch_size:(j + 1) * cfg.batch_size]
            tape = diff.Tape()
            leaf_map: dict = {}
            q_mean, q_lv = _leaves(tape, params, "q", arch, leaf_map)
            p_mean, p_lv = _constant_blocks(tape, *prior_blocks)
            eps_draws = [_eps_blocks(arch, rng) for _ in range(cfg.mc_train)]
            risk = taped_mc_risk(tape, arch, q_mean, q_lv,
                                 new_task.train_x[idx], new_task.train_y[idx],
                                 cfg.loss, eps_draws)
            kl_sum = None
            for name in q_mean:
                kl = _taped_block_kl(q_mean[name], q_lv[name], p_mean[name], p_lv[name])
                kl_sum = kl if kl_sum is None else kl_sum + kl
            value = risk + diff.sqrt((kl_sum + c) * (1.0 / (2.0 * m)))
            if not math.isfinite(float(value.value)):
                raise TrainingDiverged("adaptation objective became non-finite",
                                       TrainingTrace())
            diff.backward(value)
            opt.step(params, {key: leaf.grad for key, leaf in leaf_map.items()})
            if not all(np.all(np.isfinite(v)) for v in params.values()):
                raise TrainingDiverged("parameters became non-finite", TrainingTrace())

    flat = _flatten(params, "q", arch)
    posterior = DiagonalGaussian(flat[:d], flat[d:])
    model = StochasticModel(arch, posterior)
    empirical = mc_empirical_risk(model, new_task.train_x, new_task.train_y,
                                  cfg.loss, mc_eval, rng)
    bound = adaptation_bound(empirical, kl_diag_gaussian(posterior, prior), m, cfg.delta)
    return model, bound


def independent_baseline(new_task: Task, cfg: TrainConfig,
                         adapt_epochs: int = 100,
                         rng: np.random.Generator | None = None) -> StochasticModel:
    """Single-task training from scratch against the fixed zero-centered prior.

    Runs the same adaptation procedure with both meta-posterior components
    collapsed onto the zero parameter vector, i.e. a unit-variance zero-mean
    prior over weights and an initialization sampled from the same point.
    """
    d = cfg.arch.param_count
    base = MetaPosterior.from_means(np.zeros(2 * d), np.zeros(2 * d), cfg.kappa_rho)
    if rng is None:
        rng = stream(cfg.seed, "independent")
    model, _ = adapt(base, new_task, cfg, adapt_epochs=adapt_epochs, rng=rng)
    return model


_ARTIFACT_TAG = "metaposterior"
_ARTIFACT_VERSION = 1


def save_meta_posterior(rho: MetaPosterior, path) -> None:
    """Write the meta-posterior as plain text; round-trips bit-exactly."""
    lines = [
        f"{_ARTIFACT_TAG} {_ARTIFACT_VERSION} {rho.rho0.dim} {rho.kappa_rho:.17g}"
    ]
    for vec in (rho.theta0, rho.theta1):
        lines.append(" ".join(format(v, ".17g") for v in vec))
    Path(path).write_text("\n".join(lines) + "\n")


def load_meta_posterior(path) -> MetaPosterior:
    lines = Path(path).read_text().strip().splitlines()
    if len(lines) != 3:
        raise ValueError("artifact must hold a header and two parameter rows")
    head = lines[0].split()
    if len(head) != 4 or head[0] != _ARTIFACT_TAG:
        raise ValueError("unrecognized artifact header")
    if int(head[1]) != _ARTIFACT_VERSION:
        raise ValueError(f"unsupported artifact version {head[1]}")
    dim = int(head[2])
    kappa_rho = float(head[3])
    theta0 = np.array([float(tok) for tok in lines[1].split()])
    theta1 = np.array([float(tok) for tok in lines[2].split()])
    if theta0.size != dim or theta1.size != dim:
        raise ValueError("parameter rows do not match the declared dimension")
    return MetaPosterior.from_means(theta0, theta1, kappa_rho)
