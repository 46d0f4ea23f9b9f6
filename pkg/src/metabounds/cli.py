"""Batch command-line front end.

Subcommands: ``sweep`` evaluates bound curves over task counts, ``train``
fits and saves a meta-posterior, ``adapt`` prices fresh tasks with a saved
posterior, ``audit`` runs the bound-validity harness, and ``bound`` is a
calculator over explicitly supplied term values.

Configuration is a plain ``key = value`` file with one section per
subcommand.  Every key is schema-checked and unknown keys are rejected, so a
typo fails loudly instead of silently using a default.  All outputs are
written atomically (temp file + rename) and carry '#'-prefixed metadata
lines with a format version, the config hash, and the seed.  Data rows are
byte-deterministic given config and seed; only the trailing timing metadata
varies between runs.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audit import audit_bound_validity
from .bounds import MetaBoundInput, theorem1_bound, theorem2_bound
from .env import BlobsSpec, LinearEnvSpec, PermutedEnvSpec, sample_tasks, true_risk_mc
from .metalearn import (
    MetaPosterior,
    TrainConfig,
    TrainingDiverged,
    adapt,
    load_meta_posterior,
    save_meta_posterior,
    train_meta,
)
from .model import LossSpec, ModelArchitecture, mc_empirical_risk
from .pipelines import PipelinePoint, prior_mean_point, two_prior_point
from .rng import spawn_seed, stream

CSV_VERSION = "1"

RESULT_COLUMNS = [
    "n", "m", "d", "seed",
    "empirical_multitask_risk", "bound_thm1", "bound_thm2",
    "meta_test_loss", "meta_train_loss",
    "task_level_term", "multitask_term", "kl_rho_pi", "mean_task_kl",
]

AUDIT_COLUMNS = [
    "trial_index", "seed", "bound", "true_risk_est", "true_risk_se",
    "margin", "violated",
]

ADAPT_COLUMNS = ["task_index", "seed", "train_risk", "bound", "test_error"]

TRACE_COLUMNS = ["epoch", "stage", "objective"]


class ConfigError(Exception):
    """Raised for any malformed, unknown, or missing configuration value."""


@dataclass(frozen=True)
class ResultRow:
    """One sweep row: the pipeline point plus how long it took to compute."""

    point: PipelinePoint
    wall_time: float


# ---------------------------------------------------------------------------
# Config schema


def _to_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"expected an integer, got {raw!r}") from exc


def _to_float(raw: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {raw!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {raw!r}")
    return value


def _to_int_list(raw: str) -> tuple[int, ...]:
    parts = [p for chunk in raw.split(",") for p in chunk.split()]
    if not parts:
        raise ConfigError("expected a nonempty list of integers")
    return tuple(_to_int(p) for p in parts)


def _to_str(raw: str) -> str:
    return raw.strip()


def _to_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _choice(*options: str):
    def convert(raw: str) -> str:
        value = raw.strip()
        if value not in options:
            raise ConfigError(f"expected one of {options}, got {value!r}")
        return value

    return convert


def _pairs(raw: str) -> tuple[tuple[float, float], ...]:
    """Parse 'kl_hyper:sum_kl;kl_hyper:sum_kl' into complexity pairs."""
    out = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        halves = chunk.split(":")
        if len(halves) != 2:
            raise ConfigError(f"expected kl_hyper:sum_task_kl, got {chunk!r}")
        out.append((_to_float(halves[0]), _to_float(halves[1])))
    if not out:
        raise ConfigError("expected at least one complexity pair")
    return tuple(out)


REQUIRED = object()

# Keys shared by every command that builds a TrainConfig.
_TRAIN_KEYS = {
    "arch": (_choice("linear", "mlp1"), "linear"),
    "input_dim": (_to_int, 2),
    "hidden_dim": (_to_int, 16),
    "num_classes": (_to_int, 2),
    "loss": (_choice("logistic_clipped", "cross_entropy_clipped"), "logistic_clipped"),
    "clip_max": (_to_float, 4.0),
    "epochs_stage1": (_to_int, 100),
    "epochs_stage2": (_to_int, 100),
    "learning_rate": (_to_float, 1e-3),
    "batch_size": (_to_int, 128),
    "delta": (_to_float, 0.1),
    "kappa_pi": (_to_float, 100.0),
    "kappa_rho": (_to_float, 1e-3),
    "mc_train": (_to_int, 1),
    "optimizer": (_choice("adam", "sgd"), "adam"),
}

# Keys selecting and shaping the task environment.
_ENV_KEYS = {
    "env": (_choice("linear", "blobs", "permuted"), "linear"),
    "d": (_to_int, 2),
    "blob_points": (_to_int, 256),
    "blob_dim": (_to_int, 10),
    "blob_classes": (_to_int, 4),
    "blob_center_scale": (_to_float, 1.0),
    "blob_noise": (_to_float, 1.0),
    "blob_seed": (_to_int, 0),
    "permute_mode": (_choice("permute_labels", "shuffle_features"), "permute_labels"),
    "num_shuffled": (_to_int, 5),
}

SCHEMAS: dict[str, dict] = {
    "sweep": {
        **_TRAIN_KEYS,
        "pipeline": (_choice("prior_mean", "two_prior"), "prior_mean"),
        "n_list": (_to_int_list, (2, 5, 10, 20, 50)),
        "m_list": (_to_int_list, (5,)),
        "d_list": (_to_int_list, (2,)),
        "seeds": (_to_int, 5),
        "eval_tasks": (_to_int, 20),
        "eval_points": (_to_int, 400),
        "mc_eval": (_to_int, 200),
        "seed": (_to_int, 0),
        "jobs": (_to_int, 1),
        "out": (_to_str, "sweep.csv"),
    },
    "train": {
        **_TRAIN_KEYS,
        **_ENV_KEYS,
        "n": (_to_int, REQUIRED),
        "m": (_to_int, REQUIRED),
        "seed": (_to_int, 0),
        "out": (_to_str, "posterior.txt"),
    },
    "adapt": {
        **_TRAIN_KEYS,
        **_ENV_KEYS,
        "posterior": (_to_str, REQUIRED),
        "num_tasks": (_to_int, 20),
        "m": (_to_int, REQUIRED),
        "adapt_epochs": (_to_int, 100),
        "eval_points": (_to_int, 200),
        "mc_eval": (_to_int, 200),
        "seed": (_to_int, 0),
        "out": (_to_str, "adapt.csv"),
    },
    "audit": {
        **_TRAIN_KEYS,
        **_ENV_KEYS,
        "n": (_to_int, 5),
        "m": (_to_int, 5),
        "trials": (_to_int, 200),
        "eval_tasks": (_to_int, 20),
        "eval_points": (_to_int, 200),
        "mc_eval": (_to_int, 200),
        "seed": (_to_int, 0),
        "jobs": (_to_int, 1),
        "out": (_to_str, "audit.csv"),
    },
    "bound": {
        "empirical_risk": (_to_float, 0.0),
        "kl_rho_pi": (_to_float, 0.0),
        "kl_hyper": (_to_float, 0.0),
        "sum_task_kl": (_to_float, 0.0),
        "pairs": (_pairs, None),
        "n": (_to_int, REQUIRED),
        "m": (_to_int, REQUIRED),
        "delta": (_to_float, 0.1),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings for one subcommand, plus their provenance hash."""

    command: str
    values: dict

    @property
    def config_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.command.encode())
        for key in sorted(self.values):
            h.update(f"|{key}={self.values[key]!r}".encode())
        return h.hexdigest()[:16]


def load_config(path: str | Path, command: str,
                overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate the config file for one subcommand.

    overrides (from command-line flags) replace file values after parsing
    but before required-key checking, so --seed works with or without a
    seed line in the file.
    """
    schema = SCHEMAS[command]
    parser = configparser.ConfigParser(interpolation=None)
    try:
        read = parser.read(str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in parser.sections():
        if section not in SCHEMAS:
            raise ConfigError(f"unknown section [{section}]")
    values = {key: default for key, (_, default) in schema.items()}
    if parser.has_section(command):
        for key, raw in parser.items(command):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in section [{command}]")
            convert = schema[key][0]
            values[key] = convert(raw)
    for key, value in (overrides or {}).items():
        if key in schema:
            values[key] = value
    missing = [k for k, v in values.items() if v is REQUIRED]
    if missing:
        raise ConfigError(
            f"missing required key(s) in [{command}]: {', '.join(sorted(missing))}"
        )
    return ExperimentConfig(command, values)


def _train_config(values: dict, seed: int) -> TrainConfig:
    arch_kind = values["arch"]
    if arch_kind == "linear":
        arch = ModelArchitecture("linear", input_dim=values["input_dim"])
    else:
        arch = ModelArchitecture("mlp1", input_dim=values["input_dim"],
                                 hidden_dim=values["hidden_dim"],
                                 num_classes=values["num_classes"])
    loss = LossSpec(values["loss"], clip_max=values["clip_max"])
    try:
        return TrainConfig(
            arch=arch,
            loss=loss,
            epochs_stage1=values["epochs_stage1"],
            epochs_stage2=values["epochs_stage2"],
            learning_rate=values["learning_rate"],
            batch_size=values["batch_size"],
            delta=values["delta"],
            kappa_pi=values["kappa_pi"],
            kappa_rho=values["kappa_rho"],
            mc_train=values["mc_train"],
            optimizer=values["optimizer"],
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _env_spec(values: dict):
    kind = values["env"]
    if kind == "linear":
        return LinearEnvSpec(d=values["d"])
    base = BlobsSpec(num_points=values["blob_points"], dim=values["blob_dim"],
                     num_classes=values["blob_classes"],
                     center_scale=values["blob_center_scale"],
                     noise=values["blob_noise"], seed=values["blob_seed"])
    if kind == "blobs":
        return base
    return PermutedEnvSpec(base=base, mode=values["permute_mode"],
                           num_shuffled=values["num_shuffled"])


# ---------------------------------------------------------------------------
# CSV output


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, float):
        # plain-float repr is the shortest round-trip form; the cast also
        # strips numpy's type-annotated repr
        return repr(float(value))
    return str(value)


def write_csv(path: str | Path, columns: list[str], rows: list[tuple],
              config_hash: str, seed: int,
              trailers: list[str] | None = None) -> None:
    """Atomically write a result CSV with metadata comment lines.

    Every non-comment line depends on config and seed alone; timing lives
    only in '#'-prefixed trailers (wall-time, write timestamp), so repeated
    runs agree byte for byte outside the comments.
    """
    path = Path(path)
    lines = [
        f"# metabounds-csv {CSV_VERSION}",
        f"# columns {','.join(columns)}",
        f"# config-hash {config_hash}",
        f"# seed {seed}",
        ",".join(columns),
    ]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row shape does not match the column schema")
        lines.append(",".join(_fmt(v) for v in row))
    lines.extend(trailers or [])
    lines.append(f"# written {time.strftime('%Y-%m-%dT%H:%M:%S')}")
    payload = "\n".join(lines) + "\n"
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Subcommands


def _sweep_point(args):
    values, n, m, d, seed = args
    start = time.perf_counter()
    spec = LinearEnvSpec(d=d)
    pool = sample_tasks(spec, max(values["n_list"]), m, stream(seed, "tasks", d, m))
    if values["pipeline"] == "prior_mean":
        point = prior_mean_point(spec, pool[:n], seed=seed, delta=values["delta"],
                                 eval_tasks=values["eval_tasks"],
                                 eval_points=values["eval_points"])
    else:
        cfg = _train_config(values, seed)
        point = two_prior_point(spec, pool[:n], seed, cfg,
                                eval_tasks=values["eval_tasks"],
                                eval_points=values["eval_points"],
                                mc_eval=values["mc_eval"])
    return ResultRow(point, time.perf_counter() - start)


def cmd_sweep(cfg: ExperimentConfig) -> int:
    values = cfg.values
    root = values["seed"]
    if not values["n_list"]:
        raise ConfigError("n_list must not be empty")
    coords = [
        (values, n, m, d, spawn_seed(root, "sweep", s, d, m))
        for s in range(values["seeds"])
        for d in values["d_list"]
        for m in values["m_list"]
        for n in values["n_list"]
    ]
    if values["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=values["jobs"]) as pool:
            rows = list(pool.map(_sweep_point, coords))
    else:
        rows = [_sweep_point(c) for c in coords]
    total = sum(r.wall_time for r in rows)
    csv_rows = []
    for r in rows:
        p = r.point
        csv_rows.append((p.n, p.m, p.d, p.seed, p.empirical_multitask_risk,
                         p.bound_thm1, p.bound_thm2, p.meta_test_loss,
                         p.meta_train_loss, p.task_level_term, p.multitask_term,
                         p.kl_rho_pi, p.mean_task_kl))
    write_csv(values["out"], RESULT_COLUMNS, csv_rows, cfg.config_hash, root,
              trailers=[f"# wall_time {total:.3f}"])
    print(f"wrote {len(csv_rows)} rows to {values['out']}")
    return 0


def cmd_train(cfg: ExperimentConfig) -> int:
    values = cfg.values
    seed = values["seed"]
    train_cfg = _train_config(values, seed)
    spec = _env_spec(values)
    tasks = sample_tasks(spec, values["n"], values["m"], stream(seed, "tasks"))
    rho, trace = train_meta(tasks, train_cfg)
    out = Path(values["out"])
    save_meta_posterior(rho, out)
    trace_rows = [
        (i, 1 if i < trace.stage_boundary else 2, obj)
        for i, obj in enumerate(trace.objectives)
    ]
    write_csv(out.with_suffix(out.suffix + ".trace.csv"), TRACE_COLUMNS,
              trace_rows, cfg.config_hash, seed)
    print(f"wrote posterior to {out} ({len(trace.objectives)} epochs)")
    return 0


def cmd_adapt(cfg: ExperimentConfig) -> int:
    values = cfg.values
    seed = values["seed"]
    train_cfg = _train_config(values, seed)
    posterior_path = Path(values["posterior"])
    if not posterior_path.exists():
        raise ConfigError(f"posterior artifact not found: {posterior_path}")
    rho = load_meta_posterior(posterior_path)
    expected = 2 * train_cfg.arch.param_count
    if rho.rho0.dim != expected:
        raise ConfigError(
            f"posterior dimension {rho.rho0.dim} does not match the configured "
            f"architecture (expected {expected})"
        )
    spec = _env_spec(values)
    tasks = sample_tasks(spec, values["num_tasks"], values["m"],
                         stream(seed, "adapt-tasks"))
    zero_one = LossSpec("zero_one")
    rows = []
    for i, task in enumerate(tasks):
        model, bound = adapt(rho, task, train_cfg,
                             adapt_epochs=values["adapt_epochs"],
                             rng=stream(seed, "adapt", i),
                             mc_eval=values["mc_eval"])
        train_risk = mc_empirical_risk(model, task.train_x, task.train_y,
                                       train_cfg.loss, values["mc_eval"],
                                       stream(seed, "adapt-train-risk", i))
        test_error, _ = true_risk_mc(task, model, zero_one,
                                     values["eval_points"],
                                     stream(seed, "adapt-eval", i),
                                     mc_samples=values["mc_eval"])
        rows.append((i, seed, train_risk, bound, test_error))
    errors = [r[4] for r in rows]
    bounds_col = [r[3] for r in rows]
    trailers = [
        f"# summary test_error mean={_fmt(float(np.mean(errors)))}"
        f" std={_fmt(float(np.std(errors)))}",
        f"# summary bound mean={_fmt(float(np.mean(bounds_col)))}"
        f" std={_fmt(float(np.std(bounds_col)))}",
    ]
    write_csv(values["out"], ADAPT_COLUMNS, rows, cfg.config_hash, seed,
              trailers=trailers)
    print(f"wrote {len(rows)} adapted tasks to {values['out']}")
    return 0


def cmd_audit(cfg: ExperimentConfig) -> int:
    values = cfg.values
    seed = values["seed"]
    train_cfg = _train_config(values, seed)
    spec = _env_spec(values)
    report = audit_bound_validity(
        spec, values["n"], values["m"], train_cfg, values["trials"],
        stream(seed, "audit-root"), eval_tasks=values["eval_tasks"],
        eval_points=values["eval_points"], mc_eval=values["mc_eval"],
        jobs=values["jobs"],
    )
    rows = [
        (r.trial_index, r.seed, r.bound, r.true_risk_est, r.true_risk_se,
         r.margin, r.violated)
        for r in report.records
    ]
    trailers = [f"# violations {report.violations}/{report.trials} delta={report.delta!r}"]
    write_csv(values["out"], AUDIT_COLUMNS, rows, cfg.config_hash, seed,
              trailers=trailers)
    print(f"audit: {report.violations}/{report.trials} violations "
          f"(delta={report.delta})")
    return 0


def cmd_bound(cfg: ExperimentConfig) -> int:
    values = cfg.values
    pairs = values["pairs"]
    if pairs is None:
        pairs = ((values["kl_hyper"], values["sum_task_kl"]),)
    try:
        inp = MetaBoundInput(
            empirical_multitask_risk=values["empirical_risk"],
            kl_rho_pi=values["kl_rho_pi"],
            per_algorithm_complexity=pairs,
            n=values["n"],
            m=values["m"],
            delta=values["delta"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"theorem1 {theorem1_bound(inp):.12g}")
    print(f"theorem2 {theorem2_bound(inp):.12g}")
    return 0


COMMANDS = {
    "sweep": cmd_sweep,
    "train": cmd_train,
    "adapt": cmd_adapt,
    "audit": cmd_audit,
    "bound": cmd_bound,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metabounds",
        description="PAC-Bayesian meta-learning bounds: sweeps, training, auditing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the config file")
        p.add_argument("--seed", type=int, default=None,
                       help="root seed, overriding the config file")
        p.add_argument("--out", default=None,
                       help="output path, overriding the config file")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes for parallel sections")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    try:
        cfg = load_config(args.config, args.command, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
