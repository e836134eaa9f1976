"""Command-line entry point wiring every pipeline stage into reproducible
seeded runs.

Settings resolve in fixed order: built-in defaults, then an INI config
file (section ``[global]`` plus one section per command), then command
flags — later sources win. Unknown sections or keys are rejected by name.
Each run writes all of its outputs plus a ``run.json`` provenance record
(command, resolved settings, seed, timings, versions) into one run
directory and never writes anywhere else; :func:`replay_run` re-executes
a recorded run and reproduces those outputs byte for byte.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import platform
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .data import scan_dataset
from .errors import (
    AllTrialsFailed,
    ConfigError,
    ConfigInvalid,
    DataError,
    EmptyDataset,
    NumericError,
    SentinelError,
    UnknownCommand,
)
from .evaluate import (
    default_threshold_grid,
    evaluate_dataset,
    threshold_sweep,
    write_report_csv,
    write_report_json,
    write_sweep_csv,
)
from .hpo import (
    Dimension,
    SearchSpace,
    Surrogate,
    default_space,
    observe,
    partial_dependence,
    phase2_space,
    read_trials_csv,
    run_phase,
    run_two_phase,
    write_pd_csv,
    write_trials_csv,
)
from .nn import ModelSpec
from .preprocess import (
    OutlierConfig,
    PreprocessConfig,
    SplitDataset,
    load_clean_dir,
    preprocess_pipeline,
    save_clean_series,
    split_train_test,
)
from .report import render_csv, render_index
from .synth import SynthConfig, generate_dataset
from .train import TrainConfig, fit, load_checkpoint, save_checkpoint, save_loss_trace

RUN_FORMAT = "sentinel-run"
RUN_VERSION = 1

SEED_ENV_VAR = "SENTINEL_SEED"

_LOG_LEVELS = ("debug", "info", "warning", "error")


@dataclass(frozen=True)
class Option:
    """One named setting: its value type, default, and flag help text."""

    key: str
    kind: str  # "int" | "float" | "str" | "bool"
    default: object = None
    required: bool = False
    help: str = ""


GLOBAL_OPTIONS = (
    Option("out", "str", None, help="run directory (default runs/<command>)"),
    Option("seed", "int", None,
           help=f"global RNG seed; falls back to ${SEED_ENV_VAR}, then 0"),
    Option("log_level", "str", "info", help="debug|info|warning|error"),
)

COMMAND_OPTIONS: dict[str, tuple[Option, ...]] = {
    "synth": (
        Option("n_syncope", "int", 8, help="number of positive series"),
        Option("n_nosyncope", "int", 8, help="number of negative series"),
        Option("length_min", "int", 2000, help="shortest series (samples)"),
        Option("length_max", "int", 4000, help="longest series (samples)"),
        Option("onset_lead", "int", 750,
               help="pattern onset this many samples before the marker"),
        Option("rate_hz", "float", 1.25, help="sampling rate"),
        Option("corrupt", "bool", False,
               help="also plant gaps and spikes"),
        Option("gap_probability", "float", 0.01,
               help="per-sample gap start probability (with --corrupt)"),
        Option("spike_probability", "float", 0.01,
               help="per-sample spike probability (with --corrupt)"),
    ),
    "preprocess": (
        Option("data", "str", required=True,
               help="directory of recording CSVs to clean"),
        Option("rate_hz", "float", 1.25, help="sampling rate"),
        Option("median_window", "int", 31, help="outlier median window"),
        Option("outlier_threshold", "float", 3.0,
               help="initial studentized cut"),
        Option("outlier_decay", "float", 0.8,
               help="threshold decay per iteration"),
        Option("outlier_iters", "int", 5, help="max outlier iterations"),
        Option("train_fraction", "float", 0.8, help="train split fraction"),
        Option("exclude_conflicts", "bool", True,
               help="drop cross-class duplicate recordings"),
    ),
    "train": (
        Option("train_dir", "str", required=True,
               help="directory of cleaned training series"),
        Option("spec", "str", "2x32b",
               help="model shape LAYERSxUNITS[b], e.g. 2x32b for "
                    "bidirectional"),
        Option("window", "int", 100, help="history window (samples)"),
        Option("stride", "int", 10, help="training window stride"),
        Option("horizon", "int", 750, help="positive-label horizon"),
        Option("batch", "int", 16, help="batch size"),
        Option("epochs", "int", 50, help="training epochs"),
        Option("rho", "float", 0.95, help="ADADELTA decay rate"),
        Option("epsilon", "float", 1e-6, help="ADADELTA epsilon"),
        Option("learning_rate", "float", 1.0,
               help="multiplier on ADADELTA updates"),
        Option("lr_decay", "float", 1.0,
               help="learning-rate multiplier decay per epoch"),
    ),
    "evaluate": (
        Option("model", "str", required=True, help="checkpoint path"),
        Option("data", "str", required=True,
               help="directory of cleaned series to score"),
        Option("threshold", "float", 0.5, help="detection threshold"),
        Option("consecutive", "int", 1,
               help="consecutive windows above threshold to detect"),
        Option("beta", "float", 1.0, help="F-measure beta"),
    ),
    "sweep": (
        Option("model", "str", required=True, help="checkpoint path"),
        Option("data", "str", required=True,
               help="directory of cleaned series to score"),
        Option("grid", "str", "",
               help="comma-separated thresholds (default 0.05..0.95)"),
        Option("consecutive", "int", 1,
               help="consecutive windows above threshold to detect"),
        Option("beta", "float", 1.0, help="F-measure beta"),
    ),
    "hpo": (
        Option("train_dir", "str", required=True,
               help="directory of cleaned training series"),
        Option("phase", "str", "both", help="1, 2, or both"),
        Option("budget", "int", 16, help="trials for phase 1 (or phase 2)"),
        Option("budget2", "int", 8, help="phase-2 trials when phase=both"),
        Option("n_init", "int", 8, help="quasi-random warmup trials"),
        Option("epochs", "int", 5, help="training epochs per trial"),
        Option("inner_fraction", "float", 0.8,
               help="inner train/validation split fraction"),
        Option("stride", "int", 10, help="training window stride"),
        Option("horizon", "int", 750, help="positive-label horizon"),
        Option("bidirectional", "bool", True,
               help="train bidirectional models"),
        Option("space", "str", "",
               help="search-space INI file (default: built-in space)"),
        Option("phase1_log", "str", "",
               help="phase-1 trials CSV (required when phase=2)"),
    ),
    "report": (
        Option("inputs", "str", required=True,
               help="comma-separated CSV files or directories to render"),
    ),
}

COMMANDS = tuple(COMMAND_OPTIONS)

_COMMAND_HELP = {
    "synth": "generate a labelled synthetic dataset",
    "preprocess": "clean, balance, and split a recording tree",
    "train": "train a GRU classifier on cleaned series",
    "evaluate": "score a checkpoint on cleaned series",
    "sweep": "evaluate across a threshold grid",
    "hpo": "Bayesian hyperparameter search",
    "report": "render result CSVs to static HTML/SVG",
}


@dataclass
class RunConfig:
    """Fully resolved settings for one command invocation."""

    command: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]


# --- settings resolution ----------------------------------------------------------


_BOOL_WORDS = {
    "1": True, "true": True, "yes": True, "on": True,
    "0": False, "false": False, "no": False, "off": False,
}


def _convert(opt: Option, raw, where: str):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if opt.kind == "int":
            return int(text)
        if opt.kind == "float":
            return float(text)
        if opt.kind == "bool":
            return _BOOL_WORDS[text.lower()]
        return text
    except (ValueError, KeyError):
        raise ConfigInvalid(
            f"{where}: key '{opt.key}' has invalid {opt.kind} value {raw!r}"
        ) from None


def _schema(command: str) -> dict[str, Option]:
    return {o.key: o for o in (*GLOBAL_OPTIONS, *COMMAND_OPTIONS[command])}


def read_config_file(path) -> dict[str, dict]:
    """Parse an INI settings file into {section: {key: value}}.

    Sections must be ``global`` or a command name; keys must belong to
    that section's schema. Violations raise ConfigInvalid naming the
    offending section or key.
    """
    parser = configparser.ConfigParser(interpolation=None,
                                       default_section="\x00unused")
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigInvalid(f"bad config file {path}: {exc}") from exc

    out: dict[str, dict] = {}
    for section in parser.sections():
        if section == "global":
            allowed = {o.key: o for o in GLOBAL_OPTIONS}
        elif section in COMMAND_OPTIONS:
            allowed = _schema(section)
        else:
            raise ConfigInvalid(f"{path}: unknown section '{section}'")
        values = {}
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigInvalid(
                    f"{path}: unknown key '{key}' in section [{section}]"
                )
            values[key] = _convert(allowed[key], raw, f"{path} [{section}]")
        out[section] = values
    return out


def resolve_config(command: str, file_values: dict | None = None,
                   flag_values: dict | None = None) -> RunConfig:
    """Merge defaults, config-file sections, and flags into a RunConfig."""
    if command not in COMMAND_OPTIONS:
        raise UnknownCommand(f"unknown command '{command}'")
    schema = _schema(command)
    values = {key: opt.default for key, opt in schema.items()}
    file_values = file_values or {}
    for section in ("global", command):
        for key, value in file_values.get(section, {}).items():
            if key in values:
                values[key] = value
    for key, value in (flag_values or {}).items():
        if key not in schema:
            raise ConfigInvalid(f"{command}: unknown key '{key}'")
        if value is not None:
            values[key] = _convert(schema[key], value, command)

    if values["seed"] is None:
        env = os.environ.get(SEED_ENV_VAR)
        if env is None:
            values["seed"] = 0
        else:
            try:
                values["seed"] = int(env)
            except ValueError:
                raise ConfigInvalid(
                    f"{SEED_ENV_VAR} is not an integer: {env!r}"
                ) from None
    if values["out"] is None:
        values["out"] = str(Path("runs") / command)
    values["log_level"] = str(values["log_level"]).lower()
    if values["log_level"] not in _LOG_LEVELS:
        raise ConfigInvalid(
            f"log_level must be one of {'/'.join(_LOG_LEVELS)}, "
            f"got {values['log_level']!r}"
        )
    for key, opt in schema.items():
        if opt.required and values[key] in (None, ""):
            raise ConfigInvalid(f"{command}: missing required setting '{key}'")
    return RunConfig(command, values)


# --- small shared helpers ---------------------------------------------------------


def _build(ctor, **kwargs):
    """Construct a config object, mapping its ValueErrors to ConfigInvalid."""
    try:
        return ctor(**kwargs)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc


def parse_model_spec(text: str, window: int, channels: int = 2) -> ModelSpec:
    """Parse the compact LAYERSxUNITS[b] model notation, e.g. '2x32b'."""
    m = re.fullmatch(r"(\d+)x(\d+)(b?)", str(text).strip().lower())
    if not m:
        raise ConfigInvalid(
            f"spec: cannot parse model spec {text!r} (expected e.g. '2x32b')"
        )
    layers, units = int(m.group(1)), int(m.group(2))
    if layers < 1 or units < 1:
        raise ConfigInvalid(f"spec: layers and units must be >= 1 in {text!r}")
    return ModelSpec(num_layers=layers, units=[units] * layers,
                     bidirectional=m.group(3) == "b", window_size=window,
                     input_channels=channels)


def _files_under(root: Path, out: Path) -> list[str]:
    return sorted(
        p.relative_to(out).as_posix()
        for p in root.rglob("*") if p.is_file()
    )


def _versions() -> dict:
    import numpy
    import scipy

    return {
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "sentinel": __version__,
    }


# --- command handlers -------------------------------------------------------------


def _cmd_synth(config: RunConfig, out: Path, log) -> list[str]:
    corrupt = config["corrupt"]
    scfg = SynthConfig(
        n_syncope=config["n_syncope"],
        n_nosyncope=config["n_nosyncope"],
        length_range=(config["length_min"], config["length_max"]),
        rate_hz=config["rate_hz"],
        onset_lead=config["onset_lead"],
        gap_probability=config["gap_probability"] if corrupt else 0.0,
        spike_probability=config["spike_probability"] if corrupt else 0.0,
        seed=config["seed"],
    )
    generated = generate_dataset(scfg, out / "data")
    log.info("generated %d series under %s", len(generated.ids), out / "data")
    return _files_under(out / "data", out)


def _cmd_preprocess(config: RunConfig, out: Path, log) -> list[str]:
    if not 0.0 < config["train_fraction"] < 1.0:
        raise ConfigInvalid(
            f"train_fraction must lie in (0, 1), got {config['train_fraction']}"
        )
    catalog = scan_dataset(config["data"], rate_hz=config["rate_hz"])
    for path, reason in catalog.skipped:
        log.warning("skipped %s: %s", path, reason)
    pcfg = PreprocessConfig(
        outlier=_build(
            OutlierConfig,
            median_window=config["median_window"],
            initial_threshold=config["outlier_threshold"],
            decay=config["outlier_decay"],
            max_iterations=config["outlier_iters"],
        ),
        train_fraction=config["train_fraction"],
        exclude_conflicts=config["exclude_conflicts"],
    )
    split, drop_report = preprocess_pipeline(catalog, pcfg, config["seed"])
    written = []
    for side, series_list in (("train", split.train), ("test", split.test)):
        for series in series_list:
            rel = Path("clean") / side / f"{series.id}.csv"
            save_clean_series(series, out / rel)
            written.append(rel.as_posix())
    with open(out / "drop_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "series_id", "reason"])
        writer.writerows(drop_report.drops)
    written.append("drop_report.csv")
    log.info("kept %d train / %d test series; dropped %d",
             len(split.train), len(split.test), len(drop_report.drops))
    return sorted(written)


def _cmd_train(config: RunConfig, out: Path, log) -> list[str]:
    series = load_clean_dir(config["train_dir"])
    spec = parse_model_spec(config["spec"], config["window"])
    tcfg = _build(
        TrainConfig,
        window_size=config["window"],
        epochs=config["epochs"],
        stride=config["stride"],
        positive_horizon=config["horizon"],
        batch_size=config["batch"],
        seed=config["seed"],
        rho=config["rho"],
        epsilon=config["epsilon"],
        lr_multiplier=config["learning_rate"],
        lr_decay=config["lr_decay"],
    )
    split = SplitDataset(train=series, test=[], seed=config["seed"])
    model, optimizer, history = fit(split, spec, tcfg)
    for sid in history.skipped_series:
        log.warning("series %s has no marker; skipped", sid)
    save_checkpoint(model, out / "model.ckpt", optimizer=optimizer)
    save_loss_trace(history.epoch_losses, out / "loss.csv")
    if history.epoch_losses:
        log.info("trained on %d windows (%d positive); final loss %.6f",
                 history.n_windows, history.n_positive,
                 history.epoch_losses[-1])
    return ["loss.csv", "model.ckpt"]


def _cmd_evaluate(config: RunConfig, out: Path, log) -> list[str]:
    model = load_checkpoint(config["model"])
    series = load_clean_dir(config["data"])
    result = evaluate_dataset(
        model, series, config["threshold"],
        consecutive=config["consecutive"], beta=config["beta"],
    )
    write_report_csv(result, out / "report.csv")
    write_report_json(result, out / "summary.json")
    log.info("accuracy %s, recall %s over %d series",
             result.accuracy, result.recall, result.confusion.total)
    return ["report.csv", "summary.json"]


def _parse_grid(text: str) -> list[float]:
    text = str(text).strip()
    if not text:
        return default_threshold_grid()
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigInvalid(
            f"grid: cannot parse threshold list {text!r}"
        ) from None
    if not values:
        raise ConfigInvalid("grid: threshold list is empty")
    return values


def _cmd_sweep(config: RunConfig, out: Path, log) -> list[str]:
    model = load_checkpoint(config["model"])
    series = load_clean_dir(config["data"])
    reports = threshold_sweep(
        model, series, _parse_grid(config["grid"]),
        consecutive=config["consecutive"], beta=config["beta"],
    )
    write_sweep_csv(reports, out / "sweep.csv")
    log.info("swept %d thresholds over %d series",
             len(reports), len(series))
    return ["sweep.csv"]


def load_space_file(path) -> SearchSpace:
    """Read a search-space INI: one section per dimension, keys
    kind/lower/upper."""
    parser = configparser.ConfigParser(interpolation=None,
                                       default_section="\x00unused")
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read space file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigInvalid(f"bad space file {path}: {exc}") from exc
    dimensions = []
    for section in parser.sections():
        items = dict(parser.items(section))
        unknown = set(items) - {"kind", "lower", "upper"}
        if unknown:
            raise ConfigInvalid(
                f"{path}: unknown key '{sorted(unknown)[0]}' in "
                f"dimension [{section}]"
            )
        if "lower" not in items or "upper" not in items:
            raise ConfigInvalid(
                f"{path}: dimension [{section}] needs lower and upper"
            )
        kind = items.get("kind", "real")
        try:
            lower, upper = float(items["lower"]), float(items["upper"])
        except ValueError:
            raise ConfigInvalid(
                f"{path}: dimension [{section}] has non-numeric bounds"
            ) from None
        dimensions.append(Dimension(section, kind, lower, upper))
    if not dimensions:
        raise ConfigInvalid(f"{path}: space file defines no dimensions")
    return SearchSpace(dimensions)


def make_pipeline_objective(series, config: RunConfig, log):
    """Objective for HPO: 1 - validation accuracy of a freshly trained model.

    The series are split once (seeded) into inner train/validation sides;
    every trial trains on the same inner split so objective values are
    comparable across trials.
    """
    inner = split_train_test(series, config["inner_fraction"], config["seed"])
    bidirectional = config["bidirectional"]

    def objective(params: dict) -> float:
        window = int(params.get("window_size", 100))
        layers = int(params.get("gru_layers", 1))
        units = int(params.get("gru_units", 32))
        spec = ModelSpec(num_layers=layers, units=[units] * layers,
                         bidirectional=bidirectional, window_size=window)
        tcfg = TrainConfig(
            window_size=window,
            epochs=config["epochs"],
            stride=config["stride"],
            # a window longer than the horizon implies at least a
            # window-length lookback, so clamp the horizon up to it
            positive_horizon=max(config["horizon"], window),
            batch_size=int(params.get("batch_size", 16)),
            seed=config["seed"],
            lr_multiplier=float(params.get("learning_rate", 1.0)),
            lr_decay=float(params.get("lr_decay", 1.0)),
        )
        model, _, _ = fit(inner, spec, tcfg)
        result = evaluate_dataset(
            model, inner.test, float(params.get("output_threshold", 0.5)))
        value = 1.0 - (result.accuracy if result.accuracy is not None else 0.0)
        log.info("objective %.4f at %s", value,
                 {k: params[k] for k in sorted(params)})
        return value

    return objective


def _write_partial_dependence(space: SearchSpace, trials, seed: int,
                              out: Path) -> list[str]:
    surrogate = Surrogate(space, seed=seed)
    for trial in trials:
        observe(surrogate, trial.params, trial.objective)
    if surrogate.n_observed < 2:
        return []
    written = []
    for i, dim in enumerate(space.dimensions):
        rel = f"pd_{dim.name}.csv"
        write_pd_csv(partial_dependence(surrogate, [i]), out / rel)
        written.append(rel)
    if len(space.dimensions) >= 2:
        a, b = space.dimensions[0], space.dimensions[1]
        rel = f"pd_{a.name}_{b.name}.csv"
        write_pd_csv(partial_dependence(surrogate, [0, 1]), out / rel)
        written.append(rel)
    return written


def _cmd_hpo(config: RunConfig, out: Path, log) -> list[str]:
    series = load_clean_dir(config["train_dir"])
    space = load_space_file(config["space"]) if config["space"] \
        else default_space()
    objective = make_pipeline_objective(series, config, log)
    seed = config["seed"]
    phase = str(config["phase"]).lower()
    written: list[str] = []

    if phase == "both":
        result = run_two_phase(space, config["budget"], config["budget2"],
                               objective, seed, n_init=config["n_init"])
        sub = phase2_space(space)
        write_trials_csv(result.phase1, space, out / "trials_phase1.csv")
        write_trials_csv(result.phase2, sub, out / "trials_phase2.csv")
        written += ["trials_phase1.csv", "trials_phase2.csv"]
        best_params, best_objective = result.best_params, result.best_objective
        pd_space, pd_trials = sub, result.phase2
    elif phase == "1":
        trials, best = run_phase(space, config["budget"], objective, seed,
                                 n_init=config["n_init"])
        write_trials_csv(trials, space, out / "trials.csv")
        written.append("trials.csv")
        best_params, best_objective = best.params, best.objective
        pd_space, pd_trials = space, trials
    elif phase == "2":
        if not config["phase1_log"]:
            raise ConfigInvalid(
                "hpo: phase 2 needs phase1_log=<phase-1 trials CSV>"
            )
        prior = read_trials_csv(config["phase1_log"], space)
        done = [t for t in prior if t.status == "done"]
        if not done:
            raise AllTrialsFailed("phase-1 log holds no successful trials")
        best1 = min(done, key=lambda t: t.objective)
        sub = phase2_space(space)
        fixed = {k: v for k, v in best1.params.items() if k not in sub.names}
        trials, best = run_phase(
            sub, config["budget"], lambda p: objective({**fixed, **p}),
            seed, n_init=config["n_init"])
        write_trials_csv(trials, sub, out / "trials.csv")
        written.append("trials.csv")
        best_params = {**fixed, **best.params}
        best_objective = best.objective
        pd_space, pd_trials = sub, trials
    else:
        raise ConfigInvalid(
            f"hpo: phase must be 1, 2 or both, got {config['phase']!r}"
        )

    with open(out / "best.json", "w", encoding="utf-8") as fh:
        json.dump({"params": best_params, "objective": best_objective},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append("best.json")
    written += _write_partial_dependence(pd_space, pd_trials, seed, out)
    log.info("best objective %.4f at %s", best_objective,
             {k: best_params[k] for k in sorted(best_params)})
    return sorted(written)


def _gather_report_inputs(text: str) -> list[Path]:
    paths: list[Path] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        p = Path(part)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.csv")))
        elif p.is_file():
            paths.append(p)
        else:
            raise ConfigInvalid(f"report: input {part!r} does not exist")
    if not paths:
        raise ConfigInvalid("report: inputs name no CSV files")
    return paths


def _cmd_report(config: RunConfig, out: Path, log) -> list[str]:
    entries = []
    written: list[str] = []
    used_names: set[str] = set()
    for path in _gather_report_inputs(config["inputs"]):
        rendered = render_csv(path)
        if rendered is None:
            log.warning("unrecognized CSV layout: %s", path)
            continue
        title, svg = rendered
        name = f"{path.stem}.svg"
        serial = 1
        while name in used_names:
            serial += 1
            name = f"{path.stem}_{serial}.svg"
        used_names.add(name)
        (out / name).write_text(svg + "\n", encoding="utf-8")
        entries.append((title, svg))
        written.append(name)
    if not entries:
        raise EmptyDataset("report: no renderable CSV inputs")
    (out / "index.html").write_text(render_index(entries), encoding="utf-8")
    written.append("index.html")
    log.info("rendered %d chart(s)", len(entries))
    return sorted(written)


_HANDLERS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "hpo": _cmd_hpo,
    "report": _cmd_report,
}


# --- dispatch and provenance ------------------------------------------------------


def _setup_logging(level_name: str) -> None:
    level = getattr(logging, level_name.upper())
    root = logging.getLogger("sentinel")
    root.setLevel(level)
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(
            logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)


def _write_run_record(config: RunConfig, out: Path, outputs: list[str],
                      started: float, elapsed: float) -> None:
    record = {
        "format": RUN_FORMAT,
        "format_version": RUN_VERSION,
        "command": config.command,
        "config": {k: config.values[k] for k in sorted(config.values)},
        "seed": config["seed"],
        "started_unix": started,
        "elapsed_s": elapsed,
        "versions": _versions(),
        "outputs": sorted(outputs),
    }
    with open(out / "run.json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")


def dispatch(command: str, config: RunConfig) -> int:
    """Run one command into its run directory; 0 on success.

    Failures raise SentinelError subclasses; :func:`main` maps them to
    exit codes.
    """
    if command not in _HANDLERS:
        raise UnknownCommand(f"unknown command '{command}'")
    _setup_logging(config["log_level"])
    log = logging.getLogger(f"sentinel.cli.{command}")
    for key in sorted(config.values):
        log.info("config %s=%r", key, config.values[key])
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    outputs = _HANDLERS[command](config, out, log)
    elapsed = time.time() - started
    _write_run_record(config, out, outputs, started, elapsed)
    log.info("wrote %d file(s) + run.json under %s", len(outputs), out)
    return 0


def load_run_record(path) -> dict:
    """Read and shape-check a run.json provenance record."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigInvalid(f"unreadable run record {path}: {exc}") from exc
    if (not isinstance(doc, dict) or doc.get("format") != RUN_FORMAT
            or "command" not in doc or "config" not in doc):
        raise ConfigInvalid(f"{path} is not a run record")
    return doc


def replay_run(run_json_path, out_dir) -> int:
    """Re-execute a recorded run into ``out_dir``.

    All recorded settings are reused verbatim except the run directory,
    so every output except run.json itself (whose timings differ) is
    reproduced byte for byte. Input paths are replayed as recorded and
    must still resolve.
    """
    doc = load_run_record(run_json_path)
    command = doc["command"]
    if command not in COMMAND_OPTIONS:
        raise UnknownCommand(f"{run_json_path}: unknown command '{command}'")
    schema = _schema(command)
    recorded = doc["config"]
    unknown = sorted(set(recorded) - set(schema))
    if unknown:
        raise ConfigInvalid(f"{run_json_path}: unknown key '{unknown[0]}'")
    values = {key: opt.default for key, opt in schema.items()}
    values.update(recorded)
    values["out"] = str(out_dir)
    return dispatch(command, RunConfig(command, values))


# --- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentinel",
        description="Syncope early-warning pipeline with reproducible runs.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for command, options in COMMAND_OPTIONS.items():
        p = sub.add_parser(command, help=_COMMAND_HELP[command])
        p.add_argument("--config", default=None, metavar="FILE",
                       help="INI settings file")
        for opt in (*GLOBAL_OPTIONS, *options):
            flag = "--" + opt.key.replace("_", "-")
            if opt.kind == "bool":
                p.add_argument(flag, dest=opt.key, default=None,
                               action=argparse.BooleanOptionalAction,
                               help=opt.help)
            else:
                p.add_argument(flag, dest=opt.key, default=None,
                               type={"int": int, "float": float,
                                     "str": str}[opt.kind],
                               help=opt.help)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command is None:
        print("error: a command is required (see --help)", file=sys.stderr)
        return 2
    try:
        file_values = read_config_file(args.config) if args.config else {}
        flag_values = {
            opt.key: getattr(args, opt.key)
            for opt in (*GLOBAL_OPTIONS, *COMMAND_OPTIONS[args.command])
        }
        config = resolve_config(args.command, file_values, flag_values)
        return dispatch(args.command, config)
    except SentinelError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return exit_code_for(exc)


def exit_code_for(exc: SentinelError) -> int:
    """Map the error hierarchy onto the documented exit codes."""
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, (NumericError, AllTrialsFailed)):
        return 4
    if isinstance(exc, DataError):
        return 3
    return 3  # artifact problems (checkpoints, metrics) read as data issues


if __name__ == "__main__":
    sys.exit(main())
