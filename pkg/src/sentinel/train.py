"""Window extraction, labeling, the training loop, and checkpoints.

Series become fixed-length sliding windows. For a syncope series with
marker index m, a window ending at index e is labeled positive when
m - positive_horizon <= e <= m, negative when e < m - positive_horizon,
and dropped when e > m (post-event data never trains the predictor).
Non-syncope series yield only negatives. Syncope series with no usable
marker cannot be labeled and are skipped (reported in the history).

Class indices are fixed: 0 = nosyncope, 1 = syncope, matching the
probability column order produced by the network head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Label
from .errors import (
    BadWindow,
    ConfigError,
    CorruptCheckpoint,
    NonFiniteLoss,
    NoPositiveWindows,
    SeriesTooShort,
    VersionMismatch,
)
from .nn import (
    AdadeltaState,
    DenseSoftmaxHead,
    DirectionParams,
    GruLayerParams,
    GruModel,
    ModelSpec,
    adadelta_update,
    backward_batch,
    batch_loss,
    forward_batch,
    init_params,
)
from .preprocess import CleanSeries, SplitDataset

NEGATIVE, POSITIVE = 0, 1
LABEL_INDEX = {Label.NOSYNCOPE: NEGATIVE, Label.SYNCOPE: POSITIVE}

CHECKPOINT_FORMAT = "sentinel-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    window_size: int
    epochs: int
    stride: int = 10
    positive_horizon: int = 750
    batch_size: int = 16
    seed: int = 0
    rho: float = 0.95
    epsilon: float = 1e-6
    lr_multiplier: float = 1.0
    lr_decay: float = 1.0

    def __post_init__(self):
        if self.window_size < 1:
            raise BadWindow(f"window_size must be >= 1, got {self.window_size}")
        if self.stride < 1:
            raise BadWindow(f"stride must be >= 1, got {self.stride}")
        if self.positive_horizon < self.window_size:
            raise BadWindow(
                f"positive_horizon ({self.positive_horizon}) must be >= "
                f"window_size ({self.window_size})"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class WindowBatch:
    inputs: np.ndarray    # (batch, window_size, 2)
    targets: np.ndarray   # (batch, 2) one-hot
    provenance: list[tuple[str, int]]  # (series id, end index) per row

    @property
    def labels(self) -> np.ndarray:
        return self.targets.argmax(axis=1)


def make_windows(series: CleanSeries, cfg: TrainConfig) -> list[tuple[np.ndarray, int, int]]:
    """Slide a window over one cleaned series and label each position.

    Returns (window, label, end_index) triples; end_index is the index of
    the window's last sample within the series.
    """
    x = series.window_input()
    n = len(x)
    if n < cfg.window_size:
        raise SeriesTooShort(
            f"series {series.id!r} has {n} samples, needs {cfg.window_size}"
        )
    syncope = series.label is Label.SYNCOPE
    if syncope and series.marker_index is None:
        return []
    out = []
    for start in range(0, n - cfg.window_size + 1, cfg.stride):
        end = start + cfg.window_size - 1
        if syncope:
            m = series.marker_index
            if end > m:
                continue
            label = POSITIVE if end >= m - cfg.positive_horizon else NEGATIVE
        else:
            label = NEGATIVE
        out.append((x[start:start + cfg.window_size], label, end))
    return out


@dataclass
class WindowSet:
    inputs: np.ndarray   # (n, window_size, 2)
    labels: np.ndarray   # (n,) ints
    provenance: list[tuple[str, int]]
    skipped_series: list[str]

    def __len__(self) -> int:
        return len(self.labels)


def build_window_set(series_list: list[CleanSeries], cfg: TrainConfig) -> WindowSet:
    """Extract labeled windows from every series in the list."""
    windows, labels, prov, skipped = [], [], [], []
    for s in series_list:
        triples = make_windows(s, cfg)
        if not triples and s.label is Label.SYNCOPE and s.marker_index is None:
            skipped.append(s.id)
            continue
        for w, y, end in triples:
            windows.append(w)
            labels.append(y)
            prov.append((s.id, end))
    if windows:
        inputs = np.stack(windows)
    else:
        inputs = np.zeros((0, cfg.window_size, 2))
    return WindowSet(inputs=inputs, labels=np.array(labels, dtype=int),
                     provenance=prov, skipped_series=skipped)


def iter_batches(window_set: WindowSet, batch_size: int, rng: np.random.Generator):
    """Yield shuffled mini-batches; the final short batch is kept."""
    n = len(window_set)
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        idx = order[lo:lo + batch_size]
        onehot = np.zeros((len(idx), 2))
        onehot[np.arange(len(idx)), window_set.labels[idx]] = 1.0
        yield WindowBatch(
            inputs=window_set.inputs[idx],
            targets=onehot,
            provenance=[window_set.provenance[i] for i in idx],
        )


@dataclass
class TrainHistory:
    epoch_losses: list[float] = field(default_factory=list)
    n_windows: int = 0
    n_positive: int = 0
    n_negative: int = 0
    skipped_series: list[str] = field(default_factory=list)


def fit(split: SplitDataset, spec: ModelSpec, cfg: TrainConfig,
        ) -> tuple[GruModel, AdadeltaState, TrainHistory]:
    """Train a fresh model on the split's training series.

    Deterministic for a fixed config: the same seed drives initialization
    and every epoch's shuffle. Raises NonFiniteLoss if the loss diverges;
    the exception carries the model as of the last completed epoch.
    """
    if spec.window_size != cfg.window_size:
        raise BadWindow(
            f"model window_size {spec.window_size} != "
            f"training window_size {cfg.window_size}"
        )
    ws = build_window_set(split.train, cfg)
    history = TrainHistory(
        n_windows=len(ws),
        n_positive=int((ws.labels == POSITIVE).sum()),
        n_negative=int((ws.labels == NEGATIVE).sum()),
        skipped_series=ws.skipped_series,
    )
    if len(ws) == 0 or history.n_positive == 0:
        raise NoPositiveWindows(
            f"degenerate labeling: {history.n_positive} positive / "
            f"{history.n_negative} negative windows"
        )
    model = init_params(spec, cfg.seed)
    state = AdadeltaState.for_model(
        model, rho=cfg.rho, epsilon=cfg.epsilon,
        lr_multiplier=cfg.lr_multiplier, lr_decay=cfg.lr_decay,
    )
    rng = np.random.default_rng(cfg.seed)
    last_good = model.copy()
    for _ in range(cfg.epochs):
        total, count = 0.0, 0
        for batch in iter_batches(ws, cfg.batch_size, rng):
            probs, cache = forward_batch(model, batch.inputs)
            loss = batch_loss(probs, batch.labels)
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"non-finite training loss after {len(history.epoch_losses)} "
                    f"completed epochs",
                    last_good_model=last_good,
                )
            grads = backward_batch(model, cache, batch.labels)
            adadelta_update(model, grads, state)
            total += loss * len(batch.labels)
            count += len(batch.labels)
        state.end_epoch()
        history.epoch_losses.append(total / count)
        last_good = model.copy()
    return model, state, history


# --- checkpoints -----------------------------------------------------------------


def _direction_to_doc(d: DirectionParams) -> dict:
    doc = {}
    for gate in ("z", "r", "c"):
        w, u, b = d.gate_weights(gate)
        doc[f"w_{gate}"] = w.tolist()
        doc[f"u_{gate}"] = u.tolist()
        doc[f"b_{gate}"] = b.tolist()
    return doc


def _direction_from_doc(doc: dict, input_dim: int, units: int) -> DirectionParams:
    ws, us, bs = [], [], []
    for gate in ("z", "r", "c"):
        w = np.asarray(doc[f"w_{gate}"], dtype=float)
        u = np.asarray(doc[f"u_{gate}"], dtype=float)
        b = np.asarray(doc[f"b_{gate}"], dtype=float)
        if w.shape != (units, input_dim) or u.shape != (units, units) or b.shape != (units,):
            raise CorruptCheckpoint(
                f"gate {gate}: bad shapes w{w.shape} u{u.shape} b{b.shape} "
                f"for units={units} input_dim={input_dim}"
            )
        ws.append(w.T)
        us.append(u.T)
        bs.append(b)
    return DirectionParams(
        wx=np.concatenate(ws, axis=1),
        u_zr=np.concatenate(us[:2], axis=1),
        u_c=us[2],
        b=np.concatenate(bs),
    )


def save_checkpoint(model: GruModel, path, optimizer: AdadeltaState | None = None) -> None:
    """Write the model (and optionally optimizer state) as versioned JSON.

    Gate matrices are stored per gate in (units x input_dim) orientation,
    so the file format is independent of the in-memory fused layout.
    Floats round-trip exactly through JSON's repr formatting.
    """
    spec = model.spec
    doc = {
        "format": CHECKPOINT_FORMAT,
        "format_version": CHECKPOINT_VERSION,
        "model": {
            "spec": {
                "num_layers": spec.num_layers,
                "units": list(spec.units),
                "bidirectional": spec.bidirectional,
                "window_size": spec.window_size,
                "input_channels": spec.input_channels,
            },
            "init_seed": model.init_seed,
            "layers": [
                {
                    "forward": _direction_to_doc(layer.forward),
                    "backward": (_direction_to_doc(layer.backward)
                                 if layer.backward is not None else None),
                }
                for layer in model.layers
            ],
            "head": {"w": model.head.w.tolist(), "b": model.head.b.tolist()},
        },
        "optimizer": None,
    }
    if optimizer is not None:
        doc["optimizer"] = {
            "rho": optimizer.rho,
            "epsilon": optimizer.epsilon,
            "lr_multiplier": optimizer.lr_multiplier,
            "lr_decay": optimizer.lr_decay,
            "eg2": {k: v.tolist() for k, v in optimizer.eg2.items()},
            "edx2": {k: v.tolist() for k, v in optimizer.edx2.items()},
        }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path, with_optimizer: bool = False):
    """Load a checkpoint; returns the model, or (model, optimizer) when
    ``with_optimizer`` is set (optimizer may be None if it was not saved)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpoint(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CorruptCheckpoint(f"{path} is not a model checkpoint")
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"checkpoint version {version!r}, this build reads {CHECKPOINT_VERSION}"
        )
    try:
        mdoc = doc["model"]
        sdoc = mdoc["spec"]
        spec = ModelSpec(
            num_layers=int(sdoc["num_layers"]),
            units=[int(u) for u in sdoc["units"]],
            bidirectional=bool(sdoc["bidirectional"]),
            window_size=int(sdoc["window_size"]),
            input_channels=int(sdoc["input_channels"]),
        )
        layers = []
        input_dim = spec.input_channels
        if len(mdoc["layers"]) != spec.num_layers:
            raise CorruptCheckpoint("layer count does not match spec")
        for li, ldoc in enumerate(mdoc["layers"]):
            units = spec.units[li]
            fwd = _direction_from_doc(ldoc["forward"], input_dim, units)
            bwd = None
            if spec.bidirectional:
                if ldoc["backward"] is None:
                    raise CorruptCheckpoint("bidirectional spec but no backward params")
                bwd = _direction_from_doc(ldoc["backward"], input_dim, units)
            layers.append(GruLayerParams(fwd, bwd))
            input_dim = 2 * units if spec.bidirectional else units
        w = np.asarray(mdoc["head"]["w"], dtype=float)
        b = np.asarray(mdoc["head"]["b"], dtype=float)
        if w.shape != (spec.feature_dim(), 2) or b.shape != (2,):
            raise CorruptCheckpoint(f"bad head shapes w{w.shape} b{b.shape}")
        model = GruModel(spec=spec, layers=layers,
                         head=DenseSoftmaxHead(w=w, b=b),
                         init_seed=int(mdoc.get("init_seed", 0)))
        optimizer = None
        odoc = doc.get("optimizer")
        if odoc is not None:
            optimizer = AdadeltaState(
                rho=float(odoc["rho"]), epsilon=float(odoc["epsilon"]),
                lr_multiplier=float(odoc["lr_multiplier"]),
                lr_decay=float(odoc["lr_decay"]),
                eg2={k: np.asarray(v, dtype=float) for k, v in odoc["eg2"].items()},
                edx2={k: np.asarray(v, dtype=float) for k, v in odoc["edx2"].items()},
            )
    except CorruptCheckpoint:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"malformed checkpoint {path}: {exc}") from exc
    if with_optimizer:
        return model, optimizer
    return model


def save_loss_trace(losses: list[float], path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(losses):
            fh.write(f"{i},{loss!r}\n")


def load_loss_trace(path) -> list[float]:
    losses = []
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != "epoch,loss":
            raise CorruptCheckpoint(f"{path} is not a loss trace")
        for line in fh:
            if line.strip():
                losses.append(float(line.split(",")[1]))
    return losses
