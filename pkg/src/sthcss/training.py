"""Training loop, regression metrics, ridge baseline, experiment pipeline and
hyperparameter sweeps."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import hypergraph as hgm
from .data import SensorSeries, Standardizer, WindowedDataset, make_windows, split_chronological
from .exceptions import (DegenerateTargetError, DimensionError, DivergenceError,
                         InvalidArgumentError, NumericalError, STHCSSError)
from .model import ModelConfig, ModelParams, forward, init_params, predict
from .tensor import AdamState, Tape, Tensor, adam_step, as_tensor, backward, mean_all, square, sub

log = logging.getLogger(__name__)

METRIC_NAMES = ("nmae", "nrmse", "mape", "r2")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 0.001
    seed: int = 0
    patience: int | None = None
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")
        if not self.lr >= 0:
            raise InvalidArgumentError(f"learning rate must be non-negative, got {self.lr}")
        if self.patience is not None and self.patience < 1:
            raise InvalidArgumentError("patience must be a positive epoch count")


@dataclass(frozen=True)
class MetricsReport:
    nmae: float
    nrmse: float
    mape: float | None
    r2: float
    n: int
    target_name: str = ""

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        out = []
        for k in METRIC_NAMES:
            v = getattr(self, k)
            out.append(f"{k}={'undefined' if v is None else repr(float(v))}")
        out += [f"n={self.n}", f"target_name={self.target_name}"]
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        vals = {k: (None if kv[k] == "undefined" else float(kv[k])) for k in METRIC_NAMES}
        return cls(**vals, n=int(kv["n"]), target_name=kv.get("target_name", ""))


def mse_loss(yhat, y) -> Tensor:
    yhat = as_tensor(yhat)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape or yhat.size < 1:
        raise DimensionError(f"mse_loss: prediction {yhat.shape} vs target {y.shape}")
    return mean_all(square(sub(yhat, y)))


def compute_metrics(yhat, y, target_name: str = "") -> MetricsReport:
    """NMAE and NRMSE as percent of the target range, MAPE in percent
    (``None`` if any target is zero), and R^2 about the target mean."""
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if yhat.shape != y.shape:
        raise DimensionError(f"compute_metrics: {yhat.shape} predictions vs {y.shape} targets")
    if y.size < 2:
        raise InvalidArgumentError("need at least two samples for metrics")
    rng = float(y.max() - y.min())
    if rng <= 0:
        raise DegenerateTargetError("target has zero range; NMAE/NRMSE/R2 undefined")
    err = yhat - y
    mae = float(np.mean(np.abs(err)))
    rmse = math.sqrt(float(np.mean(err * err)))
    mape = None if np.any(y == 0) else 100.0 * float(np.mean(np.abs(err) / np.abs(y)))
    sse = float(np.sum(err * err))
    sst = float(np.sum((y - y.mean()) ** 2))
    return MetricsReport(nmae=100.0 * mae / rng, nrmse=100.0 * rmse / rng, mape=mape,
                         r2=1.0 - sse / sst, n=int(y.size), target_name=target_name)


# --------------------------------------------------------------------------
# training


@dataclass
class History:
    epoch: list[int] = field(default_factory=list)
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    batch_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def append(self, epoch, train_mse, val_mse, batch_loss=float("nan")):
        self.epoch.append(epoch)
        self.train_mse.append(train_mse)
        self.val_mse.append(val_mse)
        self.batch_loss.append(batch_loss)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mse", "val_mse"])
            for row in zip(self.epoch, self.train_mse, self.val_mse):
                w.writerow([row[0], repr(row[1]), repr(row[2])])

    @classmethod
    def read_csv(cls, path) -> "History":
        h = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                h.append(int(row["epoch"]), float(row["train_mse"]), float(row["val_mse"]))
        return h


def _eval_mse(ds: WindowedDataset, N, params, cfg) -> float:
    if len(ds) == 0:
        return float("nan")
    err = predict(ds.windows, N, params, cfg) - ds.targets
    return float(np.mean(err * err))


def train(cfg: ModelConfig, params: ModelParams, N, train_ds: WindowedDataset,
          val_ds: WindowedDataset, tcfg: TrainConfig) -> tuple[ModelParams, History]:
    """Mini-batch Adam on the MSE loss.

    The history records eval-mode (dropout off) MSE on the training and
    validation sets after every epoch, with row 0 taken at initialization;
    the dropout-mode mini-batch loss is kept in ``History.batch_loss``. On
    return ``params`` hold the values of the epoch with the lowest validation
    loss.
    """
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise InvalidArgumentError("training and validation sets must be non-empty")
    if train_ds.windows.shape[1:] != (cfg.D, cfg.W):
        raise DimensionError(f"windows {train_ds.windows.shape[1:]} do not match model ({cfg.D}, {cfg.W})")
    N = np.asarray(N, dtype=np.float64)
    flat = params.flat()
    state = AdamState.for_params(flat, lr=tcfg.lr)
    shuffle_seq, drop_seq = np.random.SeedSequence(tcfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    drop_rng = np.random.default_rng(drop_seq)

    hist = History()
    best_val = _eval_mse(val_ds, N, params, cfg)
    hist.append(0, _eval_mse(train_ds, N, params, cfg), best_val)
    best = params.copy_values()
    stale = 0
    n = len(train_ds)
    for epoch in range(1, tcfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for b, s in enumerate(range(0, n, tcfg.batch_size)):
            idx = order[s:s + tcfg.batch_size]
            with Tape() as tape:
                pred = forward(train_ds.windows[idx], N, params, cfg, train=True, rng=drop_rng)
                loss = mse_loss(pred, train_ds.targets[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergenceError("non-finite training loss", epoch=epoch, batch=b, lr=tcfg.lr)
            grads = backward(tape, loss, flat)
            adam_step(flat, grads, state)
            total += value * idx.size
        val = _eval_mse(val_ds, N, params, cfg)
        if not math.isfinite(val):
            raise DivergenceError("non-finite validation loss", epoch=epoch, lr=tcfg.lr)
        tr = _eval_mse(train_ds, N, params, cfg)
        hist.append(epoch, tr, val, total / n)
        log.debug("epoch %d train_mse=%.6g val_mse=%.6g", epoch, tr, val)
        if val < best_val:
            best_val, best, stale = val, params.copy_values(), 0
            hist.best_epoch = epoch
        else:
            stale += 1
            if tcfg.patience is not None and stale >= tcfg.patience:
                log.info("early stop at epoch %d (best %d)", epoch, hist.best_epoch)
                break
    params.load_values(best)
    return params, hist


# --------------------------------------------------------------------------
# ridge baseline


@dataclass(frozen=True)
class RidgeModel:
    coef: np.ndarray
    intercept: float
    lam: float

    def predict(self, windows) -> np.ndarray:
        X = np.asarray(windows, dtype=np.float64).reshape(len(windows), -1)
        return X @ self.coef + self.intercept


def fit_ridge(X, y, lam: float = 1.0) -> RidgeModel:
    """Closed-form ridge with an unpenalized intercept."""
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise InvalidArgumentError(f"ridge lambda must be non-negative, got {lam}")
    xm, ym = X.mean(axis=0), float(y.mean())
    Xc = X - xm
    A = Xc.T @ Xc + lam * np.eye(X.shape[1])
    if lam == 0 and np.linalg.matrix_rank(A) < A.shape[0]:
        raise NumericalError("normal matrix is singular with lambda=0; use lambda > 0")
    try:
        coef = np.linalg.solve(A, Xc.T @ (y - ym))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"ridge solve failed ({exc}); use lambda > 0") from exc
    return RidgeModel(coef=coef, intercept=ym - float(xm @ coef), lam=lam)


def ridge_baseline(train_ds: WindowedDataset, test_ds: WindowedDataset, lam: float = 1.0,
                   stats: Standardizer | None = None, target_name: str = ""):
    """Ridge on flattened windows; metrics on the test split in original units."""
    model = fit_ridge(train_ds.flat(), train_ds.targets, lam)
    yhat, y = model.predict(test_ds.windows), test_ds.targets
    if stats is not None:
        yhat, y = stats.inverse_target(yhat), stats.inverse_target(y)
    return model, compute_metrics(yhat, y, target_name)


# --------------------------------------------------------------------------
# full pipeline


@dataclass
class ExperimentResult:
    model_cfg: ModelConfig
    params: ModelParams
    N: np.ndarray
    stats: Standardizer
    history: History
    test: MetricsReport
    val: MetricsReport
    hypergraph: hgm.Hypergraph
    train_nodes: np.ndarray  # D x T_train standardized training series
    ridge: MetricsReport | None = None


@dataclass(frozen=True)
class Prepared:
    stats: Standardizer
    train: WindowedDataset
    val: WindowedDataset
    test: WindowedDataset
    nodes: np.ndarray


def prepare(series: SensorSeries, W: int, ratios=(0.6, 0.2, 0.2), stats: Standardizer | None = None,
            stride: int = 1) -> Prepared:
    """Split, standardize with training statistics, and window each split."""
    parts = split_chronological(series, ratios, window=W)
    if stats is None:
        stats = Standardizer.fit(parts[0])
    std = [stats.transform(p) for p in parts]
    ds = [make_windows(p, W, stride, split=name, stats=stats)
          for p, name in zip(std, ("train", "val", "test"))]
    return Prepared(stats, *ds, nodes=std[0].values.T.copy())


def evaluate(prep_split: WindowedDataset, N, params, cfg, stats: Standardizer, target_name=""):
    yhat = stats.inverse_target(predict(prep_split.windows, N, params, cfg))
    return compute_metrics(yhat, stats.inverse_target(prep_split.targets), target_name)


def run_experiment(series: SensorSeries, model_cfg: ModelConfig, tcfg: TrainConfig, k: int = 4,
                   weighted_degree: bool = False, ratios=(0.6, 0.2, 0.2),
                   with_ridge: bool = False, ridge_lambda: float = 1.0) -> ExperimentResult:
    """Split -> standardize -> hypergraph from the training split -> train -> test metrics."""
    if series.D != model_cfg.D:
        raise DimensionError(f"data has {series.D} sensors, model expects {model_cfg.D}")
    prep = prepare(series, model_cfg.W, ratios)
    hg = hgm.build_hypergraph(prep.nodes, k)
    N = hgm.normalized_adjacency(hg, weighted_degree=weighted_degree).N
    params = init_params(model_cfg, seed=tcfg.seed)
    params, hist = train(model_cfg, params, N, prep.train, prep.val, tcfg)
    test = evaluate(prep.test, N, params, model_cfg, prep.stats, series.target_name)
    val = evaluate(prep.val, N, params, model_cfg, prep.stats, series.target_name)
    ridge = None
    if with_ridge:
        _, ridge = ridge_baseline(prep.train, prep.test, ridge_lambda, prep.stats, series.target_name)
    return ExperimentResult(model_cfg, params, N, prep.stats, hist, test, val, hg, prep.nodes, ridge)


# --------------------------------------------------------------------------
# sweeps

SWEEP_COLUMNS = ("kernel_size", "mixer_blocks", "status", "nmae", "nrmse", "mape", "r2", "n",
                 "best_epoch", "error")


def _sweep_point(args):
    series, model_cfg, tcfg, k, weighted_degree, ratios = args
    row = {"kernel_size": model_cfg.kernel_size, "mixer_blocks": model_cfg.mixer_blocks}
    try:
        res = run_experiment(series, model_cfg, tcfg, k, weighted_degree, ratios)
    except (STHCSSError, ValueError, ArithmeticError) as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return row
    m = res.test
    row.update(status="ok", nmae=m.nmae, nrmse=m.nrmse, mape=m.mape, r2=m.r2, n=m.n,
               best_epoch=res.history.best_epoch, error="")
    return row


def hyperparameter_sweep(series: SensorSeries, base: dict, tcfg: TrainConfig, kernels=None,
                         mixers=None, k: int = 4, weighted_degree: bool = False,
                         ratios=(0.6, 0.2, 0.2), n_jobs: int = 1) -> list[dict]:
    """Train and evaluate one model per (kernel_size, mixer_blocks) grid point.

    ``base`` holds the remaining :class:`ModelConfig` fields. Grid points that
    fail (bad config, divergence) become rows with ``status=failed``.
    """
    kernels = list(kernels) if kernels is not None else [base.get("kernel_size", 7)]
    mixers = list(mixers) if mixers is not None else [base.get("mixer_blocks", 2)]
    if not kernels or not mixers:
        raise InvalidArgumentError("sweep grid must not be empty")
    jobs, rows = [], []
    for kern in kernels:
        for mix in mixers:
            try:
                cfg = ModelConfig(**{**base, "kernel_size": kern, "mixer_blocks": mix})
            except (STHCSSError, ValueError) as exc:
                rows.append((len(jobs) + len(rows), {"kernel_size": kern, "mixer_blocks": mix,
                                                     "status": "failed", "error": str(exc)}))
                continue
            jobs.append((len(jobs) + len(rows), (series, cfg, tcfg, k, weighted_degree, ratios)))
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_sweep_point, [a for _, a in jobs]))
    else:
        results = [_sweep_point(a) for _, a in jobs]
    rows += [(pos, r) for (pos, _), r in zip(jobs, results)]
    rows.sort(key=lambda t: t[0])
    return [{c: r.get(c, "") for c in SWEEP_COLUMNS} for _, r in rows]


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("undefined" if k == "mape" and r.get("status") == "ok" and r[k] is None
                            else (repr(r[k]) if isinstance(r[k], float) else r[k]))
                        for k in SWEEP_COLUMNS})
