"""Out-of-distribution monitor for scene rasters.

A single-hidden-layer autoencoder (sigmoid hidden units, identity output) is
trained by seeded mini-batch gradient descent to reconstruct the rasters
seen during development; the per-scene reconstruction MSE against a
calibrated threshold separates known from novel scenes. The knowledge base
persists the training rasters and every model version, and flagged scenes
recorded by the incident recorder feed the retraining loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import records
from .records import register, require
from .rng import stream
from .scene import RasterWindow, SceneRaster


class TrainingDiverged(RuntimeError):
    pass


class DigestMismatch(RuntimeError):
    """Model does not correspond to the knowledge base it claims."""


@dataclass
class Autoencoder:
    w1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (d, h)
    b2: np.ndarray  # (d,)

    @classmethod
    def initialize(cls, d: int, h: int, seed: int) -> "Autoencoder":
        require(h < d, "latent size must be smaller than the input")
        rng = stream(seed, "ae-init")
        return cls(w1=rng.uniform(-0.1, 0.1, (h, d)),
                   b1=np.zeros(h),
                   w2=rng.uniform(-0.1, 0.1, (d, h)),
                   b2=np.zeros(d))

    @property
    def d(self) -> int:
        return self.w1.shape[1]

    @property
    def h(self) -> int:
        return self.w1.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.w1.T + self.b1
        a = 1.0 / (1.0 + np.exp(-z))
        return a @ self.w2.T + self.b2

    def loss(self, x: np.ndarray) -> float:
        err = self.forward(x) - x
        return float(np.mean(err * err))

    def loss_and_gradients(self, x: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Backprop through the two layers; loss is the MSE averaged over
        both batch and feature dimensions."""
        n, d = x.shape
        z = x @ self.w1.T + self.b1
        a = 1.0 / (1.0 + np.exp(-z))
        y = a @ self.w2.T + self.b2
        err = y - x
        loss = float(np.mean(err * err))
        dy = (2.0 / (n * d)) * err
        dw2 = dy.T @ a
        db2 = dy.sum(axis=0)
        da = dy @ self.w2
        dz = da * a * (1.0 - a)
        dw1 = dz.T @ x
        db1 = dz.sum(axis=0)
        return loss, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}

    def scores(self, x: np.ndarray) -> np.ndarray:
        err = self.forward(x) - x
        return np.mean(err * err, axis=1)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 500
    batch: int = 16
    seed: int = 0
    hidden: int = 16


def train(x: np.ndarray, cfg: TrainConfig) -> tuple[Autoencoder, list[float]]:
    """Seeded mini-batch gradient descent on the reconstruction MSE.

    Returns the model and the loss curve (full-set loss before training and
    after each epoch). Aborts on a non-finite loss.
    """
    x = np.asarray(x, dtype=np.float64)
    require(x.ndim == 2 and x.shape[0] >= 10, "training needs >= 10 samples")
    ae = Autoencoder.initialize(x.shape[1], cfg.hidden, cfg.seed)
    shuffler = stream(cfg.seed, "ae-shuffle")
    losses = [ae.loss(x)]
    for _ in range(cfg.epochs):
        order = shuffler.permutation(x.shape[0])
        for lo in range(0, x.shape[0], cfg.batch):
            batch = x[order[lo:lo + cfg.batch]]
            loss, grads = ae.loss_and_gradients(batch)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {len(losses)}; reduce lr")
            ae.w1 -= cfg.lr * grads["w1"]
            ae.b1 -= cfg.lr * grads["b1"]
            ae.w2 -= cfg.lr * grads["w2"]
            ae.b2 -= cfg.lr * grads["b2"]
        epoch_loss = ae.loss(x)
        if not math.isfinite(epoch_loss):
            raise TrainingDiverged(f"non-finite loss at epoch {len(losses)}")
        losses.append(epoch_loss)
    return ae, losses


def nearest_rank_quantile(values: list[float] | np.ndarray, q: float) -> float:
    vals = sorted(float(v) for v in values)
    require(len(vals) > 0, "quantile of empty set")
    rank = max(1, min(len(vals), math.ceil(q * len(vals))))
    return vals[rank - 1]


CALIBRATION_SAFETY_FACTOR = 1.5


def calibrate_threshold(ae: Autoencoder, x: np.ndarray, q: float = 0.99) -> float:
    """Threshold = nearest-rank q-quantile of the training scores times a
    fixed safety factor."""
    return CALIBRATION_SAFETY_FACTOR * nearest_rank_quantile(ae.scores(x), q)


@register("am_verdict")
@dataclass(frozen=True)
class AmVerdict:
    tick: int
    score: float | None      # None when no model is configured
    flag: bool
    model_version: int

    def to_payload(self) -> dict:
        return {"tick": self.tick, "score": self.score, "flag": self.flag,
                "model_version": self.model_version}

    @classmethod
    def from_payload(cls, p: dict) -> "AmVerdict":
        return cls(tick=p["tick"], score=p["score"], flag=p["flag"],
                   model_version=p["model_version"])


@dataclass
class AnomalyModel:
    ae: Autoencoder
    tau: float
    q: float
    training_digest: str
    version: int
    window: RasterWindow
    train_cfg: TrainConfig = field(default_factory=TrainConfig)

    def reconstruct(self, raster: SceneRaster) -> tuple[np.ndarray, float]:
        x = raster.flat()[None, :]
        require(x.shape[1] == self.ae.d,
                f"raster size {x.shape[1]} does not match model input {self.ae.d}")
        y = self.ae.forward(x)
        err = y - x
        return y[0], float(np.mean(err * err))

    def detect(self, raster: SceneRaster) -> AmVerdict:
        require(self.tau > 0.0, "model is not calibrated")
        _, score = self.reconstruct(raster)
        return AmVerdict(tick=raster.tick, score=score, flag=score > self.tau,
                         model_version=self.version)

    # ---- versioned text persistence (decimal weight arrays + digest header)

    def save(self, path: str | Path) -> None:
        weight_lines = [
            json.dumps(self.ae.w1.tolist()),
            json.dumps(self.ae.b1.tolist()),
            json.dumps(self.ae.w2.tolist()),
            json.dumps(self.ae.b2.tolist()),
        ]
        weights_digest = records.content_digest("\n".join(weight_lines))
        header = records.canonical_json({
            "type": "anomaly_model", "version": self.version, "tau": self.tau,
            "q": self.q, "training_digest": self.training_digest,
            "hidden": self.ae.h, "cells": self.window.cells,
            "window": self.window.to_payload(), "weights_digest": weights_digest,
            "lr": self.train_cfg.lr, "epochs": self.train_cfg.epochs,
            "batch": self.train_cfg.batch, "seed": self.train_cfg.seed,
        })
        Path(path).write_text(header + "\n" + "\n".join(weight_lines) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AnomalyModel":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        require(len(lines) >= 5, f"{path}: truncated model file")
        header = json.loads(lines[0])
        require(header.get("type") == "anomaly_model", f"{path}: not a model file")
        weight_lines = lines[1:5]
        digest = records.content_digest("\n".join(weight_lines))
        if digest != header["weights_digest"]:
            raise DigestMismatch(f"{path}: weights digest mismatch")
        ae = Autoencoder(w1=np.array(json.loads(weight_lines[0]), dtype=np.float64),
                         b1=np.array(json.loads(weight_lines[1]), dtype=np.float64),
                         w2=np.array(json.loads(weight_lines[2]), dtype=np.float64),
                         b2=np.array(json.loads(weight_lines[3]), dtype=np.float64))
        return cls(ae=ae, tau=header["tau"], q=header["q"],
                   training_digest=header["training_digest"],
                   version=header["version"],
                   window=RasterWindow.from_payload(header["window"]),
                   train_cfg=TrainConfig(lr=header["lr"], epochs=header["epochs"],
                                         batch=header["batch"], seed=header["seed"]))


class KnowledgeBase:
    """Persisted store of development-covered rasters plus model versions.

    Layout: <dir>/rasters/<digest>.rec (one raster record per file, named by
    content digest so duplicates collapse) and <dir>/models/v<N>.model.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.raster_dir = self.root / "rasters"
        self.model_dir = self.root / "models"
        self.raster_dir.mkdir(parents=True, exist_ok=True)
        self.model_dir.mkdir(parents=True, exist_ok=True)

    def add_raster(self, raster: SceneRaster) -> bool:
        """Store one raster; returns False when an identical one exists."""
        line = records.encode(raster)
        name = records.content_digest(line)[:24] + ".rec"
        target = self.raster_dir / name
        if target.exists():
            return False
        target.write_text(line + "\n", encoding="utf-8")
        return True

    def raster_files(self) -> list[Path]:
        return sorted(self.raster_dir.glob("*.rec"))

    def rasters(self) -> list[SceneRaster]:
        out = []
        for f in self.raster_files():
            recs = records.read_records(f)
            require(len(recs) == 1 and isinstance(recs[0], SceneRaster),
                    f"{f}: expected exactly one raster record")
            out.append(recs[0])
        return out

    def digest(self) -> str:
        return records.content_digest("\n".join(f.stem for f in self.raster_files()))

    def model_versions(self) -> list[int]:
        out = []
        for f in self.model_dir.glob("v*.model"):
            try:
                out.append(int(f.stem[1:]))
            except ValueError:
                continue
        return sorted(out)

    def model_path(self, version: int) -> Path:
        return self.model_dir / f"v{version}.model"

    def latest_model(self) -> AnomalyModel | None:
        versions = self.model_versions()
        if not versions:
            return None
        return AnomalyModel.load(self.model_path(versions[-1]))


def train_on_kb(kb: KnowledgeBase, cfg: TrainConfig, q: float = 0.99) -> AnomalyModel:
    """Train + calibrate a new model version on the knowledge-base rasters
    and persist it alongside the previous versions."""
    rasters = kb.rasters()
    require(len(rasters) >= 10, "knowledge base needs >= 10 rasters")
    window = rasters[0].window
    for r in rasters:
        require(r.window == window, "knowledge base mixes raster windows")
    x = np.stack([r.flat() for r in rasters])
    ae, _losses = train(x, cfg)
    tau = calibrate_threshold(ae, x, q)
    version = (kb.model_versions() or [0])[-1] + 1
    model = AnomalyModel(ae=ae, tau=tau, q=q, training_digest=kb.digest(),
                         version=version, window=window, train_cfg=cfg)
    model.save(kb.model_path(version))
    return model


def retrain_with_recordings(base: AnomalyModel | None, kb: KnowledgeBase,
                            recordings: list[SceneRaster],
                            cfg: TrainConfig | None = None,
                            q: float | None = None) -> AnomalyModel:
    """Extend the knowledge base with recorded rasters and train the next
    model version on the union. The base model must match the knowledge
    base's current content, otherwise the recordings would silently stack
    on a different training set than the model was built from."""
    require(len(recordings) > 0, "no recordings to retrain with")
    if base is not None and base.training_digest != kb.digest():
        raise DigestMismatch("model training_digest does not match the knowledge base")
    for r in recordings:
        kb.add_raster(r)
    eff_cfg = cfg or (base.train_cfg if base is not None else TrainConfig())
    eff_q = q if q is not None else (base.q if base is not None else 0.99)
    return train_on_kb(kb, eff_cfg, eff_q)
