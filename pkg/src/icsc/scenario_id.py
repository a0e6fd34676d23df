"""CNN scenario identification from a single normalized CSI snapshot."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .link_sim import SCENARIOS, derive_seed, measure_csi
from .nnet import FORMAT_VERSION, Sequential, TrainConfig, softmax, train
from .phy.ofdm import CsiEstimate
from .validation import check_csi_batch, check_labels

N_TONES = 53


@dataclass(frozen=True)
class CsiSample:
    values: np.ndarray          # (53, 2) real/imag after normalization
    label: str | None = None


def normalize_csi(csi, label: str | None = None) -> CsiSample:
    """Remove scale and global phase: unit RMS magnitude, strongest tone real-positive."""
    h = csi.tones if isinstance(csi, CsiEstimate) else np.asarray(csi, dtype=complex)
    if h.shape != (N_TONES,):
        raise ValueError(f"expected {N_TONES} tones, got {h.shape}")
    rms = np.sqrt(np.mean(np.abs(h) ** 2))
    if not rms > 0:
        raise ValueError("cannot normalize all-zero CSI")
    h = h / rms
    peak = h[np.argmax(np.abs(h))]
    h = h * np.conj(peak) / np.abs(peak)
    return CsiSample(np.stack([h.real, h.imag], axis=1), label)


def classifier_specs(n_conv=5, filters=32, kernel=9, n_classes=3, in_channels=2) -> list[dict]:
    specs = []
    ch = in_channels
    for _ in range(n_conv):
        specs += [{"type": "conv1d", "in_channels": ch, "filters": filters, "kernel": kernel},
                  {"type": "relu"}]
        ch = filters
    specs += [{"type": "gap"}, {"type": "dense", "in_features": ch, "units": n_classes}]
    return specs


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, CsiSample):
        X = [X]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], CsiSample):
        X = np.stack([s.values for s in X])
    return check_csi_batch(X, N_TONES)


class ScenarioClassifier(ClassifierMixin, BaseEstimator):
    """5-layer 1-D CNN over the 53x2 CSI grid, global-average-pooled into a dense softmax head."""

    def __init__(self, n_conv=5, filters=32, kernel=9, batch_size=100, epochs=50,
                 learning_rate=1e-3, validation_fraction=0.2, seed=0, verbose=False):
        self.n_conv = n_conv
        self.filters = filters
        self.kernel = kernel
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.validation_fraction = validation_fraction
        self.seed = seed
        self.verbose = verbose

    def fit(self, X, y):
        X = _as_matrix(X)
        y = check_labels(y, len(X), min_classes=3)
        classes = np.unique(y)
        self.classes_ = classes
        codes = np.searchsorted(classes, y)
        rng = np.random.default_rng(derive_seed(self.seed, "split"))
        order = rng.permutation(len(X))
        n_val = int(round(self.validation_fraction * len(X)))
        val, tr = order[:n_val], order[n_val:]
        self.model_ = Sequential.from_specs(
            classifier_specs(self.n_conv, self.filters, self.kernel, classes.size),
            (N_TONES, 2), seed=self.seed)
        self.history_ = {"loss": [], "val_accuracy": []}

        def on_epoch(epoch, loss):
            self.history_["loss"].append(loss)
            acc = float(np.mean(self._predict_codes(X[val]) == codes[val])) if n_val else float("nan")
            self.history_["val_accuracy"].append(acc)
            if self.verbose:
                print(f"epoch {epoch + 1:3d} loss {loss:.4f} val_acc {acc:.4f}")

        config = TrainConfig(self.batch_size, self.epochs, self.learning_rate, self.seed)
        train(self.model_, X[tr], codes[tr], config, on_epoch=on_epoch)
        self.validation_accuracy_ = self.history_["val_accuracy"][-1] if self.epochs else float("nan")
        self.validation_indices_ = val
        return self

    def _logits(self, X, chunk=1000):
        return np.concatenate([self.model_.forward(X[i:i + chunk]) for i in range(0, len(X), chunk)])

    def _predict_codes(self, X):
        return np.argmax(self._logits(X), axis=1)

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return softmax(self._logits(_as_matrix(X)))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self) -> dict:
        check_is_fitted(self, "model_")
        params = {k: v for k, v in self.get_params().items() if k != "verbose"}
        return {"version": FORMAT_VERSION, "kind": "scenario_classifier", "params": params,
                "classes": [str(c) for c in self.classes_],
                "validation_accuracy": float(self.validation_accuracy_),
                "model": self.model_.to_dict()}

    @classmethod
    def from_dict(cls, d) -> ScenarioClassifier:
        if d.get("version") != FORMAT_VERSION or d.get("kind") != "scenario_classifier":
            raise ValueError("not a scenario classifier artifact of a supported version")
        clf = cls(**d["params"])
        clf.classes_ = np.array(d["classes"])
        clf.validation_accuracy_ = d.get("validation_accuracy", float("nan"))
        clf.model_ = Sequential.from_dict(d["model"])
        return clf

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> ScenarioClassifier:
        return cls.from_dict(json.loads(Path(path).read_text()))


def classify(model: ScenarioClassifier, sample) -> tuple[str, np.ndarray]:
    if isinstance(sample, CsiEstimate):
        sample = normalize_csi(sample)
    probs = model.predict_proba(sample)[0]
    return str(model.classes_[int(np.argmax(probs))]), probs


def classify_window(model: ScenarioClassifier, samples) -> str:
    """Majority vote over several snapshots; ties go to the earliest class in ``classes_``."""
    labels = model.predict(samples)
    counts = [(labels == c).sum() for c in model.classes_]
    return str(model.classes_[int(np.argmax(counts))])


def evaluate_si(model: ScenarioClassifier, n_trials: int = 500, snr_db=20.0, doppler_hz: float = 50.0,
                seed: int = 0, scenarios=SCENARIOS) -> dict[str, tuple[int, int]]:
    """Per-scenario (total, correct) over fresh channel draws.

    ``snr_db`` is a fixed value or a (low, high) range sampled uniformly per
    trial. Seeds derive from ``seed`` under the "si_eval" key, disjoint from
    dataset generation.
    """
    out = {}
    for s_idx, scenario in enumerate(scenarios):
        samples = []
        for t in range(n_trials):
            trial_seed = derive_seed(seed, "si_eval", s_idx, t)
            snr = snr_db
            if np.ndim(snr_db):
                snr = np.random.default_rng(derive_seed(trial_seed, "snr")).uniform(*snr_db)
            samples.append(normalize_csi(measure_csi(scenario, snr, trial_seed, doppler_hz)).values)
        pred = model.predict(np.stack(samples))
        out[scenario] = (n_trials, int(np.sum(pred == scenario)))
    return out
