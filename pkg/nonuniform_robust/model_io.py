"""Model file persistence (JSON, bit-exact float round trip)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .data import Dataset, StandardizationStats
from .errors import ParseError, SchemaError
from .manifest import atomic_write
from .net import MlpModel
from .omega import OmegaTransform

MODEL_FORMAT = "nonuniform-robust-model"
MODEL_VERSION = 1


@dataclass
class ModelBundle:
    """A trained network plus the preprocessing and constraint it was trained with."""

    model: MlpModel
    standardization: Optional[StandardizationStats] = None
    omega: Optional[OmegaTransform] = None
    train_epsilon: Optional[float] = None
    p: float = 2.0

    def model_space(self, d: Dataset) -> Dataset:
        """
        Map raw data into the feature space the model was trained in.

        Files written before the stats were recorded pass through unchanged.

        Raises
        ------
        SchemaError
            If the recorded feature names differ from the dataset's.
        """
        stats = self.standardization
        if stats is None:
            return d
        if stats.feature_names and tuple(stats.feature_names) != tuple(d.feature_names):
            raise SchemaError(
                "Dataset columns differ from the ones the model was trained on",
                suggestion="Load the data with the same --label and --drop options used for training.",
            )
        return stats.apply(d)

    def to_dict(self) -> dict:
        m = self.model
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "layer_dims": list(m.layer_dims),
            "dropout_rate": m.dropout_rate,
            "weights": [w.tolist() for w in m.weights],
            "biases": [b.tolist() for b in m.biases],
            "standardization": self.standardization.to_dict() if self.standardization else None,
            "omega": self.omega.to_dict() if self.omega else None,
            "train_epsilon": self.train_epsilon,
            # JSON has no infinity literal
            "p": "inf" if self.p == np.inf else self.p,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelBundle":
        if payload.get("format") != MODEL_FORMAT:
            raise SchemaError(f"Not a model file (format={payload.get('format')!r})")
        if payload.get("version") != MODEL_VERSION:
            raise SchemaError(f"Unsupported model file version {payload.get('version')}")
        try:
            model = MlpModel(
                tuple(payload["layer_dims"]),
                tuple(np.asarray(w, dtype=np.float64) for w in payload["weights"]),
                tuple(np.asarray(b, dtype=np.float64) for b in payload["biases"]),
                float(payload.get("dropout_rate", 0.0)),
            )
        except KeyError as e:
            raise SchemaError(f"Model file lacks '{e.args[0]}'") from e
        stats = payload.get("standardization")
        omega = payload.get("omega")
        p = payload.get("p", 2.0)
        return cls(
            model=model,
            standardization=StandardizationStats.from_dict(stats) if stats else None,
            omega=OmegaTransform.from_dict(omega) if omega else None,
            train_epsilon=payload.get("train_epsilon"),
            p=np.inf if p == "inf" else float(p),
        )


def save_model(bundle: ModelBundle, path: Union[str, Path]) -> None:
    with atomic_write(path) as f:
        json.dump(bundle.to_dict(), f)
        f.write("\n")


def load_model(path: Union[str, Path]) -> ModelBundle:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"Could not read model file {path}: {e}") from e
    return ModelBundle.from_dict(payload)
