"""Self-describing JSON model checkpoints.

Layout: {"model_config": {...}, "train_config": {...} | null,
"arrays": [{"name", "shape", "data"}]} with row-major flattened values.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Optional, Tuple

import numpy as np

from .models import ModelConfig, ModelParams
from .training import TrainConfig


def save_checkpoint(
    path, params: ModelParams, train_config: Optional[TrainConfig] = None
) -> None:
    doc = {
        "model_config": dataclasses.asdict(params.config),
        "train_config": dataclasses.asdict(train_config) if train_config else None,
        "arrays": [
            {"name": k, "shape": list(v.shape), "data": v.reshape(-1).tolist()}
            for k, v in sorted(params.arrays.items())
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> Tuple[ModelParams, Optional[TrainConfig]]:
    with open(path) as f:
        doc = json.load(f)
    config = ModelConfig(**doc["model_config"])
    arrays = {
        a["name"]: np.array(a["data"], dtype=float).reshape(a["shape"])
        for a in doc["arrays"]
    }
    tc = TrainConfig(**doc["train_config"]) if doc.get("train_config") else None
    return ModelParams(config=config, arrays=arrays), tc
