"""Run configuration: one JSON document, dotted --set overrides, presets.

The ``desk`` preset is sized for CPU training within the acceptance budgets.
``paper`` records the full-scale hyperparameters from the source system for
reference; it is not expected to complete on a desktop CPU.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .assembler import InferenceConfig
from .denoiser import DenoiserConfig, LoraConfig
from .encoder import EncoderConfig
from .errors import SchemaError
from .metrics import MetricConfig

DESK = {
    "seed": 7,
    "threads": 4,
    "paths": {
        "dataset": "runs/desk/dataset",
        "lora_dataset": "runs/desk/lora_dataset",
        "checkpoints": "runs/desk/checkpoints",
        "results": "runs/desk/results",
        "reports": "runs/desk/reports",
        "logs": "runs/desk/logs",
    },
    "data": {
        "count": 200,
        "categories": ["cube", "sphere", "cylinder"],
        "points_per_object": 512,
        "min_fragments": 2,
        "max_fragments": 5,
        "cuts": [1, 3],
        "val_fraction": 0.2,
        "lora_category": "slab",
        "lora_train_count": 10,
        "lora_val_count": 24,
    },
    "encoder": {
        "feature_dim": 32,
        "knn": 16,
        "layers": 3,
        "epsilon": 1.0,
        "lr": 1e-3,
        "epochs": 40,
        "stop_f1": 0.97,
    },
    "denoiser": {
        "embed_dim": 128,
        "layers": 3,
        "heads": 4,
        "ffn_dim": 256,
        "pe_bands": 8,
        "time_bands": 8,
        "tokens_per_object": 144,
        "lr": 2e-4,
        "epochs": 150,
        "batch_problems": 4,
    },
    "lora": {"rank": 8, "alpha": 16.0, "dropout": 0.1, "lr": 1e-3, "epochs": 120},
    "inference": {"pre_steps": 1, "refine_steps": 20, "anchor_policy": "largest", "seed": 99},
    "metrics": {"pa_threshold": 0.01, "rotation_convention": "euler_rmse"},
}

# full-scale reference values (not runnable at desk scale): 1.9M-fragment
# pretraining corpus, PTv3-class backbone with 64 feature channels, 6x512
# transformer with 8 heads, 1500 epochs at lr 2e-4 halved at 900/1200,
# M=5000 points per object, LoRA rank 128 / alpha 256 / dropout 0.1
PAPER = copy.deepcopy(DESK)
PAPER["data"].update({"count": 10474, "points_per_object": 5000})
PAPER["encoder"].update({"feature_dim": 64, "epochs": 400, "stop_f1": None})
PAPER["denoiser"].update(
    {"embed_dim": 512, "layers": 6, "heads": 8, "ffn_dim": 2048,
     "tokens_per_object": 5000, "epochs": 1500, "batch_problems": 128}
)
PAPER["lora"].update({"rank": 128, "alpha": 256.0})

PRESETS = {"desk": DESK, "paper": PAPER}


def resolve_config(preset: str = "desk", config_path=None, overrides=()) -> dict:
    """Preset -> optional JSON file -> --set key=value overrides (applied in order)."""
    if preset not in PRESETS:
        raise SchemaError(f"unknown preset '{preset}' (choose from {sorted(PRESETS)})")
    cfg = copy.deepcopy(PRESETS[preset])
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise SchemaError(f"config file not found: {path}", path=path)
        _deep_update(cfg, json.loads(path.read_text()))
    for item in overrides:
        if "=" not in item:
            raise SchemaError(f"--set expects key=value, got '{item}'")
        key, value = item.split("=", 1)
        _set_dotted(cfg, key.strip(), _parse_value(value.strip()))
    return cfg


def _deep_update(base: dict, extra: dict):
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def _set_dotted(cfg: dict, dotted: str, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def tree_hash(root) -> str:
    """Content hash over a directory tree (paths + bytes), or one file."""
    root = Path(root)
    h = hashlib.sha256()
    if root.is_file():
        h.update(root.read_bytes())
        return h.hexdigest()
    for f in sorted(root.rglob("*")):
        if f.is_file():
            h.update(f.relative_to(root).as_posix().encode())
            h.update(f.read_bytes())
    return h.hexdigest()


def encoder_config(cfg: dict) -> EncoderConfig:
    e = cfg["encoder"]
    return EncoderConfig(
        feature_dim=e["feature_dim"], knn=e["knn"], layers=e["layers"],
        epsilon=e["epsilon"], lr=e["lr"], epochs=e["epochs"],
    )


def denoiser_config(cfg: dict) -> DenoiserConfig:
    d = cfg["denoiser"]
    return DenoiserConfig(
        embed_dim=d["embed_dim"], layers=d["layers"], heads=d["heads"],
        ffn_dim=d["ffn_dim"], pe_bands=d["pe_bands"], time_bands=d["time_bands"],
        tokens_per_object=d["tokens_per_object"], lr=d["lr"], epochs=d["epochs"],
        batch_problems=d["batch_problems"],
    )


def lora_config(cfg: dict) -> LoraConfig:
    l = cfg["lora"]
    return LoraConfig(rank=l["rank"], alpha=l["alpha"], dropout=l["dropout"],
                      lr=l["lr"], epochs=l["epochs"])


def inference_config(cfg: dict) -> InferenceConfig:
    i = cfg["inference"]
    return InferenceConfig(pre_steps=i["pre_steps"], refine_steps=i["refine_steps"],
                           anchor_policy=i["anchor_policy"], seed=i["seed"])


def metric_config(cfg: dict) -> MetricConfig:
    m = cfg["metrics"]
    return MetricConfig(pa_threshold=m["pa_threshold"], rotation_convention=m["rotation_convention"])
