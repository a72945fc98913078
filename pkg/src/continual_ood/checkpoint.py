"""Per-timestep checkpoint files for the continual engine.

Self-describing binary container, little-endian throughout:

    bytes 0-3   magic "OODC"
    byte  4     u8 version (1)
    u32         config JSON length, then that many UTF-8 bytes
    u32         timestep t
    f64         alpha
    f64         threshold
    f64 x 4     fewshot mean, fewshot std, strong mean, strong std
    u32 L       layer count, then L f64 lambda values
    u64 n       deploy sample count, then n u8 pseudo-labels (0=ID, 1=OOD)
    u32 W       weight count, then W f64 strong-learner weights (bias last)

The JSON block holds the full experiment configuration, so a checkpoint
can be interpreted without the config file that produced it.
"""

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .engine import EngineState
from .errors import CorruptionError, FormatError

MAGIC = b"OODC"
VERSION = 1


@dataclass(frozen=True)
class CheckpointData:
    """The decoded contents of one checkpoint file."""

    config: dict
    t: int
    alpha: float
    threshold: float
    fewshot_stats: tuple
    strong_stats: tuple
    lambdas: np.ndarray
    deploy_labels: np.ndarray
    strong_weights: np.ndarray


def save_checkpoint(state: EngineState, path) -> None:
    config_json = json.dumps(dataclasses.asdict(state.config), sort_keys=True).encode(
        "utf-8"
    )
    lambdas = np.asarray(state.fewshot.lambdas, dtype="<f8")
    labels = np.asarray(state.deploy_labels, dtype=np.uint8)
    weights = np.asarray(state.strong.weights, dtype="<f8")
    parts = [
        MAGIC,
        struct.pack("<B", VERSION),
        struct.pack("<I", len(config_json)),
        config_json,
        struct.pack("<I", state.t),
        struct.pack("<d", state.alpha),
        struct.pack("<d", state.threshold),
        struct.pack(
            "<dddd",
            state.fewshot_stats[0],
            state.fewshot_stats[1],
            state.strong_stats[0],
            state.strong_stats[1],
        ),
        struct.pack("<I", lambdas.size),
        lambdas.tobytes(),
        struct.pack("<Q", labels.size),
        labels.tobytes(),
        struct.pack("<I", weights.size),
        weights.tobytes(),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as fh:
        data = fh.read()
    offset = 0

    def take(count: int, what: str) -> bytes:
        nonlocal offset
        if offset + count > len(data):
            raise CorruptionError(f"checkpoint truncated while reading {what}", offset)
        chunk = data[offset : offset + count]
        offset += count
        return chunk

    def unpack(fmt: str, what: str):
        return struct.unpack(fmt, take(struct.calcsize(fmt), what))

    magic = take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    (version,) = unpack("<B", "version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (config_len,) = unpack("<I", "config length")
    config = json.loads(take(config_len, "config JSON").decode("utf-8"))
    (t,) = unpack("<I", "timestep")
    (alpha,) = unpack("<d", "alpha")
    (threshold,) = unpack("<d", "threshold")
    fs_mean, fs_std, st_mean, st_std = unpack("<dddd", "score statistics")
    (n_lambda,) = unpack("<I", "lambda count")
    lambdas = np.frombuffer(take(8 * n_lambda, "lambdas"), dtype="<f8").copy()
    (n_labels,) = unpack("<Q", "label count")
    labels = np.frombuffer(take(n_labels, "labels"), dtype=np.uint8).copy()
    (n_weights,) = unpack("<I", "weight count")
    weights = np.frombuffer(take(8 * n_weights, "weights"), dtype="<f8").copy()
    if offset != len(data):
        raise CorruptionError("trailing bytes after checkpoint payload", offset)
    return CheckpointData(
        config=config,
        t=t,
        alpha=alpha,
        threshold=threshold,
        fewshot_stats=(fs_mean, fs_std),
        strong_stats=(st_mean, st_std),
        lambdas=lambdas,
        deploy_labels=labels,
        strong_weights=weights,
    )
