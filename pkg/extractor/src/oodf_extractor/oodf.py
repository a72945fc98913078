"""Writer for the OODF feature-file layout (little-endian).

Layout: magic "OODF", u8 version (1), u32 layer count, per layer a u16
name length + UTF-8 name + u32 dimension, u64 sample count, u8 label
flag, then float32 rows sample-major layer-minor, then one label byte
per sample if the flag is set. Kept as an independent implementation of
the wire format so this package only couples to the consumer at the
byte level.
"""

import struct
from typing import Optional, Sequence

import numpy as np

MAGIC = b"OODF"
VERSION = 1


def write_oodf(
    path,
    layer_names: Sequence[str],
    layers: Sequence[np.ndarray],
    labels: Optional[np.ndarray] = None,
) -> None:
    if len(layer_names) != len(layers) or not layers:
        raise ValueError("need one name per layer and at least one layer")
    n = layers[0].shape[0]
    for name, arr in zip(layer_names, layers):
        if arr.ndim != 2 or arr.shape[0] != n:
            raise ValueError(f"layer {name!r} has inconsistent shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"layer {name!r} contains non-finite values")
    parts = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(layers))]
    for name, arr in zip(layer_names, layers):
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.shape[1]))
    parts.append(struct.pack("<Q", n))
    parts.append(struct.pack("<B", 1 if labels is not None else 0))
    stacked = np.hstack([np.ascontiguousarray(a, dtype="<f4") for a in layers])
    parts.append(np.ascontiguousarray(stacked, dtype="<f4").tobytes())
    if labels is not None:
        labels = np.asarray(labels, dtype=np.uint8)
        if labels.shape != (n,):
            raise ValueError("labels length must match the sample count")
        parts.append(labels.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))
