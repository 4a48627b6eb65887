"""Binary PPM (P6, 8-bit) image files.

Pixels map linearly between bytes and floats: v_float = v_byte / 127.5 - 1,
v_byte = round((v_float + 1) * 127.5) clamped to [0, 255]. Arrays are
(3, H, W) float64 in [-1, 1].
"""

from __future__ import annotations

import numpy as np

__all__ = ["read_ppm", "write_ppm"]


def write_ppm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) image, got {img.shape}")
    _, h, w = img.shape
    data = np.clip(np.rint((img + 1.0) * 127.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.transpose(1, 2, 0).tobytes())  # interleave to RGB rows


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":  # comment to end of line
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P6":
        raise ValueError(f"not a binary PPM (P6) file: magic {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"only 8-bit PPM supported, got maxval {maxval}")
    body = raw[pos : pos + 3 * w * h]
    if len(body) != 3 * w * h:
        raise ValueError(f"truncated PPM: expected {3 * w * h} pixel bytes, got {len(body)}")
    data = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).transpose(2, 0, 1)
    return data.astype(np.float64) / 127.5 - 1.0
