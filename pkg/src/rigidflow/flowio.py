"""File formats: Middlebury .flo flow fields, grayscale PFM maps, P6 PPM and
PNG images, JSON documents and sample-directory manifests.

All writer/reader pairs round-trip bit-exactly (at 8-bit quantization for
PPM/PNG).  Layouts are hand-verifiable; see the byte-level tests.
"""

import hashlib
import json
import time

import numpy as np
from PIL import Image as PILImage

from .errors import FormatError

FLO_MAGIC = np.float32(202021.25)
MANIFEST_VERSION = 1
# .flo dimension guard: W*H must stay addressable as 4-byte payload pairs
MAX_FLO_PIXELS = 1 << 30


def write_flo(path, flow):
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    if w <= 0 or h <= 0 or w * h > MAX_FLO_PIXELS:
        raise FormatError(f"unsupported .flo dimensions {w}x{h}")
    with open(path, "wb") as f:
        f.write(np.array([FLO_MAGIC], dtype="<f4").tobytes())
        f.write(np.array([w, h], dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flo(path):
    with open(path, "rb") as f:
        header = f.read(12)
        if len(header) != 12:
            raise FormatError(f"{path}: truncated .flo header")
        magic = np.frombuffer(header, dtype="<f4", count=1)[0]
        if magic != FLO_MAGIC:
            raise FormatError(f"{path}: bad .flo magic {magic!r}")
        w, h = np.frombuffer(header[4:], dtype="<i4")
        if w <= 0 or h <= 0 or int(w) * int(h) > MAX_FLO_PIXELS:
            raise FormatError(f"{path}: bad .flo dimensions {w}x{h}")
        payload = f.read()
    expected = 8 * int(w) * int(h)
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(int(h), int(w), 2)
    return data.astype(np.float64)


def write_pfm(path, values):
    """Grayscale PFM ('Pf'), scale -1.0 (little-endian), rows bottom-up."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError(f"PFM payload must be 2-D, got {values.shape}")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(values[::-1], dtype="<f4").tobytes())


def _read_token(f):
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise FormatError("unexpected end of PFM header")
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path):
    with open(path, "rb") as f:
        kind = _read_token(f)
        if kind == b"PF":
            raise FormatError(f"{path}: color PFM is not supported")
        if kind != b"Pf":
            raise FormatError(f"{path}: not a PFM file (header {kind!r})")
        try:
            w = int(_read_token(f))
            h = int(_read_token(f))
            scale = float(_read_token(f))
        except ValueError as e:
            raise FormatError(f"{path}: malformed PFM header") from e
        if w <= 0 or h <= 0 or scale == 0:
            raise FormatError(f"{path}: bad PFM header values")
        payload = f.read(4 * w * h)
    if len(payload) != 4 * w * h:
        raise FormatError(f"{path}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return data[::-1].astype(np.float64)


def _quantize(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise ValueError(f"image must be (H, W, 1|3), got {image.shape}")
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, image):
    """Binary P6 PPM, maxval 255.  Single-channel input is replicated."""
    q = _quantize(image)
    if q.shape[2] == 1:
        q = np.repeat(q, 3, axis=2)
    h, w = q.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(q.tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        kind = _read_token(f)
        if kind == b"P3":
            raise FormatError(f"{path}: ASCII PPM (P3) is not supported")
        if kind != b"P6":
            raise FormatError(f"{path}: not a binary PPM (header {kind!r})")
        try:
            w = int(_read_token(f))
            h = int(_read_token(f))
            maxval = int(_read_token(f))
        except ValueError as e:
            raise FormatError(f"{path}: malformed PPM header") from e
        if w <= 0 or h <= 0 or maxval != 255:
            raise FormatError(f"{path}: unsupported PPM header values")
        payload = f.read(3 * w * h)
    if len(payload) != 3 * w * h:
        raise FormatError(f"{path}: truncated PPM payload")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return data.astype(np.float64) / 255.0


def write_png(path, image):
    q = _quantize(image)
    if q.shape[2] == 1:
        PILImage.fromarray(q[:, :, 0], mode="L").save(path, format="PNG")
    else:
        PILImage.fromarray(q, mode="RGB").save(path, format="PNG")


def read_png(path):
    with PILImage.open(path) as img:
        arr = np.asarray(img.convert("RGB") if img.mode not in ("L",) else img)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64) / 255.0


def write_image(path, image):
    path = str(path)
    if path.endswith(".ppm"):
        write_ppm(path, image)
    elif path.endswith(".png"):
        write_png(path, image)
    else:
        raise ValueError(f"unsupported image extension: {path}")


def read_image(path):
    path = str(path)
    if path.endswith(".ppm"):
        return read_ppm(path)
    if path.endswith(".png"):
        return read_png(path)
    raise ValueError(f"unsupported image extension: {path}")


def write_mask_png(path, mask):
    write_png(path, np.asarray(mask, dtype=np.float64)[:, :, None])


def read_mask_png(path):
    return read_png(path)[:, :, 0]


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from e


def config_hash(config_dict):
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_manifest(seed, config_dict, files):
    """Manifest for a sample directory; `files` maps role -> filename."""
    return {
        "format_version": MANIFEST_VERSION,
        "seed": int(seed),
        "config_sha256": config_hash(config_dict),
        "config": config_dict,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "files": dict(files),
    }


def check_manifest(manifest):
    version = manifest.get("format_version")
    if version != MANIFEST_VERSION:
        raise FormatError(f"unrecognized manifest format_version {version!r}")
    return manifest
