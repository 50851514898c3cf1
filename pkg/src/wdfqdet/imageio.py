"""Binary PGM (P5) / PPM (P6) reading and writing."""
import numpy as np

from .errors import ExtentError, ImageFormatError, PairingError


def _tokens(blob, count, start):
    out, pos = [], start
    while len(out) < count:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        end = pos
        while end < len(blob) and not blob[end:end + 1].isspace() and blob[end:end + 1] != b"#":
            end += 1
        if end == pos:
            raise ImageFormatError("truncated header")
        out.append(blob[pos:end])
        pos = end
    return out, pos


def decode_pnm(blob):
    """Decode P5/P6 bytes into a (C, H, W) float array scaled to [0, 1]."""
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported magic {magic!r}; expected P5 or P6")
    try:
        (w, h, maxval), pos = _tokens(blob, 3, 2)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageFormatError("non-integer header field") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise ImageFormatError(f"bad header values {width}x{height} maxval {maxval}")
    if pos >= len(blob) or not blob[pos:pos + 1].isspace():
        raise ImageFormatError("header must end with one whitespace byte")
    pos += 1
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * channels * dtype.itemsize
    if len(blob) - pos < need:
        raise ImageFormatError(f"pixel data truncated: need {need} bytes, have {len(blob) - pos}")
    pixels = np.frombuffer(blob, dtype=dtype, count=width * height * channels, offset=pos)
    img = pixels.reshape(height, width, channels).transpose(2, 0, 1).astype(np.float64)
    return img / maxval


def read_pnm(path):
    with open(path, "rb") as fh:
        return decode_pnm(fh.read())


def encode_pgm(gray):
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode() + gray.tobytes()


def encode_ppm(rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)  # (H, W, 3)
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()


def write_bytes(path, blob):
    with open(path, "wb") as fh:
        fh.write(blob)


def as_three_channels(img):
    return np.repeat(img, 3, axis=0) if img.shape[0] == 1 else img


def load_pair(rgb_path, ir_path):
    """Read an RGB/IR pair as two (1, 3, H, W) tensors in [0, 1]."""
    rgb = as_three_channels(read_pnm(rgb_path))
    ir = as_three_channels(read_pnm(ir_path))
    if rgb.shape != ir.shape:
        raise PairingError(f"RGB extent {rgb.shape[1:]} differs from IR extent {ir.shape[1:]}")
    h, w = rgb.shape[1:]
    if h % 64 or w % 64:
        raise ExtentError(f"image extents {h}x{w} must be multiples of 64")
    return rgb[None], ir[None]
