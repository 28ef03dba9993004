"""8-bit PNG codecs for images, masks and semantic maps.

The IHDR chunk is inspected before decoding so that 16-bit and palette or
alpha PNGs are rejected instead of being silently converted by Pillow.
"""

import struct
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from exceptions import ImageIOError, NonBinaryMaskError
from models import ImageBuffer, MaskGrid, SemanticMap

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
COLOR_TYPES = {0: "grayscale", 2: "RGB", 3: "palette", 4: "grayscale+alpha", 6: "RGBA"}
CHANNELS = {0: 1, 2: 3}  # supported color types


def read_png_header(path):
    """Return (width, height, bit_depth, color_type) from the IHDR chunk"""
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(path, "missing file")
    with open(path, "rb") as f:
        head = f.read(33)
    if len(head) < 33 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise ImageIOError(path, "corrupt stream (not a PNG file)")
    width, height, bit_depth, color_type = struct.unpack(">IIBB", head[16:26])
    return width, height, bit_depth, color_type


def _decode(path, expect_gray=False):
    width, height, bit_depth, color_type = read_png_header(path)
    if bit_depth != 8:
        raise ImageIOError(path, f"unsupported bit depth {bit_depth} (only 8-bit PNG is supported)")
    if color_type not in CHANNELS or (expect_gray and color_type != 0):
        wanted = "grayscale" if expect_gray else "grayscale or RGB"
        raise ImageIOError(path, f"unsupported color type {COLOR_TYPES.get(color_type, color_type)} (expected {wanted})")
    try:
        with Image.open(path) as im:
            im.load()
            arr = np.array(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise ImageIOError(path, f"corrupt stream ({e})") from e
    if arr.shape[:2] != (height, width):
        raise ImageIOError(path, f"corrupt stream (decoded {arr.shape[:2]}, header says {(height, width)})")
    return arr


def _encode(arr, path):
    path = Path(path)
    try:
        Image.fromarray(arr).save(path, format="PNG")
    except (OSError, ValueError) as e:
        raise ImageIOError(path, f"unwritable path ({e})") from e


def load_image(path) -> ImageBuffer:
    arr = _decode(path)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return ImageBuffer(arr.astype(np.float64) / 255.0)


def save_image(image: ImageBuffer, path):
    arr = np.rint(image.data * 255.0).astype(np.uint8)
    _encode(arr[:, :, 0] if image.channels == 1 else arr, path)


def load_mask(path) -> MaskGrid:
    arr = _decode(path, expect_gray=True)
    bad = int(np.count_nonzero((arr != 0) & (arr != 255)))
    if bad:
        raise NonBinaryMaskError(path, bad)
    return MaskGrid((arr == 255).astype(np.uint8))


def save_mask(mask: MaskGrid, path):
    _encode((mask.cells * 255).astype(np.uint8), path)


def load_semantic(path) -> SemanticMap:
    return SemanticMap(_decode(path, expect_gray=True).astype(np.int64))


def save_semantic(semantic: SemanticMap, path):
    if semantic.labels.max() > 255:
        raise ImageIOError(path, "semantic labels above 255 do not fit an 8-bit PNG")
    _encode(semantic.labels.astype(np.uint8), path)
