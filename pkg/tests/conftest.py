import hashlib
import json
import os
import shlex
import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from models import ImageEntry, MaskAssignment, RunManifest


def _write_png(path, array):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array)).save(path, format="PNG")
    return path


GOLDEN_DIR = Path(__file__).parent / "golden"


def _cells_digest(mask):
    cells = np.ascontiguousarray(mask.cells, dtype=np.uint8)
    return hashlib.sha256(repr(cells.shape).encode() + np.packbits(cells).tobytes()).hexdigest()


@pytest.fixture
def cells_digest():
    """SHA-256 of the packed mask cells plus their shape"""
    return _cells_digest


@pytest.fixture
def golden():
    """Compare a JSON-able value with tests/golden/<name>.json.

    A missing file is recorded from the current value and the test is skipped;
    commit the file to freeze it. UPDATE_GOLDEN=1 re-records.
    """
    def check(name, value):
        value = json.loads(json.dumps(value))
        path = GOLDEN_DIR / f"{name}.json"
        if path.is_file() and not os.environ.get("UPDATE_GOLDEN"):
            assert value == json.loads(path.read_text(encoding="utf-8")), f"drift from golden {path.name}"
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(value, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        pytest.skip(f"recorded golden {path.name}")
    return check


@pytest.fixture
def write_png():
    """Write a uint8 array with Pillow directly, bypassing the toolkit codecs"""
    return _write_png


@pytest.fixture
def natural_images(tmp_path):
    """Ten smooth 32x32 RGB images (gradients plus mild noise), ids img_000..img_009"""
    def make(root=None, n=10, size=32):
        root = Path(root or tmp_path / "images")
        rs = np.random.RandomState(1234)
        yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
        for i in range(n):
            phase = rs.uniform(0, 2 * np.pi, 3)
            channels = [0.5 + 0.35 * np.sin(2 * np.pi * (xx * (c + 1) + yy) / 2 + phase[c]) for c in range(3)]
            img = np.stack(channels, axis=-1) + rs.normal(0, 0.03, (size, size, 3))
            _write_png(root / f"img_{i:03d}.png", np.clip(np.rint(img * 255), 0, 255).astype(np.uint8))
        return root
    return make


@pytest.fixture
def manifest_fixture(tmp_path):
    """Manifest over constant 16x16 gray images with hand-placed masks, paths relative to tmp_path.

    rows: list of (image_id, gray value 0..255, mask_type, number of masked rows)
    """
    def make(rows):
        images, assignments = [], []
        for image_id, value, mask_type, masked in rows:
            _write_png(tmp_path / "gt" / f"{image_id}.png", np.full((16, 16), value, dtype=np.uint8))
            mask = np.zeros((16, 16), dtype=np.uint8)
            mask[:masked] = 255
            _write_png(tmp_path / "masks" / f"{image_id}.png", mask)
            images.append(ImageEntry(id=image_id, image=f"gt/{image_id}.png"))
            assignments.append(MaskAssignment(image_id=image_id, mask_type=mask_type, mask_path=f"masks/{image_id}.png"))
        manifest = RunManifest(images=images, mask_assignments=assignments)
        manifest.save(tmp_path / "manifest.json")
        return manifest
    return make


@pytest.fixture
def make_plugin(tmp_path):
    """Write a Python plug-in stub; returns the command line that runs it"""
    def make(body, name="plugin"):
        script = tmp_path / f"{name}.py"
        script.write_text("import json, sys\nfrom pathlib import Path\n" + textwrap.dedent(body), encoding="utf-8")
        return shlex.join([sys.executable, str(script)])
    return make
