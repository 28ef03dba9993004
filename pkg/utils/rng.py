"""Named, splittable random streams.

Every stream is a Philox counter-based generator whose 128-bit key is the
BLAKE2b digest of ``"<seed>:<stream>"``. Two generators built from the same
(seed, stream) pair produce the same draws on every platform, so masks and
splits can be regenerated from the manifest alone.
"""

import hashlib

import numpy as np

MAX_SEED = 2 ** 64 - 1


class SeededRng:
    ALGORITHM = "philox4x64-blake2b128-v1"

    def __init__(self, seed: int, stream: str = "root"):
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
            raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
        seed = int(seed)
        if not 0 <= seed <= MAX_SEED:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self._seed = seed
        self._stream = str(stream)
        digest = hashlib.blake2b(f"{seed}:{self._stream}".encode("utf-8"), digest_size=16).digest()
        key = int.from_bytes(digest, "little")
        self._generator = np.random.Generator(np.random.Philox(key=key))

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def stream(self) -> str:
        return self._stream

    def split(self, name) -> "SeededRng":
        """Child stream ``<stream>/<name>``, independent of this stream's position"""
        return SeededRng(self._seed, f"{self._stream}/{name}")

    def random(self, size=None):
        """Uniform floats in [0, 1)"""
        return self._generator.random(size)

    def uniform(self, low: float, high: float, size=None):
        return self._generator.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers in the closed interval [low, high]"""
        return self._generator.integers(low, high, size=size, endpoint=True)

    def choice(self, options):
        options = list(options)
        return options[int(self.integers(0, len(options) - 1))]

    def permutation(self, n: int):
        return self._generator.permutation(n)

    def __repr__(self):
        return f"SeededRng(seed={self._seed}, stream={self._stream!r})"
