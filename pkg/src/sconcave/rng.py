"""Counter-based random streams derived from a root seed and a label path.

A stream is keyed by a hash of ``(root, path)`` and backed by numpy's
Philox generator, so sibling paths are independent and no generator state
is ever shared between workers.
"""

import hashlib
import json

import numpy as np

MASK64 = (1 << 64) - 1


def _key(root, path):
    payload = json.dumps([int(root) & MASK64, [_label(x) for x in path]], separators=(",", ":"))
    digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def _label(x):
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("boolean path labels are ambiguous; use a string")
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, str):
        return x
    raise TypeError(f"path labels must be str or int, got {type(x).__name__}")


class RngStream:
    """A reproducible random stream identified by ``(root, path)``."""

    def __init__(self, root, path=()):
        self.root = int(root) & MASK64
        self.path = tuple(_label(x) for x in path)
        self.generator = np.random.Generator(np.random.Philox(key=_key(self.root, self.path)))

    def child(self, *labels):
        """Independent stream at ``path + labels``; does not consume draws."""
        return RngStream(self.root, self.path + labels)

    def __repr__(self):
        return f"RngStream(root={self.root}, path={list(self.path)!r})"


def derive_stream(root, path=()):
    """Stream for ``(root, path)``; the empty path is the root stream."""
    return RngStream(root, path)


def as_generator(stream):
    """Accept an :class:`RngStream` or a numpy ``Generator``."""
    if isinstance(stream, RngStream):
        return stream.generator
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected RngStream or numpy Generator, got {type(stream).__name__}")
