"""Append-only block log: one 4-byte-length-prefixed encoded block per record."""
from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Iterator

from .tx import Block

_LEN = struct.Struct(">I")


class BlockLog:
    def __init__(self, path):
        self.path = Path(path)

    def append(self, record: bytes) -> None:
        with open(self.path, "ab") as f:
            f.write(_LEN.pack(len(record)) + record)
            f.flush()
            os.fsync(f.fileno())

    def records(self) -> Iterator[bytes]:
        if not self.path.exists():
            return
        with open(self.path, "rb") as f:
            while True:
                head = f.read(4)
                if not head:
                    return
                if len(head) < 4:
                    raise ValueError(f"{self.path}: truncated record header")
                (n,) = _LEN.unpack(head)
                body = f.read(n)
                if len(body) != n:
                    raise ValueError(f"{self.path}: truncated record")
                yield body

    def blocks(self) -> Iterator[Block]:
        return (Block.decode(r) for r in self.records())
