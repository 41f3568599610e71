from __future__ import annotations

from typing import Iterator

from ..crypto import lp, u64

Version = tuple[int, int]


class StateStore:
    """Versioned key-value world state. Version = (block height, tx index)."""

    def __init__(self):
        self._data: dict[str, tuple[bytes, Version]] = {}
        self.reads = 0

    def get(self, key: str) -> tuple[bytes, Version] | None:
        self.reads += 1
        return self._data.get(key)

    def value(self, key: str) -> bytes | None:
        entry = self.get(key)
        return None if entry is None else entry[0]

    def version(self, key: str) -> Version | None:
        entry = self.get(key)
        return None if entry is None else entry[1]

    def put(self, key: str, value: bytes, version: Version) -> None:
        old = self._data.get(key)
        if old is not None and old[1] >= version:
            raise ValueError(f"version of {key!r} must increase: {old[1]} -> {version}")
        self._data[key] = (value, version)

    def delete(self, key: str) -> None:
        self._data.pop(key, None)

    def bulk_load(self, items) -> None:
        """Insert (key, value) pairs at version (0, 0) without a chain record; benchmarks only."""
        data = self._data
        for k, v in items:
            data[k] = (v, (0, 0))

    def keys(self, prefix: str = "") -> Iterator[str]:
        return (k for k in list(self._data) if k.startswith(prefix))

    def copy(self) -> "StateStore":
        other = StateStore()
        other._data = dict(self._data)
        return other

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def snapshot(self) -> bytes:
        """Canonical serialization of the whole state, sorted by key."""
        return lp(*(
            lp(k.encode(), v, u64(ver[0]), u64(ver[1]))
            for k, (v, ver) in sorted(self._data.items())
        ))
