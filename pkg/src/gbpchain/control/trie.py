"""Path-compressed binary (Patricia) trie over bit-string keys.

Exact lookups on 64-bit (source ‖ destination) keys visit at most 65 nodes:
every step down strictly lengthens the matched prefix, from 0 bits at the
root to 64 at a leaf. Prefix entries (shorter keys) share the same structure,
which gives longest-prefix matching on the destination half for free.
"""
from __future__ import annotations

from typing import Any, Iterator, NamedTuple

PAIR_BITS = 64


def pair_key(src_eid: int, dst_eid: int) -> int:
    return (src_eid << 32) | dst_eid


def _bits(key: int, length: int, start: int, stop: int) -> int:
    """Bits [start, stop) of a `length`-bit key, MSB first."""
    return (key >> (length - stop)) & ((1 << (stop - start)) - 1)


def _common_prefix(a: int, alen: int, b: int, blen: int) -> int:
    n = min(alen, blen)
    diff = (a >> (alen - n)) ^ (b >> (blen - n))
    return n - diff.bit_length()


_EMPTY = object()


class _Node:
    __slots__ = ("bits", "length", "zero", "one", "value")

    def __init__(self, bits: int, length: int, value: Any = _EMPTY):
        self.bits = bits
        self.length = length
        self.zero: _Node | None = None
        self.one: _Node | None = None
        self.value = value

    def child(self, bit: int) -> "_Node | None":
        return self.one if bit else self.zero

    def set_child(self, bit: int, node: "_Node | None") -> None:
        if bit:
            self.one = node
        else:
            self.zero = node

    def children(self) -> list["_Node"]:
        return [c for c in (self.zero, self.one) if c is not None]


class LookupResult(NamedTuple):
    value: Any
    visits: int


class PatriciaTrie:
    def __init__(self):
        self._root = _Node(0, 0)
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def insert(self, key: int, length: int, value: Any) -> None:
        if length < 0 or not 0 <= key < (1 << length):
            raise ValueError(f"key does not fit in {length} bits")
        node = self._root
        while True:
            if node.length == length:
                if node.value is _EMPTY:
                    self._size += 1
                node.value = value
                return
            bit = _bits(key, length, node.length, node.length + 1)
            child = node.child(bit)
            if child is None:
                node.set_child(bit, _Node(key, length, value))
                self._size += 1
                return
            common = _common_prefix(key, length, child.bits, child.length)
            if common >= child.length:
                node = child
                continue
            # split: new interior node at the divergence point
            mid = _Node(_bits(key, length, 0, common), common)
            node.set_child(bit, mid)
            mid.set_child(_bits(child.bits, child.length, common, common + 1), child)
            if common == length:
                mid.value = value
            else:
                mid.set_child(_bits(key, length, common, common + 1), _Node(key, length, value))
            self._size += 1
            return

    def _find(self, key: int, length: int) -> tuple[list[_Node], int]:
        path = [self._root]
        node = self._root
        while node.length < length:
            child = node.child(_bits(key, length, node.length, node.length + 1))
            if child is None or child.length > length or _bits(key, length, 0, child.length) != child.bits:
                return path, len(path)
            path.append(child)
            node = child
        return path, len(path)

    def lookup(self, key: int, length: int = PAIR_BITS) -> LookupResult:
        """Exact match; value is None on a miss.

        Descends on single bit tests and compares the full key once at the
        end: the stored key, if present, lies on the path its own bits select.
        """
        node = self._root
        visits = 1
        while node.length < length:
            node = node.one if (key >> (length - node.length - 1)) & 1 else node.zero
            if node is None:
                return LookupResult(None, visits)
            visits += 1
        if node.length != length or node.bits != key or node.value is _EMPTY:
            return LookupResult(None, visits)
        return LookupResult(node.value, visits)

    def longest_prefix(self, key: int, length: int = PAIR_BITS, min_length: int = 0) -> tuple[int, Any] | None:
        """Deepest stored entry whose key is a prefix of `key` (and at least min_length bits)."""
        path, _ = self._find(key, length)
        for node in reversed(path):
            if node.length < min_length:
                return None
            if node.value is not _EMPTY:
                return node.length, node.value
        return None

    def remove(self, key: int, length: int = PAIR_BITS) -> bool:
        path, _ = self._find(key, length)
        node = path[-1]
        if node.length != length or node.value is _EMPTY:
            return False
        node.value = _EMPTY
        self._size -= 1
        # restore radix shape: drop empty leaves, splice out single-child interiors
        for i in range(len(path) - 1, 0, -1):
            n, parent = path[i], path[i - 1]
            if n.value is not _EMPTY:
                break
            kids = n.children()
            bit = _bits(n.bits, n.length, parent.length, parent.length + 1)
            if not kids:
                parent.set_child(bit, None)
            elif len(kids) == 1:
                parent.set_child(bit, kids[0])
                break
            else:
                break
        return True

    def items(self) -> Iterator[tuple[int, int, Any]]:
        stack = [self._root]
        while stack:
            n = stack.pop()
            if n.value is not _EMPTY:
                yield n.bits, n.length, n.value
            stack.extend(reversed(n.children()))

    def max_depth(self) -> int:
        """Largest number of nodes on any root-to-node path."""
        best = 0
        stack = [(self._root, 1)]
        while stack:
            n, d = stack.pop()
            best = max(best, d)
            stack.extend((c, d + 1) for c in n.children())
        return best

    def check_invariants(self) -> None:
        """Raise AssertionError if the radix structure is broken."""
        count = 0
        stack = [self._root]
        while stack:
            n = stack.pop()
            if n.value is not _EMPTY:
                count += 1
            kids = n.children()
            if n is not self._root and n.value is _EMPTY and len(kids) < 2:
                raise AssertionError(f"valueless node with {len(kids)} children at length {n.length}")
            for bit, c in ((0, n.zero), (1, n.one)):
                if c is None:
                    continue
                if c.length <= n.length:
                    raise AssertionError("child prefix not longer than parent")
                if _bits(c.bits, c.length, 0, n.length) != n.bits:
                    raise AssertionError("child does not extend parent prefix")
                if _bits(c.bits, c.length, n.length, n.length + 1) != bit:
                    raise AssertionError("child on wrong branch")
                stack.append(c)
        if count != self._size:
            raise AssertionError(f"size {self._size} but {count} stored values")


class PolicyTrie:
    """Authorization pairs keyed on (source eid ‖ destination eid)."""

    def __init__(self):
        self._trie = PatriciaTrie()

    def __len__(self) -> int:
        return len(self._trie)

    def insert(self, src_eid: int, dst_eid: int, record) -> None:
        self._trie.insert(pair_key(src_eid, dst_eid), PAIR_BITS, record)

    def insert_prefix(self, src_eid: int, dst_prefix: int, prefix_len: int, record) -> None:
        if not 0 <= prefix_len <= 32:
            raise ValueError("prefix length must be 0..32")
        key = (src_eid << prefix_len) | (dst_prefix >> (32 - prefix_len))
        self._trie.insert(key, 32 + prefix_len, record)

    def remove(self, src_eid: int, dst_eid: int) -> bool:
        return self._trie.remove(pair_key(src_eid, dst_eid), PAIR_BITS)

    def lookup(self, src_eid: int, dst_eid: int) -> LookupResult:
        return self._trie.lookup(pair_key(src_eid, dst_eid), PAIR_BITS)

    def lookup_lpm(self, src_eid: int, dst_eid: int):
        """Longest destination prefix stored for this source; (prefix_len, record) or None."""
        hit = self._trie.longest_prefix(pair_key(src_eid, dst_eid), PAIR_BITS, min_length=32)
        if hit is None:
            return None
        return hit[0] - 32, hit[1]

    def pairs(self) -> dict[tuple[int, int], Any]:
        return {(k >> 32, k & 0xFFFFFFFF): v for k, length, v in self._trie.items() if length == PAIR_BITS}

    def max_depth(self) -> int:
        return self._trie.max_depth()

    def check_invariants(self) -> None:
        self._trie.check_invariants()
