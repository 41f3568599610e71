"""SOLO ordering service: one sequencer, arrival order, timeout/size block cutting."""
from __future__ import annotations

import threading
from collections import deque

from .endorsement import Expr, evaluate
from .errors import OrdererBusy, PolicyUnsatisfied
from .tx import Block, CutReason, Transaction

DEFAULT_BLOCK_TIMEOUT = 0.1
DEFAULT_MAX_BLOCK_TXS = 500


class SoloOrderer:
    def __init__(self, tip_height: int, tip_digest: bytes, *,
                 block_timeout: float = DEFAULT_BLOCK_TIMEOUT, max_count: int = DEFAULT_MAX_BLOCK_TXS):
        if block_timeout <= 0 or max_count < 1:
            raise ValueError("block_timeout must be > 0 and max_count >= 1")
        self.block_timeout = block_timeout
        self.max_count = max_count
        self._height = tip_height
        self._prev = tip_digest
        self._queue: deque[tuple[Transaction, float]] = deque()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._queue)

    def submit(self, tx: Transaction, now: float, policy: Expr | None = None) -> bool:
        """Queue an endorsed transaction; admission checks the claimed endorsers only.

        Signatures are verified at commit, where bad ones are stripped.
        """
        if not tx.endorsements:
            raise PolicyUnsatisfied("transaction carries no endorsements")
        if policy is not None and not evaluate(policy, (e.endorser for e in tx.endorsements)):
            raise PolicyUnsatisfied(f"endorsers {sorted({e.endorser for e in tx.endorsements})} do not satisfy policy")
        with self._lock:
            self._queue.append((tx, now))
        return True

    def deadline(self) -> float | None:
        """Time at which the pending batch times out, or None if idle."""
        with self._lock:
            return self._queue[0][1] + self.block_timeout if self._queue else None

    def cut_block(self, now: float) -> Block | None:
        with self._lock:
            if not self._queue:
                return None
            if len(self._queue) >= self.max_count:
                reason = CutReason.MAX_COUNT
            elif now - self._queue[0][1] >= self.block_timeout - 1e-9:
                reason = CutReason.TIMEOUT
            else:
                return None
            return self._make(reason, now, min(len(self._queue), self.max_count))

    def flush(self, now: float) -> Block | None:
        """Cut whatever is pending regardless of the timeout."""
        with self._lock:
            if not self._queue:
                return None
            return self._make(CutReason.FLUSH, now, min(len(self._queue), self.max_count))

    def config_block(self, config: bytes, now: float) -> Block:
        with self._lock:
            if self._queue:
                raise OrdererBusy("flush pending transactions before a configuration change")
            self._height += 1
            block = Block(self._height, self._prev, CutReason.CONFIG, now, (), config)
            self._prev = block.digest
            return block

    def _make(self, reason: CutReason, now: float, count: int) -> Block:
        txs = tuple(self._queue.popleft()[0] for _ in range(count))
        self._height += 1
        block = Block(self._height, self._prev, reason, now, txs)
        self._prev = block.digest
        return block
