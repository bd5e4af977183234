"""Pure-Python event engine; import-time fallback for the compiled core.

Semantics are identical to the Cython engine in ``_engine.pyx``: the same
slot encoding, the same occupancy index, the same (time, particle) event
ordering, and the same RNG consumption (one uniform per renewal, turned
into an exponential gap by inverse CDF). Given equal seeds the two engines
produce bit-identical trajectories.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


class Engine:
    """Move-to-front event loop over a growing-front slot array.

    Each jump assigns the jumper a fresh leftmost slot, so rank queries are
    prefix counts over an occupancy bitmap indexed by a Fenwick tree of
    64-slot word popcounts. When fresh slots run out the occupied slots are
    compacted back to the top of the array in O(capacity).
    """

    def __init__(
        self,
        rates,
        init_ranks,
        next_times,
        forced_times,
        forced_ids,
        capacity_factor,
        rng,
        log_events,
    ):
        n = len(rates)
        self.n = n
        self.cap = int(capacity_factor) * n
        if self.cap <= n:
            raise ValueError("capacity factor must leave room for fresh slots")
        self.t_now = 0.0
        self.n_jumped = 0
        self.total_events = 0
        self.rates = [float(w) for w in rates]
        self.inv_rates = [1.0 / float(w) for w in rates]
        self.first_jump = [math.nan] * n
        self.jump_count = [0] * n
        self._slots = [self.cap - n + int(r) - 1 for r in init_ranks]
        self.next_fresh = self.cap - n - 1
        self._nwords = (self.cap + 63) >> 6
        self._bits = [0] * self._nwords
        for s in self._slots:
            self._bits[s >> 6] |= 1 << (s & 63)
        self._fen = self._build_fenwick()
        self.event_log = [] if log_events else None
        self.rng = rng
        if next_times is not None:
            self._heap = [(float(t), i) for i, t in enumerate(next_times)]
            heapq.heapify(self._heap)
            self._forced_t = self._forced_i = None
        else:
            self._heap = None
            self._forced_t = [float(t) for t in forced_times]
            self._forced_i = [int(i) for i in forced_ids]
            self._forced_pos = 0

    # -- occupancy index -----------------------------------------------------

    def _build_fenwick(self):
        fen = [0] + [w.bit_count() for w in self._bits]
        for i in range(1, self._nwords + 1):
            j = i + (i & -i)
            if j <= self._nwords:
                fen[j] += fen[i]
        return fen

    def _fen_add(self, word, d):
        i = word + 1
        while i <= self._nwords:
            self._fen[i] += d
            i += i & -i

    def _fen_prefix(self, word):
        # occupied count in words [0, word)
        s = 0
        i = word
        while i > 0:
            s += self._fen[i]
            i -= i & -i
        return s

    def rank_of(self, i):
        """Current rank of particle i (1 = front), an O(log n) prefix count."""
        slot = self._slots[i]
        word = slot >> 6
        mask = (1 << ((slot & 63) + 1)) - 1
        return self._fen_prefix(word) + (self._bits[word] & mask).bit_count()

    # -- event processing ------------------------------------------------------

    def _jump(self, i, t_ev):
        if self.next_fresh < 0:
            self._rebuild()
        old = self._slots[i]
        self._bits[old >> 6] &= ~(1 << (old & 63))
        self._fen_add(old >> 6, -1)
        new = self.next_fresh
        self.next_fresh -= 1
        self._bits[new >> 6] |= 1 << (new & 63)
        self._fen_add(new >> 6, 1)
        self._slots[i] = new
        if self.jump_count[i] == 0:
            self.first_jump[i] = t_ev
            self.n_jumped += 1
        self.jump_count[i] += 1
        self.total_events += 1
        if self.event_log is not None:
            self.event_log.append((t_ev, i))

    def _rebuild(self):
        # Compact occupied slots to the top of the array, preserving order.
        order = np.argsort(np.asarray(self._slots))
        base = self.cap - self.n
        for r, i in enumerate(order):
            self._slots[i] = base + r
        self._bits = [0] * self._nwords
        for s in self._slots:
            self._bits[s >> 6] |= 1 << (s & 63)
        self._fen = self._build_fenwick()
        self.next_fresh = base - 1

    def advance_to(self, t):
        """Process every event with time <= t; returns the event count."""
        t = float(t)
        if t < self.t_now:
            raise ValueError("cannot advance backwards in time")
        processed = 0
        if self._heap is not None:
            heap = self._heap
            rng = self.rng
            inv = self.inv_rates
            while heap:
                tt, ii = heap[0]
                if tt > t:
                    break
                self._jump(ii, tt)
                # reciprocal multiply, matching the compiled engine bit for bit
                gap = -math.log1p(-rng.random())
                heapq.heapreplace(heap, (tt + gap * inv[ii], ii))
                processed += 1
        else:
            while self._forced_pos < len(self._forced_t):
                tt = self._forced_t[self._forced_pos]
                if tt > t:
                    break
                self._jump(self._forced_i[self._forced_pos], tt)
                self._forced_pos += 1
                processed += 1
        self.t_now = t
        return processed

    # -- exported state ----------------------------------------------------------

    @property
    def slots(self):
        return np.asarray(self._slots, dtype=np.int64)

    @property
    def first_jump_times(self):
        return np.asarray(self.first_jump, dtype=float)

    @property
    def jump_counts(self):
        return np.asarray(self.jump_count, dtype=np.int64)
