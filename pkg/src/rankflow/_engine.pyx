"""Compiled event engine: the hot kernel of the move-to-front simulator.

Mirrors ``_engine_py.Engine`` exactly; both consume one uniform draw per
renewal from the same bit generator and advance the clock with the same
float operations, so trajectories are bit-identical across the two
backends.

Layout notes, all in service of per-event cache behavior at N ~ 10^6:

* per-particle hot state (slot, jump count, first-jump time, reciprocal
  rate) is packed into one 32-byte record, so an event touches one line;
* the pending-event queue is an 8-ary heap, times and ids in parallel
  arrays, stored from physical index 7 with children at 8p - 48, which
  puts every sibling block of keys on one 64-byte line; +inf sentinels
  close the last node and keep the argmin branch-light;
* the occupancy index is a bitmap plus a Fenwick tree over superblocks
  of 64 words (4096 slots), so the per-event update chain walks an array
  three orders of magnitude smaller than the slot space (L1-resident even
  at N = 10^6); rank queries pay up to 63 popcounts inside one superblock
  and are rare (snapshots decode by sorting instead);
* all of the above lives in one arena mapped with MAP_HUGETLB when the
  kernel has huge pages reserved (sysctl vm.nr_hugepages), removing TLB
  pressure from the random-access structures; plain pages otherwise.
"""

import mmap

import numpy as np

cimport cython
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport INFINITY, NAN, log1p
from numpy.random cimport bitgen_t


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil
    void __builtin_prefetch(const void *, ...) nogil


cdef inline int _before(double ta, int ia, double tb, int ib) noexcept nogil:
    # Lexicographic (time, particle) order; index breaks float ties.
    # Bitwise combine keeps the comparison branch-free.
    return (ta < tb) | ((ta == tb) & (ia < ib))


_MAP_HUGETLB = 0x40000  # not exposed by the mmap module on Python 3.10
_HUGE_SIZE = 1 << 21


cdef inline Py_ssize_t _pad64(Py_ssize_t nbytes) noexcept nogil:
    return (nbytes + 63) & ~63


def _alloc_arena(Py_ssize_t nbytes):
    """A zeroed byte buffer, hugetlb-backed if the kernel allows it.

    Returns (owner, uint8 array); the owner must be kept alive. Falls back
    to an ordinary allocation aligned to a cache line.
    """
    cdef Py_ssize_t size = (nbytes + _HUGE_SIZE - 1) & ~(_HUGE_SIZE - 1)
    try:
        m = mmap.mmap(
            -1, size, flags=mmap.MAP_PRIVATE | mmap.MAP_ANONYMOUS | _MAP_HUGETLB
        )
        return m, np.frombuffer(memoryview(m), dtype=np.uint8)[:nbytes]
    except (OSError, ValueError, OverflowError):
        pass
    raw = np.zeros(nbytes + 64, dtype=np.uint8)
    off = (-raw.ctypes.data) % 64
    return raw, raw[off:off + nbytes]


@cython.final
cdef class Engine:
    """Move-to-front event loop over a growing-front slot array.

    Each jump assigns the jumper a fresh leftmost slot, so rank queries are
    prefix counts over an occupancy bitmap indexed by a Fenwick tree of
    64-slot word popcounts. When fresh slots run out the occupied slots are
    compacted back to the top of the array in O(capacity).
    """

    cdef readonly Py_ssize_t n
    cdef readonly Py_ssize_t cap
    cdef readonly double t_now
    cdef readonly Py_ssize_t n_jumped
    cdef readonly long long total_events
    cdef readonly Py_ssize_t next_fresh
    cdef public object event_log
    cdef object rng
    cdef object _keepalive
    cdef bitgen_t *bitgen

    # particle records, 32B: [slot i32 | count i32 | first_jump f64 | inv f64 | pad]
    cdef int[::1] _psi
    cdef double[::1] _psf

    # heap keys (times) and ids in parallel arrays; live at physical 7..n+6
    cdef double[::1] _hf
    cdef int[::1] _hi
    cdef Py_ssize_t _heap_last

    cdef unsigned long long[::1] _bits
    cdef int[::1] _fen
    cdef Py_ssize_t _nwords
    cdef Py_ssize_t _nsuper

    cdef double[::1] _forced_t
    cdef long[::1] _forced_i
    cdef Py_ssize_t _forced_pos
    cdef bint _stochastic

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
        cdef Py_ssize_t i, n = len(rates)
        self.n = n
        self.cap = int(capacity_factor) * n
        if self.cap <= n:
            raise ValueError("capacity factor must leave room for fresh slots")
        self.t_now = 0.0
        self.n_jumped = 0
        self.total_events = 0
        self._nwords = (self.cap + 63) >> 6
        self._nsuper = (self._nwords + 63) >> 6
        self._keepalive = []

        rates = np.ascontiguousarray(rates, dtype=np.float64)
        ranks = np.ascontiguousarray(init_ranks, dtype=np.int64)

        # one arena, 64B-aligned sections: particle records | heap | bitmap | fen
        cdef bint stochastic = next_times is not None
        cdef Py_ssize_t o_ps = 0
        cdef Py_ssize_t o_ht = o_ps + _pad64(32 * n)
        cdef Py_ssize_t o_hi = o_ht + (_pad64(8 * (n + 14)) if stochastic else 0)
        cdef Py_ssize_t o_bits = o_hi + (_pad64(4 * (n + 14)) if stochastic else 0)
        cdef Py_ssize_t o_fen = o_bits + _pad64(8 * self._nwords)
        cdef Py_ssize_t total = o_fen + _pad64(4 * (self._nsuper + 1))
        owner, buf = _alloc_arena(total)
        self._keepalive = [owner, buf]
        ps = buf[o_ps:o_ps + 32 * n]
        self._psf = ps.view(np.float64)
        self._psi = ps.view(np.int32)
        for i in range(n):
            self._psi[8 * i] = <int> (self.cap - n + ranks[i] - 1)
            self._psf[4 * i + 1] = NAN
            self._psf[4 * i + 2] = 1.0 / rates[i]
        self.next_fresh = self.cap - n - 1
        self._bits = buf[o_bits:o_bits + 8 * self._nwords].view(np.uint64)
        self._fen = buf[o_fen:o_fen + 4 * (self._nsuper + 1)].view(np.int32)
        self._rebuild_index()
        self.event_log = [] if log_events else None
        self.rng = rng
        if stochastic:
            self._stochastic = True
            capsule = rng.bit_generator.capsule
            if not PyCapsule_IsValid(capsule, "BitGenerator"):
                raise ValueError("invalid BitGenerator capsule")
            self.bitgen = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")
            hf = buf[o_ht:o_ht + 8 * (n + 14)].view(np.float64)
            hi = buf[o_hi:o_hi + 4 * (n + 14)].view(np.int32)
            hf[:] = INFINITY
            hi[:] = np.iinfo(np.int32).max
            times = np.ascontiguousarray(next_times, dtype=np.float64)
            for i in range(n):
                hf[i + 7] = times[i]
                hi[i + 7] = <int> i
            self._hf = hf
            self._hi = hi
            self._heap_last = n + 6
            self._heapify()
        else:
            self._stochastic = False
            self._forced_t = np.ascontiguousarray(forced_times, dtype=np.float64)
            self._forced_i = np.ascontiguousarray(forced_ids, dtype=np.int64)
            self._forced_pos = 0

    # -- occupancy index -----------------------------------------------------

    cdef void _rebuild_index(self) noexcept:
        cdef Py_ssize_t i, j
        cdef int c
        for i in range(self._nwords):
            self._bits[i] = 0
        for i in range(self.n):
            j = self._psi[8 * i]
            self._bits[j >> 6] |= (<unsigned long long> 1) << (j & 63)
        for i in range(self._nsuper + 1):
            self._fen[i] = 0
        for i in range(1, self._nsuper + 1):
            c = 0
            for j in range((i - 1) << 6, min(i << 6, self._nwords)):
                c += __builtin_popcountll(self._bits[j])
            self._fen[i] += c
            j = i + (i & (-i))
            if j <= self._nsuper:
                self._fen[j] += self._fen[i]

    cdef inline void _fen_add(self, Py_ssize_t word, int d) noexcept nogil:
        cdef Py_ssize_t i = (word >> 6) + 1
        while i <= self._nsuper:
            self._fen[i] += d
            i += i & (-i)

    cdef inline long _fen_prefix(self, Py_ssize_t word) noexcept nogil:
        # occupied count in words [0, word): superblock prefix + word scan
        cdef long s = 0
        cdef Py_ssize_t i = word >> 6
        cdef Py_ssize_t j
        while i > 0:
            s += self._fen[i]
            i -= i & (-i)
        for j in range((word >> 6) << 6, word):
            s += __builtin_popcountll(self._bits[j])
        return s

    cpdef long rank_of(self, Py_ssize_t i):
        """Current rank of particle i (1 = front), an O(log n) prefix count
        plus a bounded popcount scan inside one superblock."""
        cdef Py_ssize_t slot = self._psi[8 * i]
        cdef Py_ssize_t word = slot >> 6
        cdef unsigned long long mask = (
            <unsigned long long> 0xFFFFFFFFFFFFFFFF
        ) >> (63 - (slot & 63))
        return self._fen_prefix(word) + __builtin_popcountll(self._bits[word] & mask)

    # -- 4-ary heap --------------------------------------------------------------
    #
    # Times and ids live in parallel arrays; the descent compares times
    # only, so its read path stays on 8-byte keys. Exact float ties are
    # resolved through the id array on a cold branch, preserving the
    # (time, particle) order contract bit for bit.

    cdef inline double _ht(self, Py_ssize_t p) noexcept nogil:
        return self._hf[p]

    cdef inline int _id(self, Py_ssize_t p) noexcept nogil:
        return self._hi[p]

    cdef inline void _hset(self, Py_ssize_t p, double t, int i) noexcept nogil:
        self._hf[p] = t
        self._hi[p] = i

    cdef void _heapify(self) noexcept:
        cdef Py_ssize_t k
        for k in range((self._heap_last + 48) >> 3, 6, -1):
            self._sift_down(k)

    cdef inline Py_ssize_t _argmin_children(self, Py_ssize_t c) noexcept nogil:
        # Branch-light argmin by time over the sibling block c..c+7
        # (sentinels never win); ids only consulted when times collide.
        cdef Py_ssize_t m = c
        cdef int dup
        m = c + 1 if self._hf[c + 1] < self._hf[m] else m
        m = c + 2 if self._hf[c + 2] < self._hf[m] else m
        m = c + 3 if self._hf[c + 3] < self._hf[m] else m
        m = c + 4 if self._hf[c + 4] < self._hf[m] else m
        m = c + 5 if self._hf[c + 5] < self._hf[m] else m
        m = c + 6 if self._hf[c + 6] < self._hf[m] else m
        m = c + 7 if self._hf[c + 7] < self._hf[m] else m
        dup = (
            (self._hf[c] == self._hf[m])
            + (self._hf[c + 1] == self._hf[m])
            + (self._hf[c + 2] == self._hf[m])
            + (self._hf[c + 3] == self._hf[m])
            + (self._hf[c + 4] == self._hf[m])
            + (self._hf[c + 5] == self._hf[m])
            + (self._hf[c + 6] == self._hf[m])
            + (self._hf[c + 7] == self._hf[m])
        )
        if dup > 1:
            m = c
            m = c + 1 if _before(self._hf[c + 1], self._hi[c + 1],
                                 self._hf[m], self._hi[m]) else m
            m = c + 2 if _before(self._hf[c + 2], self._hi[c + 2],
                                 self._hf[m], self._hi[m]) else m
            m = c + 3 if _before(self._hf[c + 3], self._hi[c + 3],
                                 self._hf[m], self._hi[m]) else m
            m = c + 4 if _before(self._hf[c + 4], self._hi[c + 4],
                                 self._hf[m], self._hi[m]) else m
            m = c + 5 if _before(self._hf[c + 5], self._hi[c + 5],
                                 self._hf[m], self._hi[m]) else m
            m = c + 6 if _before(self._hf[c + 6], self._hi[c + 6],
                                 self._hf[m], self._hi[m]) else m
            m = c + 7 if _before(self._hf[c + 7], self._hi[c + 7],
                                 self._hf[m], self._hi[m]) else m
        return m

    cdef void _sift_down(self, Py_ssize_t k) noexcept nogil:
        cdef Py_ssize_t c, m, g, last = self._heap_last
        cdef double t = self._hf[k]
        cdef double tm
        cdef int i = self._hi[k]
        while True:
            c = 8 * k - 48
            if c > last:
                break
            # grandchildren are the contiguous keys 64k-432..64k-369; pull
            # their lines in while this level's argmin is in flight
            g = 64 * k - 432
            if g <= last:
                __builtin_prefetch(&self._hf[g])
                __builtin_prefetch(&self._hf[g + 8])
                __builtin_prefetch(&self._hf[g + 16])
                __builtin_prefetch(&self._hf[g + 24])
                __builtin_prefetch(&self._hf[g + 32])
                __builtin_prefetch(&self._hf[g + 40])
                __builtin_prefetch(&self._hf[g + 48])
                __builtin_prefetch(&self._hf[g + 56])
            m = self._argmin_children(c)
            # time-only descend test keeps ids off the load critical path;
            # exact ties (measure zero) fall through to the full comparison
            tm = self._hf[m]
            if tm < t or (tm == t and self._hi[m] < i):
                self._hf[k] = tm
                self._hi[k] = self._hi[m]
                k = m
            else:
                break
        self._hf[k] = t
        self._hi[k] = i

    # -- event processing ------------------------------------------------------

    cdef void _jump(self, long i, double t_ev):
        cdef Py_ssize_t old, new
        if self.next_fresh < 0:
            self._compact()
        old = self._psi[8 * i]
        self._bits[old >> 6] &= ~((<unsigned long long> 1) << (old & 63))
        self._fen_add(old >> 6, -1)
        new = self.next_fresh
        self.next_fresh -= 1
        self._bits[new >> 6] |= (<unsigned long long> 1) << (new & 63)
        self._fen_add(new >> 6, 1)
        self._psi[8 * i] = <int> new
        if self._psi[8 * i + 1] == 0:
            self._psf[4 * i + 1] = t_ev
            self.n_jumped += 1
        self._psi[8 * i + 1] += 1
        self.total_events += 1
        if self.event_log is not None:
            self.event_log.append((t_ev, i))

    cdef void _compact(self):
        # Compact occupied slots to the top of the array, preserving order.
        cdef Py_ssize_t r, base = self.cap - self.n
        order = np.argsort(np.asarray(self._psi)[0::8])
        cdef long[::1] ov = np.ascontiguousarray(order, dtype=np.int64)
        for r in range(self.n):
            self._psi[8 * ov[r]] = <int> (base + r)
        self._rebuild_index()
        self.next_fresh = base - 1

    def advance_to(self, double t):
        """Process every event with time <= t; returns the event count."""
        cdef long long processed = 0
        cdef double tt, gap
        cdef int ii
        if t < self.t_now:
            raise ValueError("cannot advance backwards in time")
        if self._stochastic:
            with self.rng.bit_generator.lock:
                while True:
                    tt = self._ht(7)
                    ii = self._id(7)
                    if tt > t:
                        break
                    # a fresh key nearly always sinks below the root's min
                    # child, making that child the next jumper: warm its
                    # particle record a full iteration ahead of its use
                    __builtin_prefetch(
                        &self._psf[4 * self._hi[self._argmin_children(8)]]
                    )
                    self._jump(ii, tt)
                    # reciprocal multiply, matching the Python engine bit for bit
                    gap = -log1p(-self.bitgen.next_double(self.bitgen.state))
                    self._hset(7, tt + gap * self._psf[4 * ii + 2], ii)
                    self._sift_down(7)
                    processed += 1
        else:
            while self._forced_pos < self._forced_t.shape[0]:
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
        return np.asarray(self._psi)[0::8].astype(np.int64)

    @property
    def first_jump_times(self):
        return np.asarray(self._psf)[1::4].copy()

    @property
    def jump_counts(self):
        return np.asarray(self._psi)[1::8].astype(np.int64)
