"""64-bit hashing used by the sketches.

The hash family is XXH64 (Yann Collet's xxHash, 64-bit variant): a public,
seedable, non-cryptographic hash with a precise published definition, so that
any other implementation hashing the same bytes with the same seed produces
the same sketch state. Scalar hashing goes through the reference C binding
(the ``xxhash`` package); bulk hashing of many fixed-width inputs is done with
a vectorized numpy reimplementation of the same algorithm. The two paths are
interchangeable and the test suite asserts they agree bit for bit.

References:
    xxHash specification, https://github.com/Cyan4973/xxHash
"""

from __future__ import annotations

import numpy as np
import xxhash

_PRIME_1 = np.uint64(0x9E3779B185EBCA87)
_PRIME_2 = np.uint64(0xC2B2AE3D27D4EB4F)
_PRIME_3 = np.uint64(0x165667B19E3779F9)
_PRIME_4 = np.uint64(0x85EBCA77C2B2AE63)
_PRIME_5 = np.uint64(0x27D4EB2F165667C5)

_U64_MAX = (1 << 64) - 1


def xxh64(data: bytes, seed: int = 0) -> int:
    """XXH64 of a byte string, as an unsigned 64-bit integer."""
    return xxhash.xxh64_intdigest(data, seed=seed)


def _rotl(x: np.ndarray, r: int) -> np.ndarray:
    r = np.uint64(r)
    return (x << r) | (x >> (np.uint64(64) - r))


def _round(acc: np.ndarray, lane: np.ndarray) -> np.ndarray:
    return _rotl(acc + lane * _PRIME_2, 31) * _PRIME_1


def _merge_round(h: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (h ^ _rotl(v * _PRIME_2, 31) * _PRIME_1) * _PRIME_1 + _PRIME_4


def _avalanche(h: np.ndarray) -> np.ndarray:
    h ^= h >> np.uint64(33)
    h *= _PRIME_2
    h ^= h >> np.uint64(29)
    h *= _PRIME_3
    h ^= h >> np.uint64(32)
    return h


def xxh64_words(words: np.ndarray, seed: int = 0, prefix: int | None = None) -> np.ndarray:
    """Vectorized XXH64 over 8-byte values, with an optional 8-byte prefix.

    Each entry of ``words`` is hashed as its 8-byte little-endian encoding;
    when ``prefix`` is given, its 8 little-endian bytes are hashed first
    (total input length 16). Equivalent to
    ``xxh64(prefix_bytes + word_bytes, seed)`` per element.
    """
    words = np.ascontiguousarray(words, dtype=np.uint64)
    length = 8 if prefix is None else 16
    with np.errstate(over="ignore"):
        h = np.full(words.shape, np.uint64(seed) + _PRIME_5 + np.uint64(length), dtype=np.uint64)
        if prefix is not None:
            lane = np.uint64(prefix)
            h ^= _rotl(lane * _PRIME_2, 31) * _PRIME_1
            h = _rotl(h, 27) * _PRIME_1 + _PRIME_4
        h ^= _rotl(words * _PRIME_2, 31) * _PRIME_1
        h = _rotl(h, 27) * _PRIME_1 + _PRIME_4
        return _avalanche(h)


def _lane64(rows: np.ndarray, offset: int) -> np.ndarray:
    return np.ascontiguousarray(rows[:, offset:offset + 8]).view(np.dtype("<u8")).ravel()


def _lane32(rows: np.ndarray, offset: int) -> np.ndarray:
    return np.ascontiguousarray(rows[:, offset:offset + 4]).view(np.dtype("<u4")).ravel().astype(np.uint64)


def xxh64_rows(rows: np.ndarray, seed: int = 0) -> np.ndarray:
    """Vectorized XXH64 over the rows of an (n, width) uint8 array.

    Row ``i`` hashes exactly like ``xxh64(rows[i].tobytes(), seed)``. The
    number of numpy passes depends only on ``width``, so this is the bulk
    path for hashing many same-length elements at once.
    """
    rows = np.ascontiguousarray(rows, dtype=np.uint8)
    if rows.ndim != 2:
        raise ValueError("rows must be a 2-d uint8 array")
    n, width = rows.shape
    seed64 = np.uint64(seed)
    with np.errstate(over="ignore"):
        offset = 0
        if width >= 32:
            v1 = np.full(n, seed64 + _PRIME_1 + _PRIME_2, dtype=np.uint64)
            v2 = np.full(n, seed64 + _PRIME_2, dtype=np.uint64)
            v3 = np.full(n, seed64, dtype=np.uint64)
            v4 = np.full(n, seed64 - _PRIME_1, dtype=np.uint64)
            while offset + 32 <= width:
                v1 = _round(v1, _lane64(rows, offset))
                v2 = _round(v2, _lane64(rows, offset + 8))
                v3 = _round(v3, _lane64(rows, offset + 16))
                v4 = _round(v4, _lane64(rows, offset + 24))
                offset += 32
            h = _rotl(v1, 1) + _rotl(v2, 7) + _rotl(v3, 12) + _rotl(v4, 18)
            h = _merge_round(h, v1)
            h = _merge_round(h, v2)
            h = _merge_round(h, v3)
            h = _merge_round(h, v4)
        else:
            h = np.full(n, seed64 + _PRIME_5, dtype=np.uint64)
        h += np.uint64(width)
        while offset + 8 <= width:
            h ^= _rotl(_lane64(rows, offset) * _PRIME_2, 31) * _PRIME_1
            h = _rotl(h, 27) * _PRIME_1 + _PRIME_4
            offset += 8
        if offset + 4 <= width:
            h ^= _lane32(rows, offset) * _PRIME_1
            h = _rotl(h, 23) * _PRIME_2 + _PRIME_3
            offset += 4
        while offset < width:
            h ^= rows[:, offset].astype(np.uint64) * _PRIME_5
            h = _rotl(h, 11) * _PRIME_1
            offset += 1
        return _avalanche(h)


def leading_rank(value_bits: int, width: int) -> int:
    """Rank of a value-bit window: one plus its count of leading zeros.

    ``value_bits`` is interpreted as a ``width``-bit string; an all-zero
    window ranks ``width + 1``.
    """
    if not 0 <= value_bits < (1 << width):
        raise ValueError(f"value_bits does not fit in {width} bits")
    return width - value_bits.bit_length() + 1


def split_seed(master: int, index: int) -> int:
    """Derive the ``index``-th child seed from a master seed.

    Splitting rule (documented for reproducibility): the child is the
    splitmix64 finalizer applied to ``master + (index + 1) * GAMMA`` mod 2^64,
    with GAMMA = 0x9E3779B97F4A7C15. Distinct indices give distinct states,
    and the finalizer is a bijection, so children never collide for a fixed
    master.
    """
    z = (master + (index + 1) * 0x9E3779B97F4A7C15) & _U64_MAX
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64_MAX
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64_MAX
    return z ^ (z >> 31)


def split_stream(master: int, count: int) -> np.ndarray:
    """Vectorized ``split_seed(master, 0..count-1)`` as a uint64 array.

    The outputs are pairwise distinct, which makes this the stock generator
    of distinct pseudo-random elements for experiments.
    """
    with np.errstate(over="ignore"):
        gamma = np.uint64(0x9E3779B97F4A7C15)
        z = np.uint64(master) + np.arange(1, count + 1, dtype=np.uint64) * gamma
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))
