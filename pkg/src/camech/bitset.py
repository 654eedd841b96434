"""Bitmask item sets.

Bundles of items are plain ints: bit e set means item e is in the bundle.
Item indices run 0..m-1 with m <= 30.
"""

from __future__ import annotations

from typing import Iterable, Iterator


def full_mask(m: int) -> int:
    """Mask containing all of items 0..m-1."""
    return (1 << m) - 1


def mask_of(items: Iterable[int]) -> int:
    mask = 0
    for e in items:
        mask |= 1 << e
    return mask


def iter_items(mask: int) -> Iterator[int]:
    """Yield the item indices in `mask` in increasing order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def items_of(mask: int) -> tuple[int, ...]:
    return tuple(iter_items(mask))


def is_subset(inner: int, outer: int) -> bool:
    return inner & ~outer == 0
