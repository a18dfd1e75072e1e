"""XOR metric and k-bucket routing tables over the 256-bit ID space."""

from __future__ import annotations

import heapq

ID_BITS = 256
ID_MASK = (1 << ID_BITS) - 1


def xor_distance(a: int, b: int) -> int:
    return (a ^ b) & ID_MASK


def shared_prefix_bits(a: int, b: int) -> int:
    """Number of leading bits ``a`` and ``b`` have in common (256 when equal)."""
    return ID_BITS - (a ^ b).bit_length()


def closest(ids, key: int, count: int) -> list[int]:
    return heapq.nsmallest(count, ids, key=lambda i: i ^ key)


class RoutingTable:
    """256 buckets; bucket ``i`` holds contacts sharing exactly ``i`` leading bits with the owner.

    Buckets are least-recently-seen first. A full bucket keeps its existing
    contacts and drops newcomers; dead contacts leave when an RPC to them
    times out, which makes room again.
    """

    __slots__ = ("owner", "k", "buckets")

    def __init__(self, owner: int, k: int = 20):
        self.owner = owner
        self.k = k
        self.buckets: dict[int, list[int]] = {}

    def bucket_index(self, contact: int) -> int:
        return shared_prefix_bits(self.owner, contact)

    def add(self, contact: int) -> bool:
        if contact == self.owner:
            return False
        idx = ID_BITS - (self.owner ^ contact).bit_length()
        bucket = self.buckets.get(idx)
        if bucket is None:
            self.buckets[idx] = [contact]
            return True
        if contact in bucket:
            bucket.remove(contact)
            bucket.append(contact)
            return True
        if len(bucket) < self.k:
            bucket.append(contact)
            return True
        return False

    def remove(self, contact: int) -> None:
        idx = ID_BITS - (self.owner ^ contact).bit_length()
        bucket = self.buckets.get(idx)
        if bucket and contact in bucket:
            bucket.remove(contact)

    def __contains__(self, contact: int) -> bool:
        bucket = self.buckets.get(ID_BITS - (self.owner ^ contact).bit_length())
        return bool(bucket) and contact in bucket

    def contacts(self) -> list[int]:
        out = []
        for idx in sorted(self.buckets):
            out.extend(self.buckets[idx])
        return out

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets.values())

    def closest(self, key: int, count: int) -> list[int]:
        return closest(self.contacts(), key, count)
