"""Exception types raised across the package."""

from __future__ import annotations


class RandEmbedError(Exception):
    """Base class for every domain error raised by randembed."""


class InvalidCharacter(RandEmbedError, ValueError):
    def __init__(self, position: int, char: str):
        super().__init__(f"invalid character {char!r} at position {position}")
        self.position = position
        self.char = char


class Truncated(RandEmbedError, ValueError):
    """A packed stream holds fewer bytes than its declared bit count needs."""


class BadHeader(RandEmbedError, ValueError):
    pass


class EmptySeries(RandEmbedError, ValueError):
    pass


class SeriesTooShort(RandEmbedError, ValueError):
    pass


class InvalidGeometry(RandEmbedError, ValueError):
    pass


class InvalidSkipList(RandEmbedError, ValueError):
    pass


class MessageTooLong(RandEmbedError, ValueError):
    def __init__(self, length: int, capacity: int):
        super().__init__(f"message of {length} bits exceeds capacity {capacity}")
        self.length = length
        self.capacity = capacity


class CountExceedsCapacity(RandEmbedError, ValueError):
    def __init__(self, count: int, capacity: int):
        super().__init__(f"requested {count} bits but capacity is {capacity}")
        self.count = count
        self.capacity = capacity


class BlockLengthMismatch(RandEmbedError, ValueError):
    pass


class NoFailureAttribution(RandEmbedError, ValueError):
    pass


class InsufficientFreshBits(RandEmbedError, ValueError):
    pass


class KeyFormatError(RandEmbedError, ValueError):
    pass
