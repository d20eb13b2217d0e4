"""Broadcasting bits through action choices, and the phase-2 key-exchange timetable."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

from .game import UnsupportedGameError

ROLE_KEY = "key"
ROLE_CIPHER = "cipher"
ROLE_IDLE = "idle"
ROLE_PUNISHED = "punished"


@dataclass(frozen=True)
class ChannelSplit:
    """Per player, the actions read as bit 0; every other action reads as bit 1."""

    actions: tuple[int, ...]
    zero_sets: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        for i, (n, zs) in enumerate(zip(self.actions, self.zero_sets)):
            if not zs or not zs < frozenset(range(n)):
                raise ValueError(f"player {i} needs nonempty, proper zero and one sets")

    @classmethod
    def lowest_zero(cls, actions: Sequence[int]) -> "ChannelSplit":
        if any(n < 2 for n in actions):
            raise UnsupportedGameError("every player needs at least two actions")
        return cls(tuple(actions), tuple(frozenset({0}) for _ in actions))

    def zero_action(self, player: int) -> int:
        return min(self.zero_sets[player])

    def one_action(self, player: int) -> int:
        return min(set(range(self.actions[player])) - self.zero_sets[player])

    @cached_property
    def bit_of(self) -> tuple[tuple[int, ...], ...]:
        return tuple(
            tuple(0 if a in zs else 1 for a in range(n))
            for n, zs in zip(self.actions, self.zero_sets)
        )


def encode_bits(split: ChannelSplit, player: int, bits: str) -> list[int]:
    zero, one = split.zero_action(player), split.one_action(player)
    out = []
    for b in bits:
        if b not in "01":
            raise ValueError(f"not a bit: {b!r}")
        out.append(one if b == "1" else zero)
    return out


def decode_bits(split: ChannelSplit, player: int, actions: Sequence[int]) -> str:
    table = split.bit_of[player]
    return "".join(str(table[int(a)]) for a in actions)


@dataclass(frozen=True)
class Phase2Schedule:
    """Timetable of the ``m = keylen + (c-2) z`` rounds after a deviation by ``punished``.

    Offsets are 0-based within phase 2.  All punishers broadcast their public
    keys together in offsets ``[0, keylen)``; the sender ``punished + 1`` then
    sends one ciphertext per recipient, in recipient order, ``z`` rounds each.
    """

    num_players: int
    punished: int
    keylen: int
    z: int

    @property
    def sender(self) -> int:
        return (self.punished + 1) % self.num_players

    @property
    def length(self) -> int:
        return self.keylen + (self.num_players - 2) * self.z

    @cached_property
    def recipients(self) -> tuple[int, ...]:
        c, j = self.num_players, self.punished
        return tuple((j + 2 + k) % c for k in range(c - 2))

    def slot(self, recipient: int) -> range:
        k = self.recipients.index(recipient)
        start = self.keylen + k * self.z
        return range(start, start + self.z)

    def role(self, offset: int, player: int) -> str:
        if not 0 <= offset < self.length:
            raise ValueError("offset outside phase 2")
        if player == self.punished:
            return ROLE_PUNISHED
        if offset < self.keylen:
            return ROLE_KEY
        return ROLE_CIPHER if player == self.sender else ROLE_IDLE

    def dump(self, first_round: int = 0) -> str:
        lines = []
        for off in range(self.length):
            for i in range(self.num_players):
                lines.append(f"round {first_round + off}: player {i} {self.role(off, i)}")
        return "\n".join(lines) + "\n"


def phase2_schedule(c: int, punished: int, keylen: int, z: int) -> Phase2Schedule:
    if c < 3:
        raise UnsupportedGameError("the seed exchange needs at least three players")
    if not 0 <= punished < c:
        raise ValueError(f"no player {punished}")
    return Phase2Schedule(c, punished, keylen, z)
