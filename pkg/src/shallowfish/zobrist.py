"""Zobrist hashing keys and from-scratch key computation.

Keys are generated from a fixed seed so hashes are stable across runs and
platforms. apply_move maintains the key incrementally; `full_key` is the
from-scratch reference used by tests and FEN parsing.
"""

import random

_rng = random.Random(0x5EED_C0DE)

PIECE_KEYS = [[_rng.getrandbits(64) for _ in range(64)] for _ in range(12)]
CASTLE_KEYS = [_rng.getrandbits(64) for _ in range(16)]
EP_KEYS = [_rng.getrandbits(64) for _ in range(8)]
TURN_KEY = _rng.getrandbits(64)

del _rng


def full_key(board) -> int:
    key = 0
    for sq, piece in enumerate(board.mailbox):
        if piece >= 0:
            key ^= PIECE_KEYS[piece][sq]
    key ^= CASTLE_KEYS[board.castling]
    if board.ep >= 0:
        key ^= EP_KEYS[board.ep & 7]
    if board.turn == 1:
        key ^= TURN_KEY
    return key
