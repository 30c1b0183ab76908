"""775-bit binary position encoding.

Layout: 12 piece planes of 64 squares each (white P,N,B,R,Q,K then black in
the same order, squares in FEN reading order a8..h1), then 1 turn bit
(1 = white to move), 4 castling bits (white-K, white-Q, black-K, black-Q),
and 2 check bits (white in check, black in check). En passant and the move
clocks are not encoded; decode fills them with defaults.
"""

from __future__ import annotations

import numpy as np

from .board import (
    BLACK, CASTLE_BK, CASTLE_BQ, CASTLE_WK, CASTLE_WQ, WHITE,
    BoardState, in_check,
)

NUM_FEATURES = 775
PLANE_BITS = 12 * 64  # 768


class DecodeError(ValueError):
    pass


def encode(board: BoardState) -> np.ndarray:
    """Encode a position as a uint8 vector of length 775."""
    v = np.zeros(NUM_FEATURES, dtype=np.uint8)
    for plane in range(12):
        bb = board.bb[plane]
        base = plane * 64
        while bb:
            lsb = bb & -bb
            v[base + lsb.bit_length() - 1] = 1
            bb ^= lsb
    v[768] = 1 if board.turn == WHITE else 0
    c = board.castling
    v[769] = 1 if c & CASTLE_WK else 0
    v[770] = 1 if c & CASTLE_WQ else 0
    v[771] = 1 if c & CASTLE_BK else 0
    v[772] = 1 if c & CASTLE_BQ else 0
    v[773] = 1 if in_check(board, WHITE) else 0
    v[774] = 1 if in_check(board, BLACK) else 0
    return v


def feature_key(board: BoardState) -> bytes:
    """Dedup key: exactly the information the encoding can see."""
    return encode(board).tobytes()


def decode(v: np.ndarray) -> BoardState:
    """Rebuild a BoardState from an encoded vector.

    En passant comes back as none and the clocks as 0/1; check bits are
    recomputed from the placement, not trusted.
    """
    v = np.asarray(v)
    if v.shape != (NUM_FEATURES,):
        raise DecodeError(f"expected {NUM_FEATURES} features, got shape {v.shape}")
    board = BoardState()
    for sq in range(64):
        planes = [p for p in range(12) if v[p * 64 + sq]]
        if len(planes) > 1:
            raise DecodeError(f"square {sq} set in {len(planes)} planes")
        if planes:
            board._put(sq, planes[0])
    board.turn = WHITE if v[768] else BLACK
    board.castling = (
        (CASTLE_WK if v[769] else 0)
        | (CASTLE_WQ if v[770] else 0)
        | (CASTLE_BK if v[771] else 0)
        | (CASTLE_BQ if v[772] else 0)
    )
    board._recompute_zkey()
    return board


def to_hex(v: np.ndarray) -> str:
    """Hex dump used by the golden-vector conformance fixture."""
    return np.asarray(v, dtype=np.uint8).tobytes().hex()


def from_hex(text: str) -> np.ndarray:
    raw = bytes.fromhex(text.strip())
    if len(raw) != NUM_FEATURES:
        raise DecodeError(f"hex dump has {len(raw)} bytes, expected {NUM_FEATURES}")
    return np.frombuffer(raw, dtype=np.uint8).copy()
