"""Deterministic synthetic corpora for desk-scale runs.

Positions come from seeded random playouts; labels come from the material
heuristic (or an external engine, via the dataset pipeline). These corpora
make training and benchmarking self-contained when no game database or
reference engine is on hand.
"""

from __future__ import annotations

import numpy as np

from . import material, models
from .board import (
    BoardState, KING, PAWN, in_check, legal_moves, serialize_fen, apply_move,
    start_position,
)
from .dataset import LabeledSample
from .encoding import feature_key


def random_playout_positions(n: int, seed: int = 0, max_plies: int = 80,
                             min_ply: int = 4) -> list[BoardState]:
    """Unique positions sampled from random playouts from the start position."""
    rng = np.random.default_rng(seed)
    seen = set()
    out = []
    while len(out) < n:
        board = start_position()
        for ply in range(max_plies):
            moves = legal_moves(board)
            if not moves or board.halfmove >= 100:
                break
            board = apply_move(board, moves[int(rng.integers(len(moves)))], check_legal=False)
            if ply + 1 < min_ply:
                continue
            key = feature_key(board)
            if key not in seen:
                seen.add(key)
                out.append(board)
                if len(out) >= n:
                    break
    return out


def material_labeled_samples(boards, depth: int = 1) -> list[LabeledSample]:
    """Label positions with the material heuristic (mates via move count)."""
    out = []
    for b in boards:
        if not legal_moves(b):
            cp = 0
            if in_check(b, b.turn):
                cp = -models.MATE_CP if b.turn == 0 else models.MATE_CP
        else:
            cp = material.material_cp(b)
        out.append(LabeledSample(serialize_fen(b), cp, "original", depth))
    return out


def decisive_material_corpus(n: int, seed: int = 0, min_gap_cp: int = 900) -> list[LabeledSample]:
    """Positions where one side is up at least `min_gap_cp` of material,
    built by stripping heavy pieces from playout positions."""
    rng = np.random.default_rng(seed)
    out = []
    batch = 0
    while len(out) < n:
        boards = random_playout_positions(max(64, n), seed=seed * 7919 + batch, max_plies=60)
        batch += 1
        for board in boards:
            victim_color = int(rng.integers(2))
            stripped = _strip_material(board, victim_color, min_gap_cp)
            if stripped is None:
                continue
            cp = material.material_cp(stripped)
            if abs(cp) < min_gap_cp:
                continue
            out.append(LabeledSample(serialize_fen(stripped), cp, "original", 1))
            if len(out) >= n:
                break
    return out


def _strip_material(board: BoardState, victim_color: int, min_gap_cp: int):
    """Remove non-king, non-pawn pieces of one color until the material gap is
    reached; None if the result breaks position invariants."""
    b = board.copy()
    sign = 1 if victim_color == 1 else -1  # stripping black helps white
    for kind in (4, 3, 3, 2, 1):  # queen, rooks, bishops, knights
        bb = b.bb[victim_color * 6 + kind]
        while bb:
            lsb = bb & -bb
            sq = lsb.bit_length() - 1
            bb ^= lsb
            piece = victim_color * 6 + kind
            b.bb[piece] &= ~(1 << sq)
            b.occ_co[victim_color] &= ~(1 << sq)
            b.occ &= ~(1 << sq)
            b.mailbox[sq] = -1
            if sign * material.material_cp(b) >= min_gap_cp:
                break
        if sign * material.material_cp(b) >= min_gap_cp:
            break
    if sign * material.material_cp(b) < min_gap_cp:
        return None
    # removals may discover a check against the side not to move
    if in_check(b, b.turn ^ 1):
        return None
    if not legal_moves(b):
        return None
    b._recompute_zkey()
    return b
