"""Plain material evaluation.

Fast fallback heuristic: used when no trained models are available, as the
evaluation inside the bundled reference engine, and as the cheap evaluator
for search oracle suites. White-relative.
"""

from __future__ import annotations

from . import models
from .board import BoardState

# centipawn values for P, N, B, R, Q, K
PIECE_VALUES_CP = (100, 320, 330, 500, 900, 0)


def material_cp(board: BoardState) -> int:
    """Material balance in centipawns, white-relative."""
    bb = board.bb
    total = 0
    for kind in range(5):
        total += PIECE_VALUES_CP[kind] * (bb[kind].bit_count() - bb[6 + kind].bit_count())
    return total


def material_eval(board: BoardState) -> float:
    """Normalized white-relative material balance, for use as a search evaluator."""
    return models.normalize_cp(material_cp(board))
