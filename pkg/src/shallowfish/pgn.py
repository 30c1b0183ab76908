"""PGN reading: mainline move extraction and SAN resolution.

Comments, variations, and NAGs are skipped; only the mainline matters for
position extraction. Malformed games are tolerated and tallied, never fatal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .board import (
    BISHOP, KING, KNIGHT, PAWN, QUEEN, ROOK,
    BoardState, IllegalMoveError, Move, apply_move, legal_moves, parse_square,
    start_position,
)

_RESULTS = {"1-0", "0-1", "1/2-1/2", "*"}
_SAN_RE = re.compile(
    r"^(?P<piece>[KQRBN])?(?P<ffile>[a-h])?(?P<frank>[1-8])?(?P<cap>x)?"
    r"(?P<to>[a-h][1-8])(?:=(?P<promo>[QRBN]))?$"
)
_PIECE_KINDS = {"K": KING, "Q": QUEEN, "R": ROOK, "B": BISHOP, "N": KNIGHT}


class SanError(ValueError):
    pass


def parse_san(board: BoardState, san: str) -> Move:
    """Resolve one SAN token against the legal moves of `board`."""
    text = san.rstrip("+#!?").replace("0", "O")
    moves = legal_moves(board)
    if text in ("O-O", "O-O-O"):
        king_to_file = 6 if text == "O-O" else 2
        for m in moves:
            if m.flags & 8 and (m.to_sq & 7) == king_to_file:
                return m
        raise SanError(f"illegal castle {san!r}")
    match = _SAN_RE.match(text)
    if not match:
        raise SanError(f"unparseable SAN {san!r}")
    kind = _PIECE_KINDS.get(match.group("piece"), PAWN)
    to_sq = parse_square(match.group("to"))
    promo = _PIECE_KINDS[match.group("promo")] if match.group("promo") else None
    ffile = match.group("ffile")
    frank = match.group("frank")

    candidates = []
    for m in moves:
        if m.to_sq != to_sq or m.promo != promo:
            continue
        if board.mailbox[m.from_sq] % 6 != kind:
            continue
        if ffile and (m.from_sq & 7) != "abcdefgh".index(ffile):
            continue
        if frank and (8 - (m.from_sq >> 3)) != int(frank):
            continue
        candidates.append(m)
    if len(candidates) != 1:
        raise SanError(f"SAN {san!r} matches {len(candidates)} moves")
    return candidates[0]


@dataclass
class Game:
    headers: dict = field(default_factory=dict)
    san_moves: list = field(default_factory=list)


def read_games(stream):
    """Yield Game records from a PGN text stream."""
    headers = {}
    movetext = []
    in_game = False

    def flush():
        nonlocal headers, movetext, in_game
        if in_game:
            yield Game(headers, _tokenize_movetext(" ".join(movetext)))
        headers = {}
        movetext = []
        in_game = False

    for line in stream:
        line = line.strip()
        if line.startswith("["):
            if movetext:
                yield from flush()
            m = re.match(r'\[(\w+)\s+"(.*)"\]', line)
            if m:
                headers[m.group(1)] = m.group(2)
            in_game = True
        elif line:
            movetext.append(line)
            in_game = True
            if any(tok in _RESULTS for tok in line.split()):
                yield from flush()
    yield from flush()


def _tokenize_movetext(text):
    # strip comments and (possibly nested) variations
    text = re.sub(r"\{[^}]*\}", " ", text)
    while "(" in text:
        stripped = re.sub(r"\([^()]*\)", " ", text)
        if stripped == text:
            break
        text = stripped
    tokens = []
    for tok in text.split():
        if tok in _RESULTS or tok.startswith("$"):
            continue
        tok = re.sub(r"^\d+\.+", "", tok)  # move numbers, incl. glued "1.e4"
        if tok:
            tokens.append(tok)
    return tokens


@dataclass
class IngestStats:
    games: int = 0
    positions: int = 0
    skipped_games: int = 0


def positions_from_games(stream, stats: IngestStats | None = None, include_start: bool = False):
    """Yield every position after every mainline half-move of every game.

    The shared start position is excluded unless `include_start`. A game with
    an unresolvable move contributes nothing and bumps the skip tally.
    """
    if stats is None:
        stats = IngestStats()
    for game in read_games(stream):
        stats.games += 1
        board = start_position()
        out = [board] if include_start else []
        try:
            for san in game.san_moves:
                board = apply_move(board, parse_san(board, san), check_legal=False)
                out.append(board)
        except (SanError, IllegalMoveError, ValueError):
            stats.skipped_games += 1
            continue
        stats.positions += len(out)
        yield from out
