"""Chess domain model: board state, FEN, legal move generation, perft.

Board representation is one 64-bit occupancy set per (color, piece kind).
Square indexing follows FEN reading order: a8 = 0 ... h1 = 63, i.e.
index = (8 - rank) * 8 + file.
"""

from __future__ import annotations

from . import zobrist

WHITE, BLACK = 0, 1
PAWN, KNIGHT, BISHOP, ROOK, QUEEN, KING = range(6)

PIECE_CHARS = "PNBRQKpnbrqk"  # index = color * 6 + kind
KIND_CHARS = "pnbrqk"

# castling-rights bitmask
CASTLE_WK, CASTLE_WQ, CASTLE_BK, CASTLE_BQ = 1, 2, 4, 8

FULL = (1 << 64) - 1

# move flags
F_CAPTURE = 1
F_DOUBLE_PUSH = 2
F_EN_PASSANT = 4
F_CASTLE = 8


class IllegalMoveError(Exception):
    pass


class FenError(ValueError):
    """Malformed or impossible FEN; `field` names the offending part."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


def square(file: int, rank: int) -> int:
    """file 0..7 = a..h, rank 1..8 (chess convention)."""
    return (8 - rank) * 8 + file


def square_name(sq: int) -> str:
    return "abcdefgh"[sq & 7] + str(8 - (sq >> 3))


def parse_square(name: str) -> int:
    f = "abcdefgh".index(name[0])
    r = int(name[1])
    if not 1 <= r <= 8:
        raise ValueError(f"bad square {name!r}")
    return square(f, r)


class Move:
    __slots__ = ("from_sq", "to_sq", "promo", "flags")

    def __init__(self, from_sq: int, to_sq: int, promo: int | None = None, flags: int = 0):
        self.from_sq = from_sq
        self.to_sq = to_sq
        self.promo = promo
        self.flags = flags

    def uci(self) -> str:
        s = square_name(self.from_sq) + square_name(self.to_sq)
        if self.promo is not None:
            s += KIND_CHARS[self.promo]
        return s

    @property
    def is_capture(self) -> bool:
        return bool(self.flags & (F_CAPTURE | F_EN_PASSANT))

    def __eq__(self, other):
        return (
            isinstance(other, Move)
            and self.from_sq == other.from_sq
            and self.to_sq == other.to_sq
            and self.promo == other.promo
        )

    def __hash__(self):
        return hash((self.from_sq, self.to_sq, self.promo))

    def __repr__(self):
        return f"Move({self.uci()})"


# ---------------------------------------------------------------------------
# precomputed attack tables

def _shift_targets(sq, deltas):
    f, r = sq & 7, sq >> 3
    mask = 0
    for df, dr in deltas:
        nf, nr = f + df, r + dr
        if 0 <= nf < 8 and 0 <= nr < 8:
            mask |= 1 << (nr * 8 + nf)
    return mask


KNIGHT_ATK = [
    _shift_targets(sq, [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)])
    for sq in range(64)
]
KING_ATK = [
    _shift_targets(sq, [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)])
    for sq in range(64)
]
# squares attacked BY a pawn of the given color standing on sq
PAWN_ATK = [
    [_shift_targets(sq, [(-1, -1), (1, -1)]) for sq in range(64)],  # white: toward rank 8
    [_shift_targets(sq, [(-1, 1), (1, 1)]) for sq in range(64)],    # black: toward rank 1
]

# ray tables: in index space, north = -8, south = +8, east = +1, west = -1
_DIRS = {
    "n": (0, -8), "s": (0, 8), "e": (1, 1), "w": (-1, -1),
    "ne": (1, -7), "nw": (-1, -9), "se": (1, 9), "sw": (-1, 7),
}


def _ray(sq, df, step):
    mask = 0
    f = sq & 7
    cur = sq
    while True:
        f += df
        cur += step
        if not (0 <= f < 8) or not (0 <= cur < 64):
            break
        mask |= 1 << cur
    return mask


RAYS = {d: [_ray(sq, df, step) for sq in range(64)] for d, (df, step) in _DIRS.items()}

# BETWEEN[a][b]: squares strictly between aligned squares, else 0
# LINE[a][b]: full line through a and b (including both), else 0
_OPP = {"n": "s", "s": "n", "e": "w", "w": "e", "ne": "sw", "sw": "ne", "nw": "se", "se": "nw"}
BETWEEN = [[0] * 64 for _ in range(64)]
LINE = [[0] * 64 for _ in range(64)]
for _a in range(64):
    for _d in _DIRS:
        _ray = RAYS[_d][_a]
        _bb = _ray
        while _bb:
            _b = (_bb & -_bb).bit_length() - 1
            _bb &= _bb - 1
            BETWEEN[_a][_b] = _ray & ~RAYS[_d][_b] & ~(1 << _b)
            LINE[_a][_b] = _ray | (1 << _a) | RAYS[_OPP[_d]][_a]


def _slide_pos(ray_tbl, sq, occ):
    # positive-step direction: nearest blocker is the lowest set bit
    atk = ray_tbl[sq]
    b = atk & occ
    if b:
        first = (b & -b).bit_length() - 1
        atk ^= ray_tbl[first]
    return atk


def _slide_neg(ray_tbl, sq, occ):
    # negative-step direction: nearest blocker is the highest set bit
    atk = ray_tbl[sq]
    b = atk & occ
    if b:
        first = b.bit_length() - 1
        atk ^= ray_tbl[first]
    return atk


_RN, _RS, _RE, _RW = RAYS["n"], RAYS["s"], RAYS["e"], RAYS["w"]
_RNE, _RNW, _RSE, _RSW = RAYS["ne"], RAYS["nw"], RAYS["se"], RAYS["sw"]


def rook_attacks(sq: int, occ: int) -> int:
    return (
        _slide_neg(_RN, sq, occ)
        | _slide_pos(_RS, sq, occ)
        | _slide_pos(_RE, sq, occ)
        | _slide_neg(_RW, sq, occ)
    )


def bishop_attacks(sq: int, occ: int) -> int:
    return (
        _slide_neg(_RNE, sq, occ)
        | _slide_neg(_RNW, sq, occ)
        | _slide_pos(_RSE, sq, occ)
        | _slide_pos(_RSW, sq, occ)
    )


def queen_attacks(sq: int, occ: int) -> int:
    return rook_attacks(sq, occ) | bishop_attacks(sq, occ)


def _bits(bb):
    while bb:
        lsb = bb & -bb
        yield lsb.bit_length() - 1
        bb ^= lsb


# home squares for castling bookkeeping
_A1, _E1, _H1 = square(0, 1), square(4, 1), square(7, 1)
_A8, _E8, _H8 = square(0, 8), square(4, 8), square(7, 8)

_CASTLE_CLEAR = [15] * 64
_CASTLE_CLEAR[_E1] &= ~(CASTLE_WK | CASTLE_WQ)
_CASTLE_CLEAR[_A1] &= ~CASTLE_WQ
_CASTLE_CLEAR[_H1] &= ~CASTLE_WK
_CASTLE_CLEAR[_E8] &= ~(CASTLE_BK | CASTLE_BQ)
_CASTLE_CLEAR[_A8] &= ~CASTLE_BQ
_CASTLE_CLEAR[_H8] &= ~CASTLE_BK


class BoardState:
    """Full position. Treat instances as immutable; apply_move returns a copy."""

    __slots__ = (
        "bb", "occ_co", "occ", "mailbox", "turn", "castling",
        "ep", "halfmove", "fullmove", "zkey",
    )

    def __init__(self):
        self.bb = [0] * 12
        self.occ_co = [0, 0]
        self.occ = 0
        self.mailbox = [-1] * 64
        self.turn = WHITE
        self.castling = 0
        self.ep = -1
        self.halfmove = 0
        self.fullmove = 1
        self.zkey = 0

    # -- construction helpers ------------------------------------------------

    def _put(self, sq, piece):
        self.bb[piece] |= 1 << sq
        self.occ_co[piece // 6] |= 1 << sq
        self.occ |= 1 << sq
        self.mailbox[sq] = piece

    def _recompute_zkey(self):
        self.zkey = zobrist.full_key(self)

    def copy(self) -> "BoardState":
        b = BoardState.__new__(BoardState)
        b.bb = self.bb[:]
        b.occ_co = self.occ_co[:]
        b.occ = self.occ
        b.mailbox = self.mailbox[:]
        b.turn = self.turn
        b.castling = self.castling
        b.ep = self.ep
        b.halfmove = self.halfmove
        b.fullmove = self.fullmove
        b.zkey = self.zkey
        return b

    def __eq__(self, other):
        return (
            isinstance(other, BoardState)
            and self.bb == other.bb
            and self.turn == other.turn
            and self.castling == other.castling
            and self.ep == other.ep
            and self.halfmove == other.halfmove
            and self.fullmove == other.fullmove
        )

    def __hash__(self):
        return hash(self.zkey)

    def __repr__(self):
        return f"BoardState({serialize_fen(self)!r})"

    def piece_at(self, sq: int) -> tuple[int, int] | None:
        p = self.mailbox[sq]
        if p < 0:
            return None
        return p // 6, p % 6

    def king_sq(self, color: int) -> int:
        k = self.bb[color * 6 + KING]
        return (k & -k).bit_length() - 1 if k else -1

    # -- attacks -------------------------------------------------------------

    def attackers_to(self, sq: int, color: int, occ: int | None = None) -> int:
        """Bitboard of `color` pieces attacking `sq` under occupancy `occ`."""
        if occ is None:
            occ = self.occ
        base = color * 6
        bb = self.bb
        atk = PAWN_ATK[color ^ 1][sq] & bb[base + PAWN]
        atk |= KNIGHT_ATK[sq] & bb[base + KNIGHT]
        atk |= KING_ATK[sq] & bb[base + KING]
        diag = bb[base + BISHOP] | bb[base + QUEEN]
        if diag:
            atk |= bishop_attacks(sq, occ) & diag
        ortho = bb[base + ROOK] | bb[base + QUEEN]
        if ortho:
            atk |= rook_attacks(sq, occ) & ortho
        return atk

    def is_attacked(self, sq: int, color: int, occ: int | None = None) -> bool:
        return self.attackers_to(sq, color, occ) != 0


def in_check(board: BoardState, color: int) -> bool:
    k = board.king_sq(color)
    return k >= 0 and board.is_attacked(k, color ^ 1)


# ---------------------------------------------------------------------------
# FEN

START_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"


def parse_fen(text: str, strict: bool = True) -> BoardState:
    """Parse a 4-6 field FEN. Lenient mode admits kingless fragments."""
    fields = text.split()
    if not 4 <= len(fields) <= 6:
        raise FenError(f"expected 4-6 FEN fields, got {len(fields)}", field="count")
    board = BoardState()

    ranks = fields[0].split("/")
    if len(ranks) != 8:
        raise FenError(f"expected 8 ranks, got {len(ranks)}", field="placement")
    for r, row in enumerate(ranks):
        f = 0
        for ch in row:
            if ch.isdigit():
                f += int(ch)
            else:
                if ch not in PIECE_CHARS:
                    raise FenError(f"illegal piece character {ch!r}", field="placement")
                if f >= 8:
                    raise FenError(f"rank {8 - r} overflows", field="placement")
                board._put(r * 8 + f, PIECE_CHARS.index(ch))
                f += 1
        if f != 8:
            raise FenError(f"rank {8 - r} has {f} files", field="placement")

    if fields[1] == "w":
        board.turn = WHITE
    elif fields[1] == "b":
        board.turn = BLACK
    else:
        raise FenError(f"bad side to move {fields[1]!r}", field="turn")

    if fields[2] != "-":
        for ch in fields[2]:
            try:
                board.castling |= {"K": CASTLE_WK, "Q": CASTLE_WQ, "k": CASTLE_BK, "q": CASTLE_BQ}[ch]
            except KeyError:
                raise FenError(f"bad castling flag {ch!r}", field="castling") from None
    # drop rights inconsistent with king/rook home squares
    if board.mailbox[_E1] != KING:
        board.castling &= ~(CASTLE_WK | CASTLE_WQ)
    if board.mailbox[_H1] != ROOK:
        board.castling &= ~CASTLE_WK
    if board.mailbox[_A1] != ROOK:
        board.castling &= ~CASTLE_WQ
    if board.mailbox[_E8] != 6 + KING:
        board.castling &= ~(CASTLE_BK | CASTLE_BQ)
    if board.mailbox[_H8] != 6 + ROOK:
        board.castling &= ~CASTLE_BK
    if board.mailbox[_A8] != 6 + ROOK:
        board.castling &= ~CASTLE_BQ

    if fields[3] != "-":
        try:
            board.ep = parse_square(fields[3])
        except (ValueError, IndexError):
            raise FenError(f"bad en-passant square {fields[3]!r}", field="ep") from None

    if len(fields) >= 5:
        try:
            board.halfmove = int(fields[4])
        except ValueError:
            raise FenError(f"bad halfmove clock {fields[4]!r}", field="halfmove") from None
        if board.halfmove < 0:
            raise FenError("negative halfmove clock", field="halfmove")
    if len(fields) >= 6:
        try:
            board.fullmove = int(fields[5])
        except ValueError:
            raise FenError(f"bad fullmove number {fields[5]!r}", field="fullmove") from None
        if board.fullmove < 1:
            raise FenError("fullmove number must be >= 1", field="fullmove")

    for color in (WHITE, BLACK):
        kings = board.bb[color * 6 + KING].bit_count()
        if kings > 1:
            raise FenError(f"{'white' if color == WHITE else 'black'} has {kings} kings", field="placement")
        if strict and kings != 1:
            raise FenError(f"{'white' if color == WHITE else 'black'} has no king", field="placement")
    back_ranks = 0xFF | (0xFF << 56)
    if (board.bb[PAWN] | board.bb[6 + PAWN]) & back_ranks:
        raise FenError("pawn on rank 1 or 8", field="placement")
    if strict and in_check(board, board.turn ^ 1):
        raise FenError("side not to move is in check", field="turn")

    board._recompute_zkey()
    return board


def serialize_fen(board: BoardState) -> str:
    rows = []
    for r in range(8):
        row = ""
        run = 0
        for f in range(8):
            p = board.mailbox[r * 8 + f]
            if p < 0:
                run += 1
            else:
                if run:
                    row += str(run)
                    run = 0
                row += PIECE_CHARS[p]
        if run:
            row += str(run)
        rows.append(row)
    castle = ""
    for flag, ch in ((CASTLE_WK, "K"), (CASTLE_WQ, "Q"), (CASTLE_BK, "k"), (CASTLE_BQ, "q")):
        if board.castling & flag:
            castle += ch
    return " ".join(
        [
            "/".join(rows),
            "w" if board.turn == WHITE else "b",
            castle or "-",
            square_name(board.ep) if board.ep >= 0 else "-",
            str(board.halfmove),
            str(board.fullmove),
        ]
    )


def start_position() -> BoardState:
    return parse_fen(START_FEN)


# ---------------------------------------------------------------------------
# legal move generation

def legal_moves(board: BoardState) -> list[Move]:
    """All legal moves under FIDE rules; empty iff checkmate or stalemate."""
    us = board.turn
    them = us ^ 1
    base = us * 6
    bb = board.bb
    occ = board.occ
    own = board.occ_co[us]
    enemy = board.occ_co[them]
    king = board.king_sq(us)
    moves: list[Move] = []

    if king < 0:
        # kingless lenient fragment: pseudo-legal only, no check logic
        _gen_piece_moves(board, moves, FULL, FULL)
        _gen_pawn_moves(board, moves, FULL, FULL)
        return moves

    checkers = board.attackers_to(king, them)
    n_check = checkers.bit_count()

    # king steps (exclude the king itself from occupancy so sliders x-ray it)
    occ_nk = occ & ~(1 << king)
    tgt = KING_ATK[king] & ~own
    for to in _bits(tgt):
        if not board.is_attacked(to, them, occ_nk):
            moves.append(Move(king, to, flags=F_CAPTURE if board.mailbox[to] >= 0 else 0))

    if n_check >= 2:
        return moves

    if n_check == 1:
        csq = (checkers & -checkers).bit_length() - 1
        capture_mask = checkers
        push_mask = BETWEEN[king][csq] if board.mailbox[csq] % 6 in (BISHOP, ROOK, QUEEN) else 0
    else:
        capture_mask = enemy
        push_mask = ~occ & FULL

    # pinned pieces: for each enemy slider aligned with our king, a single own
    # piece between them is pinned to that line
    pinned = {}
    diag = bb[them * 6 + BISHOP] | bb[them * 6 + QUEEN]
    ortho = bb[them * 6 + ROOK] | bb[them * 6 + QUEEN]
    for snipers, atk_fn in ((diag, bishop_attacks), (ortho, rook_attacks)):
        for s in _bits(snipers):
            line = BETWEEN[king][s]
            if not line and LINE[king][s] == 0:
                continue
            if LINE[king][s] == 0:
                continue
            blockers = line & occ
            if blockers and blockers & (blockers - 1) == 0:
                bsq = (blockers & -blockers).bit_length() - 1
                if blockers & own and atk_fn(s, occ & ~blockers) & (1 << king):
                    pinned[bsq] = LINE[king][s]

    _gen_piece_moves(board, moves, capture_mask, push_mask, pinned, king)
    _gen_pawn_moves(board, moves, capture_mask, push_mask, pinned, king, checkers)

    # castling: not in check, path empty, king path unattacked
    if n_check == 0:
        if us == WHITE:
            if (
                board.castling & CASTLE_WK
                and not occ & ((1 << 61) | (1 << 62))
                and not board.is_attacked(61, them)
                and not board.is_attacked(62, them)
            ):
                moves.append(Move(60, 62, flags=F_CASTLE))
            if (
                board.castling & CASTLE_WQ
                and not occ & ((1 << 57) | (1 << 58) | (1 << 59))
                and not board.is_attacked(59, them)
                and not board.is_attacked(58, them)
            ):
                moves.append(Move(60, 58, flags=F_CASTLE))
        else:
            if (
                board.castling & CASTLE_BK
                and not occ & ((1 << 5) | (1 << 6))
                and not board.is_attacked(5, them)
                and not board.is_attacked(6, them)
            ):
                moves.append(Move(4, 6, flags=F_CASTLE))
            if (
                board.castling & CASTLE_BQ
                and not occ & ((1 << 1) | (1 << 2) | (1 << 3))
                and not board.is_attacked(3, them)
                and not board.is_attacked(2, them)
            ):
                moves.append(Move(4, 2, flags=F_CASTLE))
    return moves


def _gen_piece_moves(board, moves, capture_mask, push_mask, pinned=None, king=-1):
    us = board.turn
    base = us * 6
    bb = board.bb
    occ = board.occ
    own = board.occ_co[us]
    allowed = capture_mask | push_mask
    mailbox = board.mailbox

    for kind, atk_fn in (
        (KNIGHT, None),
        (BISHOP, bishop_attacks),
        (ROOK, rook_attacks),
        (QUEEN, queen_attacks),
    ):
        for frm in _bits(bb[base + kind]):
            if kind == KNIGHT:
                if pinned and frm in pinned:
                    continue  # a pinned knight can never move
                tgt = KNIGHT_ATK[frm] & ~own & allowed
            else:
                tgt = atk_fn(frm, occ) & ~own & allowed
                if pinned and frm in pinned:
                    tgt &= pinned[frm]
            for to in _bits(tgt):
                moves.append(Move(frm, to, flags=F_CAPTURE if mailbox[to] >= 0 else 0))


def _gen_pawn_moves(board, moves, capture_mask, push_mask, pinned=None, king=-1, checkers=0):
    us = board.turn
    them = us ^ 1
    bb = board.bb
    occ = board.occ
    enemy = board.occ_co[them]
    step = -8 if us == WHITE else 8
    start_rank_idx = 6 if us == WHITE else 1   # mailbox row of the double-push rank
    promo_rank_idx = 0 if us == WHITE else 7
    pawns = bb[us * 6 + PAWN]
    ep = board.ep

    for frm in _bits(pawns):
        pin_line = pinned.get(frm) if pinned else None
        row = frm >> 3

        # pushes
        to = frm + step
        if 0 <= to < 64 and not occ & (1 << to):
            if pin_line is None or pin_line & (1 << to):
                if push_mask & (1 << to):
                    if to >> 3 == promo_rank_idx:
                        for pk in (QUEEN, ROOK, BISHOP, KNIGHT):
                            moves.append(Move(frm, to, promo=pk))
                    else:
                        moves.append(Move(frm, to))
                if row == start_rank_idx:
                    to2 = to + step
                    if not occ & (1 << to2) and push_mask & (1 << to2):
                        if pin_line is None or pin_line & (1 << to2):
                            moves.append(Move(frm, to2, flags=F_DOUBLE_PUSH))

        # captures
        tgt = PAWN_ATK[us][frm] & enemy & capture_mask
        if pin_line is not None:
            tgt &= pin_line
        for to in _bits(tgt):
            if to >> 3 == promo_rank_idx:
                for pk in (QUEEN, ROOK, BISHOP, KNIGHT):
                    moves.append(Move(frm, to, promo=pk, flags=F_CAPTURE))
            else:
                moves.append(Move(frm, to, flags=F_CAPTURE))

        # en passant: validated by simulating the capture (rare; covers the
        # horizontal discovered-check trap)
        if ep >= 0 and PAWN_ATK[us][frm] & (1 << ep):
            cap_sq = ep - step
            if checkers and not checkers & (1 << cap_sq) and not push_mask & (1 << ep):
                continue
            if pin_line is not None and not pin_line & (1 << ep):
                continue
            if king >= 0:
                occ2 = (occ & ~(1 << frm) & ~(1 << cap_sq)) | (1 << ep)
                diag = bb[them * 6 + BISHOP] | bb[them * 6 + QUEEN]
                ortho = bb[them * 6 + ROOK] | bb[them * 6 + QUEEN]
                if bishop_attacks(king, occ2) & diag & occ2 or rook_attacks(king, occ2) & ortho & occ2:
                    continue
            moves.append(Move(frm, ep, flags=F_EN_PASSANT | F_CAPTURE))


def apply_move(board: BoardState, move: Move, check_legal: bool = True) -> BoardState:
    """Return the successor position; the input board is not modified."""
    if check_legal and move not in legal_moves(board):
        raise IllegalMoveError(f"{move.uci()} is not legal in {serialize_fen(board)}")

    b = board.copy()
    us = b.turn
    them = us ^ 1
    frm, to = move.from_sq, move.to_sq
    piece = b.mailbox[frm]
    kind = piece % 6
    zk = b.zkey
    pk = zobrist.PIECE_KEYS

    captured = b.mailbox[to]
    if move.flags & F_EN_PASSANT:
        cap_sq = to + (8 if us == WHITE else -8)
        captured = b.mailbox[cap_sq]
        b.bb[captured] &= ~(1 << cap_sq)
        b.occ_co[them] &= ~(1 << cap_sq)
        b.mailbox[cap_sq] = -1
        zk ^= pk[captured][cap_sq]
        captured_any = True
    elif captured >= 0:
        b.bb[captured] &= ~(1 << to)
        b.occ_co[them] &= ~(1 << to)
        zk ^= pk[captured][to]
        captured_any = True
    else:
        captured_any = False

    # move the piece
    b.bb[piece] &= ~(1 << frm)
    b.mailbox[frm] = -1
    zk ^= pk[piece][frm]
    if move.promo is not None:
        piece = us * 6 + move.promo
    b.bb[piece] |= 1 << to
    b.mailbox[to] = piece
    zk ^= pk[piece][to]
    b.occ_co[us] = (b.occ_co[us] & ~(1 << frm)) | (1 << to)

    if move.flags & F_CASTLE:
        if to == 62:
            r_from, r_to = 63, 61
        elif to == 58:
            r_from, r_to = 56, 59
        elif to == 6:
            r_from, r_to = 7, 5
        else:
            r_from, r_to = 0, 3
        rook = us * 6 + ROOK
        b.bb[rook] = (b.bb[rook] & ~(1 << r_from)) | (1 << r_to)
        b.occ_co[us] = (b.occ_co[us] & ~(1 << r_from)) | (1 << r_to)
        b.mailbox[r_from] = -1
        b.mailbox[r_to] = rook
        zk ^= pk[rook][r_from] ^ pk[rook][r_to]

    b.occ = b.occ_co[0] | b.occ_co[1]

    zk ^= zobrist.CASTLE_KEYS[b.castling]
    b.castling &= _CASTLE_CLEAR[frm] & _CASTLE_CLEAR[to]
    zk ^= zobrist.CASTLE_KEYS[b.castling]

    if b.ep >= 0:
        zk ^= zobrist.EP_KEYS[b.ep & 7]
    if move.flags & F_DOUBLE_PUSH:
        b.ep = (frm + to) // 2
        zk ^= zobrist.EP_KEYS[b.ep & 7]
    else:
        b.ep = -1

    b.halfmove = 0 if (kind == PAWN or captured_any) else b.halfmove + 1
    if us == BLACK:
        b.fullmove += 1
    b.turn = them
    zk ^= zobrist.TURN_KEY
    b.zkey = zk
    return b


def move_from_uci(board: BoardState, text: str) -> Move:
    """Resolve a UCI move string against the legal moves of `board`."""
    text = text.strip()
    if not 4 <= len(text) <= 5:
        raise IllegalMoveError(f"bad move syntax {text!r}")
    frm = parse_square(text[:2])
    to = parse_square(text[2:4])
    promo = KIND_CHARS.index(text[4]) if len(text) == 5 else None
    for m in legal_moves(board):
        if m.from_sq == frm and m.to_sq == to and m.promo == promo:
            return m
    raise IllegalMoveError(f"{text} is not legal in {serialize_fen(board)}")


def is_checkmate(board: BoardState) -> bool:
    return in_check(board, board.turn) and not legal_moves(board)


def is_stalemate(board: BoardState) -> bool:
    return not in_check(board, board.turn) and not legal_moves(board)


def perft(board: BoardState, depth: int, _cache: dict | None = None) -> int:
    """Leaf count of the legal move tree, with transposition caching."""
    if depth <= 0:
        return 1
    if _cache is None:
        _cache = {}
    return _perft(board, depth, _cache)


def _perft(board, depth, cache):
    moves = legal_moves(board)
    if depth == 1:
        return len(moves)
    key = (board.zkey, depth)
    hit = cache.get(key)
    if hit is not None:
        return hit
    total = 0
    for m in moves:
        total += _perft(apply_move(board, m, check_legal=False), depth - 1, cache)
    cache[key] = total
    return total
