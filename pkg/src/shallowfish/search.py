"""Depth-limited lookahead: alpha-beta with move ordering, transposition
table, iterative deepening, optional classifier pruning, and root-split
parallelism.

Values inside the search are side-to-move relative floats. Ordinary
evaluations live in (-1, 1); mate scores occupy a reserved band up to
MATE_VALUE so that nearer mates are preferred.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import models
from .board import (
    BoardState, Move, WHITE, apply_move, in_check, legal_moves, serialize_fen,
)
from .encoding import encode

MATE_VALUE = 2.0
MATE_STEP = 0.001
MATE_BOUND = 1.3  # anything beyond this is a mate score
MAX_PLY = 128

EXACT, LOWER, UPPER = 0, 1, 2

# MVV-LVA uses plain piece values; king as attacker ranks last
_MVV_VALUES = (1, 3, 3, 5, 9, 20)


class SearchCancelled(Exception):
    pass


class TerminalPositionError(ValueError):
    pass


@dataclass
class SearchConfig:
    max_depth: int = 5
    threads: int = 1
    tt_capacity: int = 1 << 20
    use_tt: bool = True
    use_ordering: bool = True
    prune_tau: float = 1.0  # 1.0 disables the classifier gate
    prune_max_depth: int = 2
    movetime: float | None = None  # seconds
    max_nodes: int | None = None


@dataclass
class SearchResult:
    bestmove: Move
    value: float  # side-to-move relative, normalized
    value_cp: int  # side-to-move relative centipawns (+-10000 for mates)
    pv: list
    nodes: int
    depth: int
    elapsed: float

    @property
    def nps(self) -> float:
        return self.nodes / self.elapsed if self.elapsed > 0 else 0.0

    @property
    def mate_in(self) -> int | None:
        """Signed full-move mate distance, or None for a non-mate score."""
        if abs(self.value) < MATE_BOUND:
            return None
        plies = round((MATE_VALUE - abs(self.value)) / MATE_STEP)
        moves = (plies + 1) // 2
        return moves if self.value > 0 else -moves


def value_to_cp(v: float) -> int:
    if v > MATE_BOUND:
        return models.MATE_CP
    if v < -MATE_BOUND:
        return -models.MATE_CP
    return models.denormalize(v)


class TTEntry:
    __slots__ = ("key", "depth", "value", "bound", "move", "generation")

    def __init__(self, key, depth, value, bound, move, generation):
        self.key = key
        self.depth = depth
        self.value = value
        self.bound = bound
        self.move = move
        self.generation = generation


class TranspositionTable:
    """Bucketed by key modulo capacity; depth-preferred, generation-aware
    replacement. Reads verify the full 64-bit key."""

    def __init__(self, capacity: int = 1 << 20):
        self.capacity = max(1, capacity)
        self.table: dict[int, TTEntry] = {}
        self.generation = 0

    def new_search(self):
        self.generation += 1

    def probe(self, key: int) -> TTEntry | None:
        e = self.table.get(key % self.capacity)
        if e is not None and e.key == key:
            return e
        return None

    def store(self, key, depth, value, bound, move):
        slot = key % self.capacity
        old = self.table.get(slot)
        if old is not None and old.generation == self.generation and old.depth > depth and old.key != key:
            return
        self.table[slot] = TTEntry(key, depth, value, bound, move, self.generation)

    def clear(self):
        self.table.clear()


def mvv_lva(board: BoardState, move: Move) -> int:
    """Capture ordering score: most valuable victim, least valuable attacker."""
    victim = board.mailbox[move.to_sq]
    victim_kind = victim % 6 if victim >= 0 else 0  # en passant victim is a pawn
    attacker_kind = board.mailbox[move.from_sq] % 6
    return _MVV_VALUES[victim_kind] * 100 - _MVV_VALUES[attacker_kind]


def order_moves(board: BoardState, moves: list[Move], tt_move: Move | None = None) -> list[Move]:
    """TT hint first, captures by MVV-LVA, quiets in stable generation order."""
    hinted = []
    captures = []
    quiets = []
    for m in moves:
        if tt_move is not None and m == tt_move:
            hinted.append(m)
        elif m.is_capture:
            captures.append(m)
        else:
            quiets.append(m)
    captures.sort(key=lambda m: -mvv_lva(board, m))
    return hinted + captures + quiets


def static_eval(board: BoardState, evaluator) -> float:
    """White-relative normalized value, with terminal short-circuits."""
    moves = legal_moves(board)
    if not moves:
        if in_check(board, board.turn):
            return -MATE_VALUE if board.turn == WHITE else MATE_VALUE
        return 0.0
    if board.halfmove >= 100:
        return 0.0
    return float(evaluator(board))


def neural_evaluator(bundle: models.ModelBundle):
    """White-relative evaluator backed by the autoencoder + evaluator nets."""
    if bundle.evaluator is None:
        raise ValueError("model bundle has no evaluator")

    def ev(board: BoardState) -> float:
        latent = models.encode_latent(bundle.autoencoder, encode(board)[None, :].astype(np.float32))
        return float(models.evaluate_static(bundle.evaluator, latent)[0])

    return ev


class Searcher:
    """One search instance; reusable across positions, owns its TT."""

    def __init__(self, evaluator, config: SearchConfig | None = None, classifier=None):
        self.evaluator = evaluator
        self.config = config or SearchConfig()
        self.classifier = classifier
        self.tt = TranspositionTable(self.config.tt_capacity)
        self.nodes = 0
        self._stop = threading.Event()
        self._deadline = None
        self._lock = threading.Lock()

    def stop(self):
        self._stop.set()

    # -- classifier gate ----------------------------------------------------

    def classifier_gate(self, board, remaining_depth, alpha, beta, is_pv, checked):
        """True when the subtree is hopeless for the side to move and may be
        pruned at shallow remaining depth. Never fires on PV or in-check nodes,
        and never at tau = 1."""
        tau = self.config.prune_tau
        if self.classifier is None or tau >= 1.0:
            return False
        if is_pv or checked or remaining_depth > self.config.prune_max_depth:
            return False
        probs = models.classify(self.classifier, encode(board).astype(np.float32))
        losing_class = models.BLACK_WINNING if board.turn == WHITE else models.WHITE_WINNING
        return float(probs[losing_class]) > tau

    # -- core ---------------------------------------------------------------

    def _check_abort(self):
        if self._stop.is_set():
            raise SearchCancelled
        if self._deadline is not None and time.monotonic() > self._deadline:
            raise SearchCancelled
        if self.config.max_nodes is not None and self.nodes >= self.config.max_nodes:
            raise SearchCancelled

    def _eval_stm(self, board):
        v = float(self.evaluator(board))
        return v if board.turn == WHITE else -v

    def _negamax(self, board, depth, alpha, beta, ply, history, is_pv):
        self.nodes += 1
        if self.nodes % 256 == 0:
            self._check_abort()

        if ply > 0 and (board.halfmove >= 100 or history.get(board.zkey, 0) >= 1):
            return 0.0, []

        moves = legal_moves(board)
        if not moves:
            if in_check(board, board.turn):
                return -(MATE_VALUE - ply * MATE_STEP), []
            return 0.0, []
        if depth <= 0:
            return self._eval_stm(board), []

        tt_move = None
        key = board.zkey
        if self.config.use_tt:
            entry = self.tt.probe(key)
            if entry is not None:
                tt_move = entry.move
                if entry.depth >= depth and not is_pv:
                    v = _value_from_tt(entry.value, ply)
                    if entry.bound == EXACT:
                        return v, []
                    if entry.bound == LOWER and v >= beta:
                        return v, []
                    if entry.bound == UPPER and v <= alpha:
                        return v, []

        checked = in_check(board, board.turn)
        if self.classifier_gate(board, depth, alpha, beta, is_pv, checked):
            return alpha, []  # fail low: subtree judged hopeless for side to move

        if self.config.use_ordering:
            moves = order_moves(board, moves, tt_move)

        best = -float("inf")
        best_move = None
        best_pv = []
        alpha_orig = alpha
        history[key] = history.get(key, 0) + 1
        try:
            for i, m in enumerate(moves):
                child = apply_move(board, m, check_legal=False)
                v, pv = self._negamax(
                    child, depth - 1, -beta, -alpha, ply + 1, history,
                    is_pv and i == 0,
                )
                v = -v
                if v > best:
                    best = v
                    best_move = m
                    best_pv = [m] + pv
                if v > alpha:
                    alpha = v
                if alpha >= beta:
                    break
        finally:
            if history[key] <= 1:
                del history[key]
            else:
                history[key] -= 1

        if self.config.use_tt:
            if best <= alpha_orig:
                bound = UPPER
            elif best >= beta:
                bound = LOWER
            else:
                bound = EXACT
            self.tt.store(key, depth, _value_to_tt(best, ply), bound, best_move)
        return best, best_pv

    # -- root ---------------------------------------------------------------

    def _search_depth(self, board, depth, root_moves, history):
        """One fixed-depth iteration; returns (value, move, pv) for the best
        root move, lowest generation index winning ties."""
        n_threads = min(self.config.threads, len(root_moves))
        if n_threads <= 1:
            return self._root_subset(board, depth, list(enumerate(root_moves)), history)

        results = [None] * n_threads
        subsets = [list(enumerate(root_moves))[t::n_threads] for t in range(n_threads)]
        errors = []

        def worker(t):
            try:
                results[t] = self._root_subset(board, depth, subsets[t], dict(history))
            except BaseException as exc:  # noqa: BLE001 - propagated below
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(t,)) for t in range(n_threads)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if errors:
            raise errors[0]
        # deterministic merge: highest value, then lowest root-move index
        best = None
        for r in results:
            if r is None:
                continue
            if best is None or r[0] > best[0] or (r[0] == best[0] and r[3] < best[3]):
                best = r
        return best

    def _root_subset(self, board, depth, indexed_moves, history):
        best = (-float("inf"), None, [], 1 << 30)
        alpha, beta = -float("inf"), float("inf")
        history[board.zkey] = history.get(board.zkey, 0) + 1
        try:
            for idx, m in indexed_moves:
                child = apply_move(board, m, check_legal=False)
                v, pv = self._negamax(child, depth - 1, -beta, -alpha, 1, history, idx == 0)
                v = -v
                if v > best[0]:
                    best = (v, m, [m] + pv, idx)
                if v > alpha:
                    alpha = v
        finally:
            history[board.zkey] -= 1
        return best

    def search(self, board: BoardState, history=None, on_iteration=None) -> SearchResult:
        """Iterative deepening to config.max_depth. `history` is a mapping of
        zobrist key -> occurrence count for repetition detection."""
        root_moves = legal_moves(board)
        if not root_moves:
            state = "checkmate" if in_check(board, board.turn) else "stalemate"
            raise TerminalPositionError(f"{state} in {serialize_fen(board)}")

        self._stop.clear()
        self.nodes = 0
        self.tt.new_search()
        self._deadline = (
            time.monotonic() + self.config.movetime if self.config.movetime else None
        )
        history = dict(history or {})
        t0 = time.monotonic()

        if self.config.use_ordering:
            root_moves = order_moves(board, root_moves)

        result = None
        for depth in range(1, self.config.max_depth + 1):
            try:
                value, move, pv, _ = self._search_depth(board, depth, root_moves, history)
            except SearchCancelled:
                break
            result = SearchResult(
                bestmove=move,
                value=value,
                value_cp=value_to_cp(value),
                pv=pv,
                nodes=self.nodes,
                depth=depth,
                elapsed=time.monotonic() - t0,
            )
            if on_iteration is not None:
                on_iteration(result)
            if self.config.use_ordering:
                # seed the next iteration's ordering with this best move
                root_moves = [move] + [m for m in root_moves if m != move]
            if abs(value) > MATE_BOUND and value > 0:
                break  # forced mate found; deeper search cannot improve it
        if result is None:
            # cancelled before depth 1 finished: fall back to the first move
            result = SearchResult(
                bestmove=root_moves[0], value=0.0, value_cp=0, pv=[root_moves[0]],
                nodes=self.nodes, depth=0, elapsed=time.monotonic() - t0,
            )
        return result


def _value_to_tt(v, ply):
    if v > MATE_BOUND:
        return v + ply * MATE_STEP
    if v < -MATE_BOUND:
        return v - ply * MATE_STEP
    return v


def _value_from_tt(v, ply):
    if v > MATE_BOUND:
        return v - ply * MATE_STEP
    if v < -MATE_BOUND:
        return v + ply * MATE_STEP
    return v


def minimax_value(board: BoardState, depth: int, evaluator, ply: int = 0) -> tuple[float, Move | None]:
    """Brute-force minimax over the same evaluator; the oracle for alphabeta.

    Uses the same mate-distance and 50-move conventions as the search so the
    two are comparable. Returns (side-to-move value, first best move in
    generation order).
    """
    if ply > 0 and board.halfmove >= 100:
        return 0.0, None
    moves = legal_moves(board)
    if not moves:
        if in_check(board, board.turn):
            return -(MATE_VALUE - ply * MATE_STEP), None
        return 0.0, None
    if depth <= 0:
        v = float(evaluator(board))
        return (v if board.turn == WHITE else -v), None
    best, best_move = -float("inf"), None
    for m in moves:
        child = apply_move(board, m, check_legal=False)
        v, _ = minimax_value(child, depth - 1, evaluator, ply + 1)
        v = -v
        if v > best:
            best, best_move = v, m
    return best, best_move
