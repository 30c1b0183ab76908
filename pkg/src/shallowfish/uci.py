"""UCI protocol, both directions.

`UciServer` exposes the engine to GUIs and to the benchmark harness;
`EngineHandle` drives an external engine over child-process stdio for
labeling and benchmarking. Scores on the wire are side-to-move relative,
per UCI convention.
"""

from __future__ import annotations

import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from queue import Empty, Queue

from .board import (
    BoardState, IllegalMoveError, apply_move, move_from_uci, parse_fen,
    start_position,
)
from .search import SearchCancelled, Searcher, TerminalPositionError

ENGINE_NAME = "shallowfish"
ENGINE_AUTHOR = "shallowfish developers"


# ---------------------------------------------------------------------------
# server

class UciServer:
    """One reader loop, one search worker. `stop` interrupts promptly via the
    searcher's shared cancellation flag."""

    def __init__(self, searcher: Searcher, name: str = ENGINE_NAME):
        self.searcher = searcher
        self.name = name
        self.board = start_position()
        self.history: dict[int, int] = {}
        self.depth_cap: int | None = None  # MaxDepth option, for strength limiting
        self._worker: threading.Thread | None = None
        self._out_lock = threading.Lock()

    def run(self, instream, outstream) -> None:
        """Serve UCI until `quit` or EOF."""
        self._out = outstream
        for line in instream:
            if not self.handle_line(line.rstrip("\n")):
                break
        self._join_worker()

    def _send(self, text):
        with self._out_lock:
            self._out.write(text + "\n")
            self._out.flush()

    def handle_line(self, line: str) -> bool:
        """Process one command; returns False on `quit`."""
        parts = line.split()
        if not parts:
            return True
        cmd = parts[0]
        if cmd == "uci":
            self._send(f"id name {self.name}")
            self._send(f"id author {ENGINE_AUTHOR}")
            self._send("option name Threads type spin default 1 min 1 max 64")
            self._send("option name Hash type spin default 16 min 1 max 1024")
            self._send("option name PruneTau type string default 1.0")
            self._send("option name MaxDepth type spin default 0 min 0 max 64")
            self._send("uciok")
        elif cmd == "isready":
            self._send("readyok")
        elif cmd == "setoption":
            self._setoption(parts[1:])
        elif cmd == "ucinewgame":
            self._join_worker()
            self.searcher.tt.clear()
            self.board = start_position()
            self.history = {}
        elif cmd == "position":
            self._join_worker()
            try:
                self._position(parts[1:])
            except (ValueError, IllegalMoveError) as exc:
                self._send(f"info string error: {exc}")
        elif cmd == "go":
            self._go(parts[1:])
        elif cmd == "stop":
            self.searcher.stop()
            self._join_worker()
        elif cmd == "quit":
            self.searcher.stop()
            return False
        # unknown commands are ignored, per UCI convention
        return True

    def _setoption(self, parts):
        try:
            name_idx = parts.index("name") + 1
            value_idx = parts.index("value")
            name = " ".join(parts[name_idx:value_idx]).lower()
            value = " ".join(parts[value_idx + 1 :])
        except ValueError:
            return
        cfg = self.searcher.config
        if name == "threads":
            cfg.threads = max(1, int(value))
        elif name == "hash":
            # interpret MB the way GUIs mean it; entries are coarse here
            self.searcher.tt.capacity = max(1, int(value)) * 65536
        elif name == "prunetau":
            cfg.prune_tau = float(value)
        elif name == "maxdepth":
            n = int(value)
            self.depth_cap = n if n > 0 else None

    def _position(self, parts):
        if not parts:
            raise ValueError("empty position command")
        if parts[0] == "startpos":
            board = start_position()
            rest = parts[1:]
        elif parts[0] == "fen":
            try:
                moves_at = parts.index("moves")
                fen_fields, rest = parts[1:moves_at], parts[moves_at:]
            except ValueError:
                fen_fields, rest = parts[1:], []
            board = parse_fen(" ".join(fen_fields))
        else:
            raise ValueError(f"bad position subcommand {parts[0]!r}")
        history: dict[int, int] = {board.zkey: 1}
        if rest and rest[0] == "moves":
            for text in rest[1:]:
                board = apply_move(board, move_from_uci(board, text), check_legal=False)
                history[board.zkey] = history.get(board.zkey, 0) + 1
        self.board = board
        self.history = history

    def _go(self, parts):
        self._join_worker()
        cfg = self.searcher.config
        depth = None
        movetime = None
        max_nodes = None
        i = 0
        while i < len(parts):
            tok = parts[i]
            if tok == "depth":
                depth = int(parts[i + 1]); i += 2
            elif tok == "movetime":
                movetime = int(parts[i + 1]) / 1000.0; i += 2
            elif tok == "nodes":
                max_nodes = int(parts[i + 1]); i += 2
            elif tok == "infinite":
                depth = 64; i += 1
            elif tok in ("wtime", "btime", "winc", "binc", "movestogo", "mate"):
                i += 2  # time controls beyond movetime are not managed
            else:
                i += 1
        if depth is not None:
            cfg.max_depth = depth
        if self.depth_cap is not None:
            cfg.max_depth = min(cfg.max_depth, self.depth_cap)
        cfg.movetime = movetime
        cfg.max_nodes = max_nodes

        board = self.board
        history = dict(self.history)
        # exclude the root itself: the searcher treats "seen before" as a draw
        if board.zkey in history:
            history[board.zkey] -= 1

        def work():
            try:
                result = self.searcher.search(board, history, on_iteration=self._emit_info)
                self._send(f"bestmove {result.bestmove.uci()}")
            except TerminalPositionError as exc:
                self._send(f"info string error: {exc}")
                self._send("bestmove 0000")

        self._worker = threading.Thread(target=work, daemon=True)
        self._worker.start()

    def _emit_info(self, result):
        mate = result.mate_in
        score = f"mate {mate}" if mate is not None else f"cp {result.value_cp}"
        pv = " ".join(m.uci() for m in result.pv)
        self._send(
            f"info depth {result.depth} score {score} nodes {result.nodes} "
            f"nps {int(result.nps)} time {int(result.elapsed * 1000)} pv {pv}"
        )

    def _join_worker(self):
        if self._worker is not None and self._worker.is_alive():
            self._worker.join()
        self._worker = None


# ---------------------------------------------------------------------------
# client

@dataclass
class EngineScore:
    kind: str  # "cp" | "mate"
    value: int  # side-to-move relative
    depth: int
    bestmove: str
    pv: list = field(default_factory=list)

    def white_relative_cp(self, white_to_move: bool, mate_cp: int = 10000) -> int:
        """Convert to white-relative centipawns with mate sentinels."""
        if self.kind == "mate":
            cp = mate_cp if self.value > 0 else -mate_cp
        else:
            cp = self.value
        return cp if white_to_move else -cp


class UciClientError(RuntimeError):
    pass


class EngineHandle:
    """Child-process UCI engine. Not shareable across threads; pools own
    several independent handles."""

    def __init__(self, command, startup_timeout: float = 30.0):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = command
        self.startup_timeout = startup_timeout
        self.state = "created"
        self.name = None
        self.proc = None
        self._lines: Queue = Queue()

    def start(self):
        self.proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._write("uci")
        deadline = time.monotonic() + self.startup_timeout
        while True:
            line = self._next_line(deadline - time.monotonic())
            if line.startswith("id name"):
                self.name = line[8:].strip()
            if line == "uciok":
                break
        self._write("isready")
        self._wait_for("readyok", self.startup_timeout)
        self.state = "handshaken"
        return self

    def _read_loop(self):
        try:
            for line in self.proc.stdout:
                self._lines.put(line.rstrip("\n"))
        except ValueError:
            pass
        self._lines.put(None)  # EOF marker

    def _write(self, text):
        if self.proc is None or self.proc.poll() is not None:
            self.state = "dead"
            raise UciClientError("engine process is dead")
        try:
            self.proc.stdin.write(text + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.state = "dead"
            raise UciClientError(f"engine pipe closed: {exc}") from None

    def _next_line(self, timeout):
        try:
            line = self._lines.get(timeout=max(0.01, timeout))
        except Empty:
            self.state = "dead"
            raise UciClientError("engine timed out") from None
        if line is None:
            self.state = "dead"
            raise UciClientError("engine closed its output")
        return line

    def _wait_for(self, token, timeout):
        deadline = time.monotonic() + timeout
        while True:
            if self._next_line(deadline - time.monotonic()) == token:
                return

    def set_option(self, name, value):
        self._write(f"setoption name {name} value {value}")

    def new_game(self):
        self._write("ucinewgame")
        self._write("isready")
        self._wait_for("readyok", self.startup_timeout)

    def analyze(self, fen: str, depth: int | None = None, movetime_ms: int | None = None,
                timeout: float = 120.0) -> EngineScore:
        """Blocking analysis; returns the deepest reported score and pv."""
        if self.state != "handshaken":
            raise UciClientError(f"handle not ready (state={self.state})")
        self.state = "searching"
        try:
            self._write(f"position fen {fen}")
            if depth is not None:
                self._write(f"go depth {depth}")
            elif movetime_ms is not None:
                self._write(f"go movetime {movetime_ms}")
            else:
                raise ValueError("need depth or movetime")
            score = EngineScore("cp", 0, 0, "")
            deadline = time.monotonic() + timeout
            while True:
                line = self._next_line(deadline - time.monotonic())
                parts = line.split()
                if not parts:
                    continue
                if parts[0] == "info":
                    self._parse_info(parts, score)
                elif parts[0] == "bestmove":
                    score.bestmove = parts[1] if len(parts) > 1 else ""
                    return score
                # all other chatter is consumed and discarded
        finally:
            if self.state == "searching":
                self.state = "handshaken"

    @staticmethod
    def _parse_info(parts, score):
        depth = None
        i = 1
        while i < len(parts):
            tok = parts[i]
            if tok == "depth":
                depth = int(parts[i + 1]); i += 2
            elif tok == "score":
                score.kind = parts[i + 1]
                score.value = int(parts[i + 2])
                i += 3
            elif tok == "pv":
                score.pv = parts[i + 1 :]
                break
            else:
                i += 1
        if depth is not None and depth >= score.depth:
            score.depth = depth

    def quit(self):
        if self.proc is not None and self.proc.poll() is None:
            try:
                self._write("quit")
            except UciClientError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
        self.state = "dead"

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.quit()
