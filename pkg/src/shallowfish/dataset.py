"""Labeled-corpus construction: ingest games, dedup positions, label them
through a UCI engine, apply random-move expansion, split and emit.

Canonical store is a TSV of `FEN<TAB>cp<TAB>source<TAB>depth`; a packed
binary feature cache (775 feature bytes + 8-byte cp per sample) serves
training throughput. All stages are deterministic given their seeds, and
emitted files are canonically sorted so worker scheduling never changes
output bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import models
from .board import BoardState, legal_moves, parse_fen, serialize_fen, apply_move
from .encoding import NUM_FEATURES, encode, feature_key
from .pgn import IngestStats, positions_from_games

DEFAULT_LABEL_DEPTH = 12

HIST_BINS = 50
HIST_EDGES = np.linspace(-10001.0, 10001.0, HIST_BINS + 1)


class DatasetError(ValueError):
    pass


@dataclass
class LabeledSample:
    fen: str
    cp: int
    source: str = "original"  # "original" | "expanded"
    depth: int = DEFAULT_LABEL_DEPTH

    def __post_init__(self):
        if self.source not in ("original", "expanded"):
            raise DatasetError(f"bad source {self.source!r}")
        if abs(self.cp) > models.MATE_CP:
            raise DatasetError(f"cp {self.cp} out of range")
        if self.depth < 1:
            raise DatasetError(f"depth {self.depth} < 1")


@dataclass
class PipelineStats:
    ingest: IngestStats = field(default_factory=IngestStats)
    duplicates: int = 0
    quarantined: int = 0
    expanded: int = 0


def dedup(boards, stats: PipelineStats | None = None):
    """Keep the first occurrence of each position, keyed on what the
    775-feature encoding can distinguish (en passant and clocks ignored)."""
    seen = set()
    for board in boards:
        key = feature_key(board)
        if key in seen:
            if stats is not None:
                stats.duplicates += 1
            continue
        seen.add(key)
        yield board


def score_from_engine(engine, fen: str, depth: int, white_to_move: bool) -> int:
    """One engine analysis mapped to white-relative cp with mate sentinels."""
    score = engine.analyze(fen, depth=depth)
    return score.white_relative_cp(white_to_move, mate_cp=models.MATE_CP)


def label_positions(boards, engines, depth: int = DEFAULT_LABEL_DEPTH,
                    stats: PipelineStats | None = None):
    """Label a stream of positions; engine failures retry once, then the
    position is quarantined and the pipeline continues."""
    if not isinstance(engines, (list, tuple)):
        engines = [engines]
    for i, board in enumerate(boards):
        fen = serialize_fen(board)
        engine = engines[i % len(engines)]
        cp = None
        for _attempt in range(2):
            try:
                cp = score_from_engine(engine, fen, depth, board.turn == 0)
                break
            except Exception:
                continue
        if cp is None:
            if stats is not None:
                stats.quarantined += 1
            continue
        yield LabeledSample(fen, cp, "original", depth)


def expand(samples, fraction: float, seed: int, engines,
           depth: int = DEFAULT_LABEL_DEPTH, stats: PipelineStats | None = None,
           known_keys: set | None = None):
    """Artificial expansion: for a random portion of samples, play one
    uniformly random legal move and label the child position."""
    if not 0.0 <= fraction <= 1.0:
        raise DatasetError(f"fraction {fraction} outside [0, 1]")
    if not isinstance(engines, (list, tuple)):
        engines = [engines]
    rng = np.random.default_rng(seed)
    if known_keys is None:
        known_keys = {feature_key(parse_fen(s.fen)) for s in samples}
    out = []
    lineage = {}
    for i, sample in enumerate(samples):
        if rng.random() >= fraction:
            continue
        board = parse_fen(sample.fen)
        moves = legal_moves(board)
        if not moves:
            continue  # terminal positions cannot be expanded
        move = moves[int(rng.integers(len(moves)))]
        child = apply_move(board, move, check_legal=False)
        key = feature_key(child)
        if key in known_keys:
            continue
        known_keys.add(key)
        fen = serialize_fen(child)
        cp = None
        engine = engines[i % len(engines)]
        for _attempt in range(2):
            try:
                cp = score_from_engine(engine, fen, depth, child.turn == 0)
                break
            except Exception:
                continue
        if cp is None:
            if stats is not None:
                stats.quarantined += 1
            continue
        out.append(LabeledSample(fen, cp, "expanded", depth))
        lineage[fen] = sample.fen
        if stats is not None:
            stats.expanded += 1
    return out, lineage


@dataclass
class CorpusStats:
    histogram: list
    class_counts: dict
    total: int
    duplicates: int = 0

    @classmethod
    def from_samples(cls, samples, duplicates: int = 0):
        cps = np.array([s.cp for s in samples], dtype=np.float64)
        hist, _ = np.histogram(cps, bins=HIST_EDGES) if len(cps) else (np.zeros(HIST_BINS, int), None)
        counts = {name: 0 for name in models.CLASS_NAMES}
        for s in samples:
            counts[models.CLASS_NAMES[models.label(s.cp)]] += 1
        return cls(hist.tolist(), counts, len(samples), duplicates)

    def to_json(self):
        return json.dumps(
            {
                "total": self.total,
                "duplicates": self.duplicates,
                "bin_edges": [float(e) for e in HIST_EDGES],
                "histogram": self.histogram,
                "class_counts": self.class_counts,
            },
            indent=2,
            sort_keys=True,
        )


def split_and_emit(samples, train_fraction: float, seed: int,
                   train_path, test_path, stats_path=None,
                   duplicates: int = 0) -> CorpusStats:
    """Uniform random split at the given fraction; files are sorted for
    byte-stable output."""
    samples = sorted(samples, key=lambda s: (s.fen, s.source))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    n_train = int(round(len(samples) * train_fraction))
    train = sorted((samples[i] for i in order[:n_train]), key=lambda s: (s.fen, s.source))
    test = sorted((samples[i] for i in order[n_train:]), key=lambda s: (s.fen, s.source))
    write_tsv(train, train_path)
    write_tsv(test, test_path)
    stats = CorpusStats.from_samples(samples, duplicates)
    if stats_path is not None:
        with open(stats_path, "w", encoding="utf-8") as fh:
            fh.write(stats.to_json() + "\n")
    return stats


# -- stores -----------------------------------------------------------------

def write_tsv(samples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(f"{s.fen}\t{s.cp}\t{s.source}\t{s.depth}\n")


def read_tsv(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DatasetError(f"{path}:{ln}: expected 4 fields")
            fen, cp, source, depth = parts
            parse_fen(fen)  # every stored FEN must strictly re-parse
            out.append(LabeledSample(fen, int(cp), source, int(depth)))
    return out


def write_feature_cache(samples, path):
    """Packed binary cache: 775 feature bytes + little-endian int64 cp each."""
    with open(path, "wb") as fh:
        for s in samples:
            fh.write(encode(parse_fen(s.fen)).tobytes())
            fh.write(struct.pack("<q", s.cp))


def read_feature_cache(path):
    """Returns (features uint8 (n, 775), cp int64 (n,))."""
    rec = NUM_FEATURES + 8
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) % rec:
        raise DatasetError(f"feature cache size {len(raw)} not a multiple of {rec}")
    n = len(raw) // rec
    buf = np.frombuffer(raw, dtype=np.uint8).reshape(n, rec)
    feats = buf[:, :NUM_FEATURES].copy()
    cps = buf[:, NUM_FEATURES:].copy().view("<i8").reshape(n)
    return feats, cps


def samples_to_arrays(samples):
    """Features and cp labels as training-ready arrays."""
    feats = np.zeros((len(samples), NUM_FEATURES), dtype=np.uint8)
    cps = np.zeros(len(samples), dtype=np.int64)
    for i, s in enumerate(samples):
        feats[i] = encode(parse_fen(s.fen))
        cps[i] = s.cp
    return feats, cps
