"""Move-agreement benchmark and filtered classifier accuracy.

For each sampled position we take this engine's move at shallow depth and a
reference engine's move at high depth, then ask the reference engine to
score both resulting child positions at a fixed depth. Moves are "of equal
strength" when those two scores are within a configurable margin; mate
sentinels dominate any centipawn score.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import models
from .board import apply_move, is_checkmate, is_stalemate, move_from_uci, parse_fen, serialize_fen
from .search import Searcher

AGREE_EXACT = "agree-exact"
AGREE_EQUAL = "agree-equal-strength"
DISAGREE = "disagree"

DEFAULT_EPS_CP = 30


@dataclass
class AgreementRecord:
    fen: str
    our_move: str
    our_value_cp: int
    ref_best_move: str
    ref_eval_of_our_move_cp: int
    ref_eval_of_best_move_cp: int
    verdict: str = ""


def verdict_for(record: AgreementRecord, eps_cp: int = DEFAULT_EPS_CP) -> str:
    """An exact move match always agrees; otherwise compare the reference
    engine's white-relative evaluations of the two children."""
    if record.our_move == record.ref_best_move:
        return AGREE_EXACT
    if abs(record.ref_eval_of_our_move_cp - record.ref_eval_of_best_move_cp) <= eps_cp:
        return AGREE_EQUAL
    return DISAGREE


def summarize(records, quarantined: int = 0, eps_cp: int = DEFAULT_EPS_CP, config=None):
    counts = {AGREE_EXACT: 0, AGREE_EQUAL: 0, DISAGREE: 0}
    for r in records:
        counts[r.verdict] += 1
    denom = len(records)
    agreed = counts[AGREE_EXACT] + counts[AGREE_EQUAL]
    return {
        "positions": denom + quarantined,
        "quarantined": quarantined,
        "denominator": denom,
        "counts": counts,
        "agreement": (agreed / denom) if denom else 0.0,
        "eps_cp": eps_cp,
        "config": config or {},
    }


def _child_eval_cp(engine, child, depth) -> int:
    """White-relative reference evaluation of a child position."""
    if is_checkmate(child):
        # side to move in the child is mated
        return -models.MATE_CP if child.turn == 0 else models.MATE_CP
    if is_stalemate(child) or child.halfmove >= 100:
        return 0
    score = engine.analyze(serialize_fen(child), depth=depth)
    return score.white_relative_cp(child.turn == 0)


def run_agreement(fens, searcher: Searcher, ref_engine, our_depth: int = 5,
                  ref_depth: int = 23, eps_cp: int = DEFAULT_EPS_CP,
                  child_depth: int | None = None):
    """Returns (records, summary). Per-position engine failures quarantine the
    position and shrink the denominator."""
    if child_depth is None:
        child_depth = max(1, ref_depth - 1)  # the move already consumed a ply
    records = []
    quarantined = 0
    for fen in fens:
        try:
            board = parse_fen(fen)
            searcher.config.max_depth = our_depth
            ours = searcher.search(board)
            our_uci = ours.bestmove.uci()

            ref = ref_engine.analyze(fen, depth=ref_depth)
            ref_uci = ref.bestmove
            after_ours = apply_move(board, ours.bestmove, check_legal=False)
            eval_ours = _child_eval_cp(ref_engine, after_ours, child_depth)
            if ref_uci == our_uci:
                eval_ref = eval_ours
            else:
                after_ref = apply_move(board, move_from_uci(board, ref_uci), check_legal=False)
                eval_ref = _child_eval_cp(ref_engine, after_ref, child_depth)
            rec = AgreementRecord(
                fen=fen,
                our_move=our_uci,
                our_value_cp=ours.value_cp,
                ref_best_move=ref_uci,
                ref_eval_of_our_move_cp=eval_ours,
                ref_eval_of_best_move_cp=eval_ref,
            )
            rec.verdict = verdict_for(rec, eps_cp)
            records.append(rec)
        except Exception:
            quarantined += 1
    config = {"our_depth": our_depth, "ref_depth": ref_depth, "child_depth": child_depth}
    return records, summarize(records, quarantined, eps_cp, config)


def replay_verdicts(records, eps_cp: int = DEFAULT_EPS_CP):
    """Recompute verdicts on recorded engine outputs (fixture replay)."""
    out = []
    for r in records:
        r2 = AgreementRecord(**{**asdict(r), "verdict": ""})
        r2.verdict = verdict_for(r2, eps_cp)
        out.append(r2)
    return out, summarize(out, 0, eps_cp)


def emit_report(records, summary, json_path, tsv_path):
    """JSON summary plus a per-position TSV table, deterministically ordered."""
    if not records:
        raise ValueError("no records to report")
    records = sorted(records, key=lambda r: r.fen)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    cols = ["fen", "our_move", "our_value_cp", "ref_best_move",
            "ref_eval_of_our_move_cp", "ref_eval_of_best_move_cp", "verdict"]
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for r in records:
            d = asdict(r)
            fh.write("\t".join(str(d[c]) for c in cols) + "\n")


# -- filtered classifier accuracy -------------------------------------------

def run_filtered_accuracy(classifier, features, cps):
    """Accuracy unfiltered, with the boundary band removed, and with all
    drawish boards removed. Returns the three accuracies in that order."""
    features = np.asarray(features, dtype=np.float32)
    cps = np.asarray(cps)
    labels = np.array([models.label(int(c)) for c in cps])
    preds = []
    for i in range(0, len(features), 1024):
        probs = models.classify(classifier, features[i : i + 1024])
        preds.append(np.argmax(probs, axis=-1))
    preds = np.concatenate(preds) if preds else np.array([], dtype=int)

    abs_cp = np.abs(cps)
    masks = [
        np.ones(len(cps), dtype=bool),
        ~((abs_cp >= 115) & (abs_cp <= 185)),
        abs_cp > 250,
    ]
    accs = []
    for mask in masks:
        if not mask.any():
            raise ValueError("filtered test set is empty")
        accs.append(float(np.mean(preds[mask] == labels[mask])))
    return tuple(accs)
