"""Command-line front door: dataset building, training, evaluation, UCI
serving, and the agreement benchmark.

Exit codes: 0 success, 1 usage error, 2 data error, 3 engine-interop error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ENGINE = 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args) or EXIT_OK
    except BrokenPipeError:
        return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="shallowfish", description=__doc__)
    sub = p.add_subparsers(dest="command")

    d = sub.add_parser("dataset", help="build a labeled corpus from PGN games and a UCI engine")
    d.add_argument("--pgn", required=True, help="input PGN file")
    d.add_argument("--engine", required=True, help="UCI engine command for labeling")
    d.add_argument("--depth", type=int, default=12, help="labeling search depth (default 12)")
    d.add_argument("--expand-fraction", type=float, default=0.5,
                   help="fraction of positions given one random move and relabeled (default 0.5)")
    d.add_argument("--train-fraction", type=float, default=0.9, help="train split fraction")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--limit", type=int, default=0, help="cap on ingested positions (0 = no cap)")
    d.add_argument("--workers", type=int, default=1, help="parallel engine handles")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--cache", action="store_true", help="also write packed feature caches")
    d.set_defaults(func=cmd_dataset)

    s = sub.add_parser("synth", help="build a self-contained desk corpus (playouts + material labels)")
    s.add_argument("--count", type=int, default=50000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--train-fraction", type=float, default=0.9)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train one model on a sample file")
    t.add_argument("model", choices=["autoencoder", "classifier", "evaluator"])
    t.add_argument("--samples", required=True, help="training TSV")
    t.add_argument("--test", help="held-out TSV for per-epoch metrics")
    t.add_argument("--models-dir", required=True)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--lr", type=float, default=0.001, help="Adam learning rate (default 0.001)")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="print the static evaluation of one FEN")
    e.add_argument("fen", help='FEN string or "startpos"')
    e.add_argument("--models-dir", required=True)
    e.set_defaults(func=cmd_eval)

    u = sub.add_parser("uci", help="serve the engine over UCI on stdio")
    u.add_argument("--models-dir", help="directory with trained weights")
    u.add_argument("--eval", choices=["neural", "material"], default="neural",
                   help="evaluation backend (material needs no weights)")
    u.add_argument("--max-depth", type=int, default=5, help="search depth (default 5)")
    u.add_argument("--threads", type=int, default=1)
    u.add_argument("--name", default=None, help="engine name reported to the GUI")
    u.set_defaults(func=cmd_uci)

    b = sub.add_parser("bench", help="benchmarks")
    bsub = b.add_subparsers(dest="bench_command")
    ba = bsub.add_parser("agree", help="move agreement against a reference engine")
    ba.add_argument("--positions", required=True, help="file with one FEN per line")
    ba.add_argument("--ref-engine", required=True, help="reference UCI engine command")
    ba.add_argument("--our-depth", type=int, default=5)
    ba.add_argument("--ref-depth", type=int, default=23)
    ba.add_argument("--child-depth", type=int, default=None,
                    help="depth for child re-analysis (default ref-depth - 1)")
    ba.add_argument("--eps-cp", type=int, default=30,
                    help="equal-strength margin in centipawns (default 30)")
    ba.add_argument("--our-eval", choices=["neural", "material"], default="neural")
    ba.add_argument("--models-dir")
    ba.add_argument("--report-dir", required=True)
    ba.set_defaults(func=cmd_bench_agree)
    bc = bsub.add_parser("accuracy", help="filtered classifier accuracy on a labeled TSV")
    bc.add_argument("--samples", required=True)
    bc.add_argument("--models-dir", required=True)
    bc.set_defaults(func=cmd_bench_accuracy)

    return p


# ---------------------------------------------------------------------------

def _open_engines(command, workers):
    from .uci import EngineHandle, UciClientError

    engines = []
    try:
        for _ in range(max(1, workers)):
            engines.append(EngineHandle(command).start())
    except (UciClientError, OSError) as exc:
        for e in engines:
            e.quit()
        print(f"error: cannot start engine {command!r}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_ENGINE) from None
    return engines


def cmd_dataset(args):
    from . import dataset, pgn

    if not os.path.exists(args.pgn):
        print(f"error: no such PGN file {args.pgn}", file=sys.stderr)
        return EXIT_DATA
    os.makedirs(args.out, exist_ok=True)
    engines = _open_engines(args.engine, args.workers)
    try:
        stats = dataset.PipelineStats()
        with open(args.pgn, encoding="utf-8") as fh:
            boards = dataset.dedup(pgn.positions_from_games(fh, stats.ingest), stats)
            boards = list(boards)
        if args.limit:
            boards = boards[: args.limit]
        samples = list(dataset.label_positions(boards, engines, args.depth, stats))
        extra, _lineage = dataset.expand(samples, args.expand_fraction, args.seed, engines,
                                         args.depth, stats)
        samples += extra
        corpus_stats = dataset.split_and_emit(
            samples, args.train_fraction, args.seed,
            os.path.join(args.out, "train.tsv"),
            os.path.join(args.out, "test.tsv"),
            os.path.join(args.out, "stats.json"),
            duplicates=stats.duplicates,
        )
        if args.cache:
            for name in ("train", "test"):
                dataset.write_feature_cache(
                    dataset.read_tsv(os.path.join(args.out, f"{name}.tsv")),
                    os.path.join(args.out, f"{name}.feat"),
                )
        print(f"games: {stats.ingest.games} (skipped {stats.ingest.skipped_games})")
        print(f"samples: {corpus_stats.total} ({stats.expanded} expanded, "
              f"{stats.duplicates} duplicates dropped, {stats.quarantined} quarantined)")
        for name, count in corpus_stats.class_counts.items():
            print(f"  {name}: {count}")
    finally:
        for e in engines:
            e.quit()
    return EXIT_OK


def cmd_synth(args):
    from . import corpus, dataset

    os.makedirs(args.out, exist_ok=True)
    boards = corpus.random_playout_positions(args.count, seed=args.seed)
    samples = corpus.material_labeled_samples(boards)
    stats = dataset.split_and_emit(
        samples, args.train_fraction, args.seed,
        os.path.join(args.out, "train.tsv"),
        os.path.join(args.out, "test.tsv"),
        os.path.join(args.out, "stats.json"),
    )
    print(f"samples: {stats.total}")
    return EXIT_OK


def cmd_train(args):
    from . import dataset, models, nn

    if not os.path.exists(args.samples):
        print(f"error: no such sample file {args.samples}", file=sys.stderr)
        return EXIT_DATA
    os.makedirs(args.models_dir, exist_ok=True)
    train_samples = dataset.read_tsv(args.samples)
    feats, cps = dataset.samples_to_arrays(train_samples)
    x = feats.astype(np.float32)
    test_x = test_y = None
    if args.test:
        tfeats, tcps = dataset.samples_to_arrays(dataset.read_tsv(args.test))
        test_x = tfeats.astype(np.float32)

    if args.model == "autoencoder":
        net = models.build_autoencoder(seed=args.seed + 101)
        y, loss = x, "bce"
        test_y = test_x
    elif args.model == "classifier":
        net = models.build_classifier(seed=args.seed + 202)
        y = np.stack([models.label_one_hot(int(c)) for c in cps])
        loss = "cce"
        if test_x is not None:
            test_y = np.stack([models.label_one_hot(int(c)) for c in tcps])
    else:
        ae_path = os.path.join(args.models_dir, models.AUTOENCODER_FILE)
        if not os.path.exists(ae_path):
            print("error: evaluator training needs a trained autoencoder "
                  f"({ae_path} missing)", file=sys.stderr)
            return EXIT_DATA
        ae = nn.load_params(ae_path)
        net = models.build_evaluator(seed=args.seed + 303)
        x = models.encode_latent(ae, x)
        y = np.array([[models.normalize_cp(int(c))] for c in cps], dtype=np.float32)
        loss = "mse"
        if test_x is not None:
            test_x = models.encode_latent(ae, test_x)
            test_y = np.array([[models.normalize_cp(int(c))] for c in tcps], dtype=np.float32)

    adam = nn.AdamState.for_network(net, lr=args.lr)
    def hook(rec):
        line = f"epoch {rec['epoch']}: train_loss {rec['train_loss']:.6f}"
        if "test_loss" in rec:
            line += f" test_loss {rec['test_loss']:.6f}"
        if "test_accuracy" in rec:
            line += f" test_acc {rec['test_accuracy']:.4f}"
        print(line, flush=True)

    try:
        metrics = nn.train(net, x, y, loss, epochs=args.epochs, batch_size=args.batch_size,
                           seed=args.seed, adam=adam, test_x=test_x, test_y=test_y,
                           epoch_hook=hook)
    except nn.TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    out = os.path.join(args.models_dir, f"{args.model}.w")
    nn.save_params(net, out)
    nn.metrics_to_csv(metrics, os.path.join(args.models_dir, f"{args.model}_metrics.csv"))
    print(f"saved {out}")
    return EXIT_OK


def cmd_eval(args):
    from . import models
    from .board import START_FEN, parse_fen
    from .encoding import encode

    fen = START_FEN if args.fen == "startpos" else args.fen
    try:
        bundle = models.ModelBundle.load(args.models_dir)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        board = parse_fen(fen)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    features = encode(board).astype(np.float32)
    if bundle.evaluator is not None:
        print(f"prediction: {bundle.predict_cp(features):+d}cp")
    if bundle.classifier is not None:
        probs = np.atleast_2d(models.classify(bundle.classifier, features))[0]
        for name, prob in zip(models.CLASS_NAMES, probs):
            print(f"  p({name}) = {float(prob):.4f}")
    return EXIT_OK


def _make_searcher(eval_kind, models_dir, max_depth, threads):
    from . import models, search
    from .material import material_eval

    config = search.SearchConfig(max_depth=max_depth, threads=threads)
    classifier = None
    if eval_kind == "material":
        evaluator = material_eval
    else:
        if not models_dir:
            print("error: --models-dir is required for neural evaluation", file=sys.stderr)
            raise SystemExit(EXIT_DATA)
        try:
            bundle = models.ModelBundle.load(models_dir)
            evaluator = search.neural_evaluator(bundle)
        except (FileNotFoundError, ValueError) as exc:
            print(f"error: cannot load models: {exc}", file=sys.stderr)
            raise SystemExit(EXIT_DATA) from None
        classifier = bundle.classifier
    return search.Searcher(evaluator, config, classifier=classifier)


def cmd_uci(args):
    from .uci import ENGINE_NAME, UciServer

    searcher = _make_searcher(args.eval, args.models_dir, args.max_depth, args.threads)
    name = args.name or (f"{ENGINE_NAME}-{args.eval}")
    UciServer(searcher, name=name).run(sys.stdin, sys.stdout)
    return EXIT_OK


def cmd_bench_agree(args):
    from . import bench

    if not os.path.exists(args.positions):
        print(f"error: no such positions file {args.positions}", file=sys.stderr)
        return EXIT_DATA
    with open(args.positions, encoding="utf-8") as fh:
        fens = [line.strip() for line in fh if line.strip()]
    if not fens:
        print("error: empty positions file", file=sys.stderr)
        return EXIT_DATA
    searcher = _make_searcher(args.our_eval, args.models_dir, args.our_depth, 1)
    (engine,) = _open_engines(args.ref_engine, 1)
    try:
        records, summary = bench.run_agreement(
            fens, searcher, engine,
            our_depth=args.our_depth, ref_depth=args.ref_depth,
            eps_cp=args.eps_cp, child_depth=args.child_depth,
        )
    finally:
        engine.quit()
    os.makedirs(args.report_dir, exist_ok=True)
    bench.emit_report(records, summary,
                      os.path.join(args.report_dir, "agreement.json"),
                      os.path.join(args.report_dir, "agreement.tsv"))
    print(f"agreement: {summary['agreement']:.3f} "
          f"({summary['counts']} over {summary['denominator']} positions)")
    return EXIT_OK


def cmd_bench_accuracy(args):
    from . import bench, dataset, models, nn

    path = os.path.join(args.models_dir, models.CLASSIFIER_FILE)
    if not os.path.exists(path):
        print(f"error: no classifier at {path}", file=sys.stderr)
        return EXIT_DATA
    classifier = nn.load_params(path)
    feats, cps = dataset.samples_to_arrays(dataset.read_tsv(args.samples))
    a1, a2, a3 = bench.run_filtered_accuracy(classifier, feats, cps)
    print(f"accuracy unfiltered:        {a1:.4f}")
    print(f"accuracy boundary removed:  {a2:.4f}")
    print(f"accuracy decisive only:     {a3:.4f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
