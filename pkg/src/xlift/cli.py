"""Command line entry point: ``xlift <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import alignment, corpus, embedding, experiment, mapping, retrieval, stdm, synth, wordsim
from .errors import ConfigError, XliftError

log = logging.getLogger("xlift")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _load_space(path) -> embedding.EmbeddingMatrix:
    return embedding.normalize_rows(embedding.load_embeddings(path))


def _load_model(path, dim):
    return mapping.MappingModel.identity(dim) if path is None else mapping.load_mapping(path)


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "a", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args):
    p = embedding.SgnsParams.desk(dim=args.dim, window=args.window, negatives=args.negatives,
                                  epochs=args.epochs, lr=args.lr, min_count=args.min_count,
                                  subsample_t=args.subsample, seed=args.seed,
                                  workers=args.workers or experiment.worker_count(),
                                  subword=(3, 6, 200_000) if args.subword else None)
    a = corpus.load_corpus(args.corpus, args.lang, args.domain)
    if args.joint_with is None:
        e = embedding.train_sgns(a, embedding.build_vocab(a, p.min_count), p)
        embedding.save_embeddings(e, args.out)
        log.info("wrote %d vectors to %s", len(e), args.out)
        return 0
    if args.out2 is None:
        raise ConfigError("joint training writes two files; pass --out2")
    b = corpus.load_corpus(args.joint_with, args.joint_lang, args.joint_domain)
    both = corpus.concat_shuffle(a, b, p.seed)
    e = embedding.train_sgns(both, embedding.build_vocab(both, p.min_count), p)
    x, y = embedding.joint_split(e, embedding.build_vocab(a, p.min_count),
                                 embedding.build_vocab(b, p.min_count))
    embedding.save_embeddings(x, args.out)
    embedding.save_embeddings(y, args.out2)
    return 0


def cmd_align(args):
    X, Y = _load_space(args.src), _load_space(args.tgt)
    if args.method == "procrustes":
        if args.dict is None:
            raise ConfigError("procrustes needs --dict")
        m = alignment.procrustes(X, Y, mapping.load_dictionary(args.dict))
    elif args.method == "identical":
        m = alignment.procrustes(X, Y, alignment.extract_identical_seed(X.vocab, Y.vocab))
    else:
        p = alignment.AdversarialParams.desk(seed=args.seed, epochs=args.epochs)
        m = alignment.adversarial_train(X, Y, p)
    if args.refine:
        m = alignment.refine(m, X, Y, args.refine, k=args.k)
    mapping.save_mapping(m, args.out)
    print(json.dumps({"method": m.method, "orthogonality_error": m.orthogonality_error(),
                      "criterion": retrieval.csls_criterion(m, X, Y, k=args.k)}, sort_keys=True))
    return 0


def cmd_retrieve(args):
    X, Y = _load_space(args.src), _load_space(args.tgt)
    words = list(args.words)
    if args.words_file:
        words += Path(args.words_file).read_text(encoding="utf-8").split()
    res = retrieval.retrieve(_load_model(args.mapping, X.dim), X, Y, words, args.method,
                             args.top, args.k)
    for r in res:
        print(r.source + "\t" + ("<oov>" if r.oov else " ".join(r.top(args.top))))
    return 0


def cmd_eval_bli(args):
    X, Y = _load_space(args.src), _load_space(args.tgt)
    gold = mapping.load_dictionary(args.gold)
    rep = retrieval.evaluate_mapping(_load_model(args.mapping, X.dim), X, Y, gold, args.method,
                                     args.k, _ints(args.cutoffs))
    _emit(args, rep.to_json(pair=args.pair, src_domain=args.src_domain, tgt_domain=args.tgt_domain))
    return 0


def cmd_copy_baseline(args):
    rep = retrieval.copying_baseline(mapping.load_dictionary(args.gold), _ints(args.cutoffs))
    _emit(args, rep.to_json(pair=args.pair))
    return 0


def cmd_stdm(args):
    a = corpus.load_corpus(args.a, "a", "a", args.bounds_a)
    b = corpus.load_corpus(args.b, "b", "b", args.bounds_b)
    da = corpus.segment_documents(a, args.policy)
    db = corpus.segment_documents(b, args.policy)
    rep = stdm.stdm_score(da, db, args.rank, cosine=args.cosine)
    print(rep.summary())
    _emit(args, rep.to_json())
    return 0


def cmd_wordsim(args):
    A = embedding.load_embeddings(args.src)
    B = embedding.load_embeddings(args.tgt) if args.tgt else A
    ds = wordsim.load_dataset(args.data, args.lang_a, args.lang_b)
    m = None if args.mapping is None else mapping.load_mapping(args.mapping)
    rep = wordsim.score(wordsim.predict_pairs(A, B, ds, m), ds)
    _emit(args, rep.to_json())
    return 0


def cmd_synth(args):
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "rotation":
        X, Y, gold, W = synth.make_rotation_instance(args.n, args.dim, args.noise, args.seed,
                                                     decay=args.decay, offset=args.offset)
        embedding.save_embeddings(X, out / "src.vec")
        embedding.save_embeddings(Y, out / "tgt.vec")
        mapping.save_dictionary(gold, out / "gold.txt")
        mapping.save_mapping(mapping.MappingModel(W, "true"), out / "true_map.json")
    elif args.kind == "cipher":
        if args.corpus is None:
            raise ConfigError("cipher needs --corpus")
        c = corpus.load_corpus(args.corpus, args.lang, args.domain)
        spec = synth.CipherSpec(seed=args.seed, anchor_classes=frozenset(args.anchors.split(",")) - {""})
        cc, gold = synth.make_cipher_language(c, spec)
        corpus.save_corpus(cc, out / "cipher.txt")
        mapping.save_dictionary(gold, out / "gold.txt")
    else:
        paths = synth.write_conditions(synth.make_conditions(synth.ConditionSpec(
            n_lines=args.lines, seed=args.seed)), out)
        for k, v in paths.items():
            print(f"{k}\t{v}")
    return 0


def _apply_overrides(raw: dict, args) -> dict:
    raw = dict(raw)
    grid = dict(raw.get("grid") or {})
    for key in ("seeds", "refinements", "epochs"):
        val = getattr(args, key, None)
        if val:
            grid[key] = list(_ints(val))
    raw["grid"] = grid
    for key in ("mode", "method", "k", "gold", "output", "name", "n_eval"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        node = raw
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = yaml.safe_load(val)
    return raw


def _config(path, args) -> experiment.ExperimentConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return experiment.config_from_dict(_apply_overrides(raw, args), Path(path).parent)


def _workers(args):
    return args.workers if args.workers is not None else experiment.worker_count()


def cmd_grid(args):
    cfg = _config(args.config, args)
    outcome = experiment.run_grid(cfg, workers=_workers(args))
    rec = outcome.record()
    if cfg.output:
        experiment.ReportWriter(Path(cfg.output) / "grid.jsonl").append(rec)
    sel = outcome.report.selected
    print(f"selected seed={sel.seed} refinement_iters={sel.refinement_iters} "
          f"epochs={sel.epochs} criterion={sel.criterion:.6f}")
    if outcome.bli is not None:
        print(outcome.bli.to_json(pair=cfg.pair))
    return 0


def cmd_compare(args):
    if len(args.configs) < 2:
        raise ConfigError("compare needs at least two configs")
    cfgs = [_config(p, args) for p in args.configs]
    gold = mapping.load_dictionary(args.gold) if args.gold else None
    table, outcomes = experiment.run_comparison(cfgs, gold, workers=_workers(args))
    tsv = table.to_tsv()
    print(tsv, end="")
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        writer = experiment.ReportWriter(out / "compare.jsonl")
        for o in outcomes:
            writer.append(o.record())
        (out / "compare.tsv").write_text(tsv, encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------

def _space_args(p, mapping_opt=True):
    p.add_argument("--src", required=True, help="source embeddings (.vec)")
    p.add_argument("--tgt", required=True, help="target embeddings (.vec)")
    if mapping_opt:
        p.add_argument("--mapping", help="mapping JSON; identity when omitted")


def _config_args(p):
    p.add_argument("--seeds", help="comma separated, e.g. 123,456")
    p.add_argument("--refinements", help="comma separated refinement counts")
    p.add_argument("--epochs", help="comma separated adversarial epoch counts")
    p.add_argument("--mode", choices=("separate", "joint"))
    p.add_argument("--method", choices=("csls", "nn"))
    p.add_argument("--k", type=int)
    p.add_argument("--n-eval", type=int, dest="n_eval")
    p.add_argument("--name")
    p.add_argument("--output", help="report directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key, e.g. sgns.dim=50")
    p.add_argument("--workers", type=int, help="parallel runs (default: $XLIFT_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xlift", description="Cross-lingual embedding toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train SGNS embeddings")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lang", default="und")
    p.add_argument("--domain", default="und")
    p.add_argument("--out", required=True)
    p.add_argument("--joint-with", help="second corpus for joint training")
    p.add_argument("--joint-lang", default="und")
    p.add_argument("--joint-domain", default="und")
    p.add_argument("--out2", help="target half of a joint space")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--subsample", type=float, default=1e-4)
    p.add_argument("--subword", action="store_true", help="add character n-gram vectors")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("align", help="learn a mapping between two spaces")
    _space_args(p, mapping_opt=False)
    p.add_argument("--method", choices=("procrustes", "identical", "adversarial"), default="adversarial")
    p.add_argument("--dict", help="seed dictionary for procrustes")
    p.add_argument("--refine", type=int, default=0, help="refinement iterations")
    p.add_argument("--seed", type=int, default=123)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--k", type=int, default=retrieval.DEFAULT_K)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("retrieve", help="translate words")
    _space_args(p)
    p.add_argument("words", nargs="*")
    p.add_argument("--words-file")
    p.add_argument("--method", choices=("csls", "nn"), default="csls")
    p.add_argument("--k", type=int, default=retrieval.DEFAULT_K)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval-bli", help="score a mapping on a gold dictionary")
    _space_args(p)
    p.add_argument("--gold", required=True)
    p.add_argument("--method", choices=("csls", "nn"), default="csls")
    p.add_argument("--k", type=int, default=retrieval.DEFAULT_K)
    p.add_argument("--cutoffs", default="1,5")
    p.add_argument("--pair", default="")
    p.add_argument("--src-domain", default="")
    p.add_argument("--tgt-domain", default="")
    p.add_argument("--out", help="append the JSON record here")
    p.set_defaults(func=cmd_eval_bli)

    p = sub.add_parser("copy-baseline", help="identity-translation baseline")
    p.add_argument("--gold", required=True)
    p.add_argument("--cutoffs", default="1,5")
    p.add_argument("--pair", default="")
    p.add_argument("--out")
    p.set_defaults(func=cmd_copy_baseline)

    p = sub.add_parser("stdm", help="topic-based domain similarity of two corpora")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--bounds-a")
    p.add_argument("--bounds-b")
    p.add_argument("--policy", default="block:20", help="block:N (consecutive N-line documents) or native (use --bounds-a/--bounds-b)")
    p.add_argument("--rank", type=int, default=stdm.DEFAULT_RANK)
    p.add_argument("--cosine", action="store_true", help="cosine variant of the cross similarity")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stdm)

    p = sub.add_parser("wordsim", help="cross-lingual word similarity")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", help="defaults to --src (shared space)")
    p.add_argument("--mapping")
    p.add_argument("--data", required=True, help="TSV word_a, word_b, score")
    p.add_argument("--lang-a", default="a")
    p.add_argument("--lang-b", default="b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_wordsim)

    p = sub.add_parser("synth", help="generate synthetic instances")
    p.add_argument("kind", choices=("rotation", "cipher", "conditions"))
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--decay", type=float, default=0.9)
    p.add_argument("--offset", type=float, default=1.0)
    p.add_argument("--corpus")
    p.add_argument("--lang", default="und")
    p.add_argument("--domain", default="und")
    p.add_argument("--anchors", default="digits,punct")
    p.add_argument("--lines", type=int, default=50_000)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("grid", help="grid search with unsupervised selection")
    p.add_argument("config")
    p.add_argument("--gold")
    _config_args(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("compare", help="run several conditions and print a comparison table")
    p.add_argument("configs", nargs="+")
    p.add_argument("--gold")
    p.add_argument("--report-dir")
    _config_args(p)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except XliftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
