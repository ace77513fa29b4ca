"""Command-line entry point: train, rerank, eval, oracle, curve, gradcheck."""

from __future__ import annotations

import argparse
import sys
import time

from . import kernels, params as P, reranker, trainer, treebank
from .errors import ConfigError, DataError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3

CONFIG_KEYS = ("m", "m_d", "rho", "kappa", "lambda", "k", "dist_clip", "seed",
               "max_epochs", "patience", "punct_set")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this artifact reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path) -> dict[str, str]:
    """Flat 'key = value' file; '#' starts a comment. Unknown keys are rejected."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise ConfigError(
                    f"{path}:{lineno}: unknown config key {key!r}; "
                    f"valid keys: {', '.join(CONFIG_KEYS)}")
            out[key] = value
    return out


def _setting(args, config: dict[str, str], key: str, attr: str, convert):
    """Flag value if given, else config-file value, else None (use the default)."""
    flag = getattr(args, attr)
    if flag is not None:
        return flag
    if key in config:
        try:
            return convert(config[key])
        except ValueError:
            raise ConfigError(f"config key {key!r}: cannot parse {config[key]!r}") from None
    return None


def _resolve_settings(args) -> tuple[P.Hyperparams, trainer.TrainConfig]:
    config = read_config(args.config) if args.config else {}
    hyper_defaults = P.Hyperparams()
    train_defaults = trainer.TrainConfig()

    def pick(key, attr, convert, default):
        value = _setting(args, config, key, attr, convert)
        return default if value is None else value

    hyper = P.Hyperparams(
        m=pick("m", "m", int, hyper_defaults.m),
        m_d=pick("m_d", "m_d", int, hyper_defaults.m_d),
        rho=pick("rho", "rho", float, hyper_defaults.rho),
        kappa=pick("kappa", "kappa", float, hyper_defaults.kappa),
        lam=pick("lambda", "lam", float, hyper_defaults.lam),
        k=pick("k", "k", int, hyper_defaults.k),
        dist_clip=pick("dist_clip", "dist_clip", int, hyper_defaults.dist_clip),
    )
    punct = pick("punct_set", "punct_set", str, "ptb")
    cfg = trainer.TrainConfig(
        max_epochs=pick("max_epochs", "max_epochs", int, train_defaults.max_epochs),
        patience=pick("patience", "patience", int, train_defaults.patience),
        seed=pick("seed", "seed", int, train_defaults.seed),
        punct_tags=treebank.resolve_punct_set(punct),
        adagrad_eps=args.adagrad_eps,
    )
    return hyper, cfg


def cmd_train(args) -> int:
    hyper, cfg = _resolve_settings(args)
    kernels.warmup()
    train_kbs = treebank.read_kbest_files(args.train_gold, args.train_kbest,
                                          args.allow_multiple_roots)
    dev_kbs = treebank.read_kbest_files(args.dev_gold, args.dev_kbest,
                                        args.allow_multiple_roots)
    golds = [kb.gold for kb in train_kbs]
    vocab = P.build_word_vocab(golds, min_freq=args.min_freq)
    pos_vocab = P.build_pos_vocab(golds)
    model = P.init_random(hyper, vocab, pos_vocab, cfg.seed)
    print(f"backend={kernels.active_backend()} sentences={len(train_kbs)} "
          f"dev_sentences={len(dev_kbs)} vocab={len(model.words)} seed={cfg.seed}")
    if args.pretrained:
        loaded = P.load_pretrained_file(model, args.pretrained)
        print(f"pretrained_loaded={loaded}")

    def report_line(r: trainer.TrainReport) -> None:
        print(f"epoch={r.epoch} mean_hinge={r.mean_hinge:.6f} "
              f"violations={r.violations} dev_uas={r.dev_uas:.6f}", flush=True)

    best, reports = trainer.train(model, train_kbs, dev_kbs, cfg, on_epoch=report_line)
    best_report = max(reports, key=lambda r: (r.dev_uas, -r.epoch))
    P.save(best, args.model_out)
    print(f"model={args.model_out} best_epoch={best_report.epoch} "
          f"best_dev_uas={best_report.dev_uas:.6f}")
    return EXIT_OK


def cmd_rerank(args) -> int:
    model = P.load(args.model)
    kernels.warmup()
    kbs = treebank.read_kbest_files(args.gold, args.kbest, args.allow_multiple_roots)
    punct = treebank.resolve_punct_set(args.punct_set)
    scores = reranker.corpus_model_scores(model, kbs, args.with_oracle, jobs=args.jobs)
    if args.search_alpha:
        alpha, dev = reranker.search_alpha(
            model, kbs, args.alpha_step, punct, include_oracle=args.with_oracle,
            normalize=args.normalize, model_scores=scores)
        print(f"best_alpha={alpha:.6g} search_uas={dev.uas:.6f}")
    else:
        alpha = args.alpha
    config = reranker.RerankConfig(alpha=alpha, alpha_step=args.alpha_step,
                                   include_oracle=args.with_oracle,
                                   normalize=args.normalize)
    result = reranker.rerank_corpus(model, kbs, config, punct, model_scores=scores)
    print(f"alpha={alpha:.6g} uas={result.score.uas:.6f} "
          f"correct={result.score.correct_heads} scored={result.score.scored_tokens}")
    if args.output:
        treebank.dump_conll(result.trees, args.output)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            f.write("sentence\tchosen_rank\tmodel_score\tbase_score\tmixture_score\n")
            for sent, rank, m_score, b_score, mix in result.rows:
                f.write(f"{sent}\t{rank}\t{m_score!r}\t{b_score!r}\t{mix!r}\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = treebank.load_conll(args.pred, args.allow_multiple_roots)
    gold = treebank.load_conll(args.gold, args.allow_multiple_roots)
    punct = treebank.resolve_punct_set(args.punct_set)
    res = treebank.corpus_uas(pred, gold, punct)
    print(f"uas={res.uas:.6f} correct={res.correct_heads} scored={res.scored_tokens}")
    if args.per_pos:
        acc = reranker.per_pos_accuracy(pred, gold, punct)
        for pos in sorted(acc):
            correct, total = acc[pos]
            print(f"pos={pos} correct={correct} total={total} "
                  f"accuracy={correct / total:.6f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    kbs = treebank.read_kbest_files(args.gold, args.kbest, args.allow_multiple_roots)
    punct = treebank.resolve_punct_set(args.punct_set)
    if args.with_oracle:
        kbs = [treebank.KBestList(kb.gold, tuple(
            reranker.augmented_candidates(kb, include_oracle=True))) for kb in kbs]
    res = treebank.corpus_oracle(kbs, punct, worst=args.worst)
    which = "worst" if args.worst else "best"
    print(f"oracle={which} uas={res.uas:.6f} correct={res.correct_heads} "
          f"scored={res.scored_tokens}")
    return EXIT_OK


def cmd_curve(args) -> int:
    model = P.load(args.model)
    kernels.warmup()
    kbs = treebank.read_kbest_files(args.gold, args.kbest, args.allow_multiple_roots)
    punct = treebank.resolve_punct_set(args.punct_set)
    rows = reranker.uas_curve(model, kbs, args.ks, args.alpha_step, punct, jobs=args.jobs)
    sink = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        sink.write("k\toracle_best\toracle_worst\tmodel\treranker\tbest_alpha\tshort_sentences\n")
        for r in rows:
            sink.write(f"{r.k}\t{r.oracle_best:.6f}\t{r.oracle_worst:.6f}\t"
                       f"{r.model_only:.6f}\t{r.reranked:.6f}\t{r.best_alpha:.6g}\t"
                       f"{r.short_sentences}\n")
    finally:
        if args.output:
            sink.close()
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    kernels.warmup()
    start = time.perf_counter()
    suite = trainer.run_grad_check_suite(
        seed=args.seed, instances=args.instances, max_len=args.max_len,
        m=args.m, m_d=args.m_d, k=args.k,
        epsilon=args.epsilon, tolerance=args.tolerance)
    elapsed = time.perf_counter() - start
    print(f"backend={kernels.active_backend()} seed={suite.seed} "
          f"instances={suite.instances} active={suite.active} "
          f"checked={suite.checked} skipped={suite.skipped} "
          f"max_rel_error={suite.max_rel_error:.3e} tolerance={args.tolerance:.1e} "
          f"elapsed={elapsed:.2f}s")
    if not suite.passed(args.tolerance):
        print(f"FAIL: {suite.worst}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _ks_list(text: str) -> list[int]:
    try:
        ks = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("every k must be a positive integer")
    return ks


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1], got {text}")
    return value


def _add_common(sub, model=False):
    sub.add_argument("--punct-set", default="ptb",
                     help="ptb, ctb, none, or a comma-separated tag list")
    sub.add_argument("--allow-multiple-roots", action="store_true",
                     help="accept sentences with several tokens attached to root")
    if model:
        sub.add_argument("--model", required=True, help="trained model file")
        sub.add_argument("--jobs", type=int, default=1,
                         help="parallel sentence scoring threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deprerank",
                     description="K-best dependency-parse re-ranking with a "
                                 "recursive convolutional tree scorer.")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = subs.add_parser("train", help="train a scorer on k-best lists")
    t.add_argument("--train-gold", required=True)
    t.add_argument("--train-kbest", required=True)
    t.add_argument("--dev-gold", required=True)
    t.add_argument("--dev-kbest", required=True)
    t.add_argument("--model-out", required=True)
    t.add_argument("--pretrained", help="word2vec text-format vectors")
    t.add_argument("--config", help="flat key = value settings file")
    t.add_argument("--m", type=int)
    t.add_argument("--m-d", dest="m_d", type=int)
    t.add_argument("--rho", type=float)
    t.add_argument("--kappa", type=float)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--k", type=int)
    t.add_argument("--dist-clip", dest="dist_clip", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--max-epochs", dest="max_epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--punct-set", dest="punct_set")
    t.add_argument("--min-freq", type=int, default=2,
                   help="forms rarer than this train the unknown-word row")
    t.add_argument("--adagrad-eps", type=float, default=0.0)
    t.add_argument("--allow-multiple-roots", action="store_true")
    t.set_defaults(func=cmd_train)

    r = subs.add_parser("rerank", help="select trees by mixing model and base scores")
    r.add_argument("--gold", required=True)
    r.add_argument("--kbest", required=True)
    which = r.add_mutually_exclusive_group(required=True)
    which.add_argument("--alpha", type=_unit_interval)
    which.add_argument("--search-alpha", action="store_true",
                       help="grid-search the mixture weight on this input")
    r.add_argument("--alpha-step", type=float, default=0.005)
    r.add_argument("--with-oracle", action="store_true",
                   help="add the gold tree to every candidate list")
    r.add_argument("--normalize", action="store_true",
                   help="z-normalize both score columns within each sentence")
    r.add_argument("--output", help="write chosen trees as CoNLL-X")
    r.add_argument("--report", help="write a per-sentence TSV report")
    _add_common(r, model=True)
    r.set_defaults(func=cmd_rerank)

    e = subs.add_parser("eval", help="UAS of a prediction file against gold")
    e.add_argument("--pred", required=True)
    e.add_argument("--gold", required=True)
    e.add_argument("--per-pos", action="store_true",
                   help="also print per-modifier-POS accuracy")
    _add_common(e)
    e.set_defaults(func=cmd_eval)

    o = subs.add_parser("oracle", help="best/worst candidate selection bounds")
    o.add_argument("--gold", required=True)
    o.add_argument("--kbest", required=True)
    pickside = o.add_mutually_exclusive_group()
    pickside.add_argument("--best", dest="worst", action="store_false")
    pickside.add_argument("--worst", dest="worst", action="store_true")
    o.add_argument("--with-oracle", action="store_true",
                   help="add the gold tree to every candidate list first")
    o.set_defaults(worst=False)
    _add_common(o)
    o.set_defaults(func=cmd_oracle)

    c = subs.add_parser("curve", help="UAS against k for oracles, model, re-ranker")
    c.add_argument("--gold", required=True)
    c.add_argument("--kbest", required=True)
    c.add_argument("--ks", type=_ks_list, required=True,
                   help="comma-separated list, e.g. 1,2,4,8,16,32,64")
    c.add_argument("--alpha-step", type=float, default=0.005)
    c.add_argument("--output", help="write the TSV here instead of stdout")
    _add_common(c, model=True)
    c.set_defaults(func=cmd_curve)

    g = subs.add_parser("gradcheck", help="finite-difference check of the subgradients")
    g.add_argument("--seed", type=int, default=2024)
    g.add_argument("--instances", type=int, default=50)
    g.add_argument("--max-len", dest="max_len", type=int, default=6)
    g.add_argument("--m", type=int, default=3)
    g.add_argument("--m-d", dest="m_d", type=int, default=3)
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--epsilon", type=float, default=1e-5)
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as err:
        print(f"deprerank: error: {err}", file=sys.stderr)
        return EXIT_DATA
    except OSError as err:
        print(f"deprerank: error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
