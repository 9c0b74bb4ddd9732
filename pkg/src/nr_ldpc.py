#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Command line front end for natural-redundancy LDPC decoding.

Subcommands:

* ``encode`` / ``corrupt`` / ``decode``: one word at a time, bits as text.
* ``make-code``: write a seeded regular Gallager code as alist.
* ``scan``: build a corpus manifest (optionally with train/validation/test splits).
* ``train-ftr`` / ``train-softdec``: train the file-type recognizer and the
  per-type soft decoders.
* ``reproduce-table2`` (alias ``estimate-transitions``): the
  transition-probability estimation experiment.
* ``bench``: decoding success rate over a BER grid (``--replay`` re-runs a
  previous summary and checks the CSV is byte identical).
* ``report``: filter an existing summary into a new CSV.

Exit codes: 0 ok, 1 usage error, 2 data/model error, 3 replay not
reproducible, 130 interrupted.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import corpus, ldpc_core, model_io, nr_decoders, pipeline, portfolio_estimator, report_formatter
from .channel import ChannelSpec, bsc_transmit
from .tensor_nn import write_loss_history
from .utils import BitSegment, bits_to_str, parse_ber, parse_ber_list, parse_int_list, sha256_hex

log = logging.getLogger("nr_ldpc")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NOT_REPRODUCIBLE = 3


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def read_bits(args) -> BitSegment:
    """Bits from ``--bits`` text or from the ``--in`` file (whitespace ignored)."""

    if args.bits is not None:
        text = args.bits
    elif args.infile is not None:
        text = Path(args.infile).read_text(encoding="utf-8")
    else:
        raise UsageError("servono --bits oppure --in")
    text = "".join(text.split())
    if any(c not in "01" for c in text):
        raise ValueError("l'input deve contenere solo 0 e 1")
    return BitSegment([int(c) for c in text])


def write_bits(bits, out) -> None:
    text = bits_to_str(bits)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        log.info("Bit salvati in %s", out)
    else:
        print(text)


def resolve_config(args) -> config_mod.ExperimentConfig:
    cfg = config_mod.load_config(getattr(args, "config", None))
    overrides = list(getattr(args, "set", None) or [])
    for flag, key in (("seed", "seed"), ("trials", "trials"), ("bers", "bers"), ("modes", "modes"),
                      ("workers", "workers"), ("out_dir", "out_dir"), ("code", "code")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    if getattr(args, "force", False):
        overrides.append("force=true")
    return config_mod.apply_overrides(cfg, overrides)


###############################################################################
# Subcommands
###############################################################################


def cmd_encode(args) -> int:
    code = ldpc_core.load_code(args.code)
    write_bits(ldpc_core.encode(read_bits(args).bits, code), args.out)
    return EXIT_OK


def cmd_corrupt(args) -> int:
    word = read_bits(args)
    noisy = bsc_transmit(word.bits, ChannelSpec(parse_ber(args.ber), args.seed, args.stream_id))
    log.info("%d bit invertiti su %d", int((noisy ^ word.bits).sum()), len(word))
    write_bits(noisy, args.out)
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = resolve_config(args)
    code = ldpc_core.load_code(args.code or cfg.code)
    stack = pipeline.build_stack(cfg, args.mode, code)
    out = pipeline.decode_segment(read_bits(args).bits, stack, parse_ber(args.ber))
    diag = out.diagnostics
    if not diag.converged:
        log.warning("BP non convergente dopo %d iterazioni: restituisco la decisione corrente", diag.iterations)
    else:
        log.info("BP convergente in %d iterazioni", diag.iterations)
    if diag.routed_type:
        log.info("Tipo riconosciuto: %s", diag.routed_type)
    write_bits(out.info, args.out)
    return EXIT_OK


def cmd_make_code(args) -> int:
    code = ldpc_core.gallager_code(args.n, args.wc, args.wr, args.seed)
    Path(args.out).write_text(ldpc_core.dump_alist(code), encoding="utf-8")
    log.info("Codice (%d, %d) rate %.3f salvato in %s", code.n, code.k, code.rate, args.out)
    return EXIT_OK


def cmd_scan(args) -> int:
    if args.label:
        roots = {}
        for item in args.label:
            name, eq, path = item.partition("=")
            if not eq:
                raise UsageError(f"--label vuole TIPO=CARTELLA, ricevuto {item!r}")
            roots[name] = path
    elif args.roots:
        roots = args.roots
    else:
        raise UsageError("indicare almeno una cartella o --label")
    registry = [t.strip() for t in args.registry.split(",")] if args.registry else None
    manifest = corpus.scan_corpus(roots, registry, workers=args.workers)
    if args.split:
        manifest = corpus.split_dataset(manifest, [float(f) for f in args.split.split(",")], args.seed)
    manifest.to_jsonl(args.out)
    if args.k:
        for name, count in manifest.segment_counts(args.k).items():
            print(f"{name}\t{count}")
    print(f"manifest_hash\t{manifest.manifest_hash()}")
    log.info("Manifest di %d file salvato in %s", len(manifest), args.out)
    return EXIT_OK


def _manifest_segments(path, k: int, split: str, file_type=None) -> list:
    manifest = corpus.CorpusManifest.from_jsonl(path)
    entries = manifest.in_split(split) if any(e.split for e in manifest.entries) else manifest.entries
    if file_type:
        entries = [e for e in entries if e.file_type == file_type]
    segments = corpus.load_segments(entries, k)
    if not segments:
        raise corpus.CorpusError(f"nessun segmento di {k} bit in {path} (split {split!r})")
    return segments


def cmd_train_ftr(args) -> int:
    manifest = corpus.CorpusManifest.from_jsonl(args.manifest)
    p = parse_ber(args.ber)
    segments = _manifest_segments(args.manifest, args.k, "train")
    ftr = nr_decoders.build_ftr_model(
        args.k, manifest.registry, depth=args.depth, init_seed=args.seed, layer_spec=args.layers, p_dnn=p
    )
    log.info("FTR: %d segmenti di training, %d tipi, %r", len(segments), len(ftr.registry), ftr.model)
    result = nr_decoders.train_ftr(ftr, segments, p, args.epochs, args.batch_size, args.seed)
    model_io.save_model(ftr.model, args.out)
    if args.loss_history:
        write_loss_history(args.loss_history, result.history)
    if args.eval_bers:
        if not any(e.split for e in manifest.entries):
            log.warning("Il manifest non ha split: l'accuratezza viene misurata sugli stessi file del training")
        test = _manifest_segments(args.manifest, args.k, "test")
        rows = nr_decoders.ftr_accuracy_table(ftr, test, parse_ber_list(args.eval_bers), args.seed)
        for r in rows:
            print(f"{r.ber!r}\t{r.file_type}\t{r.correct}/{r.segments}\t{r.accuracy:.4f}")
    return EXIT_OK


def cmd_train_softdec(args) -> int:
    p_dnn = parse_ber(args.p_dnn)
    if args.markov:
        source = nr_decoders.MarkovSource.from_spec(args.markov)
        segments = nr_decoders.sample_segments(source, args.segments, args.k, args.seed, args.type)
    elif args.manifest:
        segments = _manifest_segments(args.manifest, args.k, "train", args.type)
    else:
        raise UsageError("servono --manifest oppure --markov")
    model = nr_decoders.build_soft_decoder_model(
        args.k, depth=args.depth, filters=args.filters, width=args.width, init_seed=args.seed,
        layer_spec=args.layers, file_type=args.type, p_dnn=p_dnn,
    )
    log.info("Decoder soft %s: %d segmenti, %r", args.type, len(segments), model)
    result = nr_decoders.train_soft_decoder(model, segments, p_dnn, args.epochs, args.batch_size, args.seed)
    model_io.save_model(model, args.out)
    if args.loss_history:
        write_loss_history(args.loss_history, result.history)
    return EXIT_OK


def cmd_transition_experiment(args) -> int:
    rows = portfolio_estimator.transition_experiment(
        parse_int_list(args.K), args.seed, args.pairs_per_symbol, args.epochs, args.out
    )
    for r in rows:
        print(f"K={r.K}\tN={r.N}\tdelta_K={r.delta_K:.6g}\t{r.wall_seconds:.1f}s")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.replay:
        outcome = pipeline.replay_benchmark(args.replay)
        if not outcome.reproducible:
            log.error("Replay NON riproducibile: atteso %s, ottenuto %s", outcome.expected_sha256, outcome.actual_sha256)
            return EXIT_NOT_REPRODUCIBLE
        log.info("Replay riproducibile (sha256 %s)", outcome.actual_sha256)
        return EXIT_OK
    if args.seed is None:
        raise UsageError("bench richiede --seed")
    cfg = resolve_config(args)
    result = pipeline.run_benchmark(cfg)
    paths = pipeline.report(result, cfg.out_dir, stem=args.stem)
    for c in result.comparisons:
        log.info("p=%g %s vs ldpc-only: entrambi %d, solo NR %d, solo LDPC %d, nessuno %d",
                 c.ber, c.mode, c.both, c.nr_only, c.ldpc_only, c.neither)
    print(paths.csv)
    return EXIT_OK


def cmd_report(args) -> int:
    payload = json.loads(Path(args.infile).read_text(encoding="utf-8"))
    rows = report_formatter.filter_rows(
        report_formatter.rows_from_summary(payload),
        [m.strip() for m in args.modes.split(",")] if args.modes else None,
        [t.strip() for t in args.types.split(",")] if args.types else None,
    )
    if not rows:
        raise ValueError("no rows")
    text = report_formatter.render_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
        log.info("CSV salvato in %s (sha256 %s)", args.out, sha256_hex(text.encode("utf-8")))
    else:
        sys.stdout.write(text)
    return EXIT_OK


###############################################################################
# Parser
###############################################################################


def _add_bits_input(p) -> None:
    p.add_argument("--bits", default=None, help="Bit come testo (es. 0110...)")
    p.add_argument("--in", dest="infile", default=None, help="File di testo con i bit")
    p.add_argument("--out", default=None, help="File di output (default: stdout)")


def _add_config(p) -> None:
    p.add_argument("--config", default=None, help=f"File di configurazione (default: ${config_mod.ENV_CONFIG})")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Sovrascrive una chiave di config")
    p.add_argument("--force", action="store_true", help="Carica i modelli anche se i metadati non corrispondono")


def build_parser() -> ArgumentParser:
    ap = ArgumentParser(prog="nr_ldpc", description="Decodifica LDPC con ridondanza naturale")
    ap.add_argument("--debug", action="store_true", help="Abilita messaggi di debug")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="Codifica k bit di informazione")
    p.add_argument("--code", required=True, help="gallager:n=..,wc=..,wr=..,seed=.. oppure percorso alist")
    _add_bits_input(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("corrupt", help="Passa una parola nel canale BSC")
    p.add_argument("--ber", required=True, help="Probabilità di errore (0.008 o 0.8%%)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--stream-id", type=int, default=0)
    _add_bits_input(p)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("decode", help="Decodifica una parola ricevuta")
    p.add_argument("--code", default=None, help="Riferimento al codice (default: dalla config)")
    p.add_argument("--ber", required=True, help="BER del canale usato per gli LLR")
    p.add_argument("--mode", choices=config_mod.MODES, default="ldpc-only")
    _add_config(p)
    _add_bits_input(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("make-code", help="Genera un codice di Gallager regolare in formato alist")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--wc", type=int, default=3)
    p.add_argument("--wr", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_code)

    p = sub.add_parser("scan", help="Crea il manifest di un corpus")
    p.add_argument("roots", nargs="*", help="Cartelle etichettate per estensione")
    p.add_argument("--label", action="append", default=[], metavar="TIPO=CARTELLA")
    p.add_argument("--registry", default=None, help="Tipi ammessi, separati da virgola")
    p.add_argument("--split", default=None, help="Frazioni train,validation,test (es. 0.8,0.1,0.1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=None, help="Stampa il numero di segmenti di k bit per tipo")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("train-ftr", help="Addestra il riconoscitore del tipo di file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--ber", required=True, help="BER di addestramento")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--layers", default=None, help="Stack esplicito, es. conv1d:32:3,relu,maxpool1d,...")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-bers", default=None, help="Valuta l'accuratezza sullo split di test a questi BER")
    p.add_argument("--loss-history", default=None, help="CSV step,loss")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_ftr)

    p = sub.add_parser("train-softdec", help="Addestra un decoder soft per un tipo di file")
    p.add_argument("--type", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--markov", default=None, help="Sorgente di Markov m:t0,t1,... al posto del corpus")
    p.add_argument("--segments", type=int, default=2000, help="Segmenti da generare con --markov")
    p.add_argument("--k", type=int, default=512, help="Lunghezza della finestra k'")
    p.add_argument("--p-dnn", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--filters", type=int, default=16)
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--layers", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss-history", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_softdec)

    p = sub.add_parser(
        "reproduce-table2",
        aliases=["estimate-transitions"],
        help="Stima delle probabilità di transizione (KL medio)",
    )
    p.add_argument("--K", default="2,4,10,100,200")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pairs-per-symbol", type=int, default=portfolio_estimator.PAIRS_PER_SYMBOL)
    p.add_argument("--epochs", type=int, default=portfolio_estimator.DEFAULT_EPOCHS)
    p.add_argument("--out", default="table2.csv")
    p.set_defaults(func=cmd_transition_experiment)

    p = sub.add_parser("bench", help="Tasso di successo di decodifica su una griglia di BER")
    _add_config(p)
    p.add_argument("--seed", type=int, default=None, help="Seme della simulazione (obbligatorio)")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--bers", default=None)
    p.add_argument("--modes", default=None)
    p.add_argument("--code", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--stem", default="results")
    p.add_argument("--replay", default=None, metavar="SUMMARY_JSON", help="Riesegue e verifica un run precedente")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="Filtra un riepilogo JSON in un CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--modes", default=None)
    p.add_argument("--types", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as e:
        print(f"[ERR] {e}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.INFO,
        format="[%(levelname)s] %(message)s",
    )

    try:
        return args.func(args)
    except UsageError as e:
        print(f"[ERR] {e}", file=sys.stderr)
        return EXIT_USAGE
    except KeyError as e:
        log.error("chiave mancante nei dati: %s", e)
        return EXIT_DATA
    except (OSError, ValueError, RuntimeError) as e:
        log.error("%s", e)
        return EXIT_DATA


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n[INFO] Interrotto dall'utente.")
        sys.exit(130)
