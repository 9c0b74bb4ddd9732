# -*- coding: utf-8 -*-

"""End-to-end decoding and the benchmark harness.

Decoding order for one noisy codeword: file-type recognition on the noisy
information bits, the soft decoder of the recognized type, LLR fusion,
belief propagation. A trial succeeds when the decoded information bits
equal the transmitted ones, whether or not BP reported convergence.

Every mode of a benchmark sees the same noise: trial ``t`` at BER index
``b`` uses substream ``b * trials + t`` of the run seed.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import model_io, report_formatter, streams
from .channel import ChannelSpec, channel_llrs, noise_mask
from .config import MODES, ExperimentConfig, config_hash
from .corpus import CorpusError, CorpusManifest, load_segments
from .ldpc_core import DEFAULT_MAX_ITERS, ParityCheckCode, bp_decode, encode, load_code
from .nr_decoders import (
    FileTypeModel,
    MarkovSource,
    NeuralSoftDecoder,
    OracleSoftDecoder,
    SoftDecoder,
    ftr_classify,
    llr_fusion,
)
from .utils import BitSegment, LengthMismatchError, as_bits, sha256_hex

log = logging.getLogger(__name__)

SegmentProvider = Callable[[int], BitSegment]


@dataclass
class DecoderStack:
    """Everything needed to decode one codeword in a given mode."""

    code: ParityCheckCode
    mode: str = "ldpc-only"
    ftr: Optional[FileTypeModel] = None
    decoders: dict = field(default_factory=dict)
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"modalità sconosciuta: {self.mode!r}")
        if self.mode == "ldpc-only":
            return
        if not self.decoders:
            raise ValueError(f"la modalità {self.mode} richiede almeno un decoder soft")
        if self.ftr is not None:
            if self.ftr.k > self.code.k:
                raise LengthMismatchError("ingresso FTR oltre i bit di informazione", self.code.k, self.ftr.k)
            missing = [t for t in self.ftr.registry if t not in self.decoders]
            if missing:
                raise ValueError(f"nessun decoder soft per i tipi {missing}")
        for t, dec in self.decoders.items():
            window = getattr(dec, "window", None)
            if window is not None and window > self.code.k:
                raise LengthMismatchError(f"finestra del decoder {t!r} oltre k", self.code.k, window)

    def route(self, noisy_info: np.ndarray, true_type: Optional[str] = None) -> tuple[str, SoftDecoder]:
        """Pick the soft decoder: FTR when present, else the known type or the only decoder."""

        if self.ftr is not None:
            idx, _ = ftr_classify(noisy_info[: self.ftr.k], self.ftr)
            name = self.ftr.registry[idx]
        elif true_type in self.decoders:
            name = true_type
        elif len(self.decoders) == 1:
            name = next(iter(self.decoders))
        else:
            raise ValueError("senza FTR il tipo del segmento deve essere noto per scegliere il decoder")
        return name, self.decoders[name]


@dataclass(frozen=True)
class SegmentDiagnostics:
    converged: bool
    iterations: int
    routed_type: Optional[str] = None


class DecodedSegment(NamedTuple):
    info: np.ndarray
    success: Optional[bool]
    diagnostics: SegmentDiagnostics


def decode_segment(noisy_codeword, stack: DecoderStack, p: float, truth: Optional[BitSegment] = None) -> DecodedSegment:
    """Decode one received word; ``success`` is None when *truth* is unknown."""

    noisy = as_bits(noisy_codeword)
    code = stack.code
    if noisy.size != code.n:
        raise LengthMismatchError("parola ricevuta", code.n, noisy.size)
    llr = channel_llrs(noisy, p)
    routed = None
    if stack.mode != "ldpc-only":
        noisy_info = noisy[: code.k]
        routed, decoder = stack.route(noisy_info, truth.file_type if truth is not None else None)
        llr = llr_fusion(llr, decoder.decode(noisy_info, p))
    result = bp_decode(llr, code, stack.max_iters)
    info = result.info(code.k)
    success = None if truth is None else bool(np.array_equal(info, truth.bits))
    return DecodedSegment(info, success, SegmentDiagnostics(result.converged, result.iterations, routed))


###############################################################################
# Building stacks and segment sources from a config
###############################################################################


def build_stack(cfg: ExperimentConfig, mode: str, code: ParityCheckCode) -> DecoderStack:
    """Load every model the mode needs; fails before any trial runs."""

    if mode == "ldpc-only":
        return DecoderStack(code, mode, max_iters=cfg.max_iters)
    ftr = None
    if cfg.ftr_model:
        graph = model_io.load_model(cfg.ftr_model, expect={"role": "ftr"}, force=cfg.force)
        ftr = FileTypeModel.from_graph(graph)
    decoders: dict = {}
    if mode == "nr-ldpc":
        for file_type, path in cfg.softdec_map.items():
            graph = model_io.load_model(
                path, expect={"role": "softdec", "file_type": file_type, "p_dnn": cfg.p_dnn}, force=cfg.force
            )
            decoders[file_type] = NeuralSoftDecoder(graph, file_type)
    else:
        for file_type, spec in cfg.markov_map.items():
            decoders[file_type] = OracleSoftDecoder(MarkovSource.from_spec(spec), file_type, cfg.extrinsic)
    return DecoderStack(code, mode, ftr, decoders, cfg.max_iters)


def segment_source(cfg: ExperimentConfig, k: int) -> SegmentProvider:
    """Trial ``t`` -> information segment of k bits.

    Corpus manifest (cycling through the configured split), else the Markov
    sources round-robin, else uniform random bits.
    """

    if cfg.manifest:
        manifest = CorpusManifest.from_jsonl(cfg.manifest)
        segments = load_segments(manifest.in_split(cfg.split), k)
        if not segments:
            raise CorpusError(f"nessun segmento di {k} bit nello split {cfg.split!r} di {cfg.manifest}")
        log.info("%d segmenti di test dallo split %r", len(segments), cfg.split)
        return lambda t: segments[t % len(segments)]
    if cfg.markov:
        sources = [(name, MarkovSource.from_spec(spec)) for name, spec in cfg.markov_map.items()]

        def markov_segment(t: int) -> BitSegment:
            name, src = sources[t % len(sources)]
            return BitSegment(src.sample(1, k, cfg.seed, stream_id=t)[0], name, f"markov:{src.to_spec()}", 0)

        return markov_segment

    def random_segment(t: int) -> BitSegment:
        rng = streams.stream_rng(cfg.seed, t, streams.SOURCE)
        return BitSegment(rng.integers(0, 2, size=k, dtype=np.uint8), "random", "uniform", 0)

    return random_segment


###############################################################################
# Benchmark
###############################################################################


@dataclass(frozen=True)
class TrialRecord:
    ber: float
    trial: int
    seed: int
    stream_id: int
    mode: str
    file_type: Optional[str]
    routed_type: Optional[str]
    channel_errors: int
    success: bool
    converged: bool
    iterations: int


@dataclass(frozen=True)
class ResultRow:
    ber: float
    mode: str
    file_type: str
    trials: int
    successes: int
    iterations: int
    ftr_correct: int = 0
    ftr_total: int = 0

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    @property
    def mean_iters(self) -> float:
        return self.iterations / self.trials

    @property
    def ftr_accuracy(self) -> Optional[float]:
        return self.ftr_correct / self.ftr_total if self.ftr_total else None


@dataclass(frozen=True)
class PairedComparison:
    """Per-BER outcome of ``mode`` against ldpc-only on identical noise."""

    ber: float
    mode: str
    both: int
    nr_only: int
    ldpc_only: int
    neither: int


@dataclass
class BenchmarkResult:
    config: ExperimentConfig
    config_hash: str
    rows: list
    trials: list
    comparisons: list
    wall_seconds: float = 0.0

    def row(self, ber: float, mode: str, file_type: str = "all") -> ResultRow:
        for r in self.rows:
            if r.ber == ber and r.mode == mode and r.file_type == file_type:
                return r
        raise KeyError((ber, mode, file_type))


def _aggregate(cfg: ExperimentConfig, records: Sequence[TrialRecord], uses_ftr: dict) -> list[ResultRow]:
    rows: list[ResultRow] = []
    for ber in cfg.bers:
        for mode in cfg.modes:
            recs = [r for r in records if r.ber == ber and r.mode == mode]
            types = sorted({r.file_type or "-" for r in recs})
            for file_type in types + ["all"]:
                sel = recs if file_type == "all" else [r for r in recs if (r.file_type or "-") == file_type]
                ftr_total = len(sel) if uses_ftr.get(mode) else 0
                ftr_correct = sum(r.routed_type == r.file_type for r in sel) if ftr_total else 0
                rows.append(ResultRow(
                    ber, mode, file_type, len(sel), sum(r.success for r in sel),
                    sum(r.iterations for r in sel), ftr_correct, ftr_total,
                ))
    return rows


def paired_comparison(cfg: ExperimentConfig, records: Sequence[TrialRecord]) -> list[PairedComparison]:
    if "ldpc-only" not in cfg.modes:
        return []
    base = {(r.ber, r.trial): r.success for r in records if r.mode == "ldpc-only"}
    out: list[PairedComparison] = []
    for ber in cfg.bers:
        for mode in cfg.modes:
            if mode == "ldpc-only":
                continue
            counts = {"both": 0, "nr_only": 0, "ldpc_only": 0, "neither": 0}
            for r in records:
                if r.ber != ber or r.mode != mode:
                    continue
                ldpc_ok = base[(r.ber, r.trial)]
                key = ("both" if ldpc_ok else "nr_only") if r.success else ("ldpc_only" if ldpc_ok else "neither")
                counts[key] += 1
            out.append(PairedComparison(ber, mode, **counts))
    return out


def run_benchmark(
    cfg: ExperimentConfig,
    segments: Optional[SegmentProvider] = None,
    stacks: Optional[dict] = None,
) -> BenchmarkResult:
    """Run ``cfg.trials`` paired trials per BER for every configured mode."""

    start = time.perf_counter()
    code = load_code(cfg.code)
    if stacks is None:
        stacks = {mode: build_stack(cfg, mode, code) for mode in cfg.modes}
    provider = segments or segment_source(cfg, code.k)
    log.info(
        "Benchmark: codice (%d, %d), %d BER x %d prove, modalità %s",
        code.n, code.k, len(cfg.bers), cfg.trials, ", ".join(cfg.modes),
    )

    def run_trial(job: tuple[int, float, int]) -> list[TrialRecord]:
        ber_index, ber, t = job
        stream_id = ber_index * cfg.trials + t
        truth = provider(t)
        if len(truth) != code.k:
            raise LengthMismatchError("segmento di informazione", code.k, len(truth))
        mask = noise_mask(code.n, ChannelSpec(ber, cfg.seed, stream_id))
        noisy = encode(truth.bits, code) ^ mask
        records = []
        for mode in cfg.modes:
            out = decode_segment(noisy, stacks[mode], ber, truth)
            records.append(TrialRecord(
                ber, t, cfg.seed, stream_id, mode, truth.file_type, out.diagnostics.routed_type,
                int(mask.sum()), bool(out.success), out.diagnostics.converged, out.diagnostics.iterations,
            ))
        return records

    jobs = [(b, ber, t) for b, ber in enumerate(cfg.bers) for t in range(cfg.trials)]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        records = [rec for batch in pool.map(run_trial, jobs) for rec in batch]

    uses_ftr = {mode: stacks[mode].ftr is not None and mode != "ldpc-only" for mode in cfg.modes}
    rows = _aggregate(cfg, records, uses_ftr)
    comparisons = paired_comparison(cfg, records)
    for r in rows:
        if r.file_type == "all":
            log.info("p=%g %-15s successo %d/%d (%.3f)", r.ber, r.mode, r.successes, r.trials, r.rate)
    return BenchmarkResult(cfg, config_hash(cfg), rows, records, comparisons, time.perf_counter() - start)


###############################################################################
# Reports and replay
###############################################################################


class ReportPaths(NamedTuple):
    csv: Path
    summary: Path
    trials: Optional[Path]


def report(
    result: BenchmarkResult,
    out_dir,
    modes: Optional[Sequence[str]] = None,
    file_types: Optional[Sequence[str]] = None,
    stem: str = "results",
) -> ReportPaths:
    """Write ``<stem>.csv``, ``<stem>.json`` and the per-trial log ``<stem>.trials.jsonl``."""

    rows = report_formatter.filter_rows(result.rows, modes, file_types)
    if not rows:
        raise ValueError("no rows")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = report_formatter.render_csv(rows)
    csv_path = out_dir / f"{stem}.csv"
    csv_path.write_text(text, encoding="utf-8", newline="")
    filters = {"modes": list(modes or []), "file_types": list(file_types or [])}
    payload = report_formatter.summary_payload(result, rows, sha256_hex(text.encode("utf-8")), filters)
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    trials_path = None
    if result.trials:
        trials_path = out_dir / f"{stem}.trials.jsonl"
        with trials_path.open("w", encoding="utf-8") as f:
            for rec in result.trials:
                f.write(report_formatter.trial_to_json(rec) + "\n")
    log.info("Risultati salvati in %s e %s", csv_path, json_path)
    return ReportPaths(csv_path, json_path, trials_path)


class SummaryFormatError(ValueError):
    def __init__(self, path, reason: str):
        super().__init__(f"riepilogo non valido {path}: {reason}")
        self.path = path


class ReplayOutcome(NamedTuple):
    reproducible: bool
    expected_sha256: str
    actual_sha256: str


def replay_benchmark(summary_path) -> ReplayOutcome:
    """Re-run the benchmark described by a summary JSON and compare CSV digests."""

    payload = json.loads(Path(summary_path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise SummaryFormatError(summary_path, "atteso un oggetto JSON")
    for key, kind in (("config", dict), ("csv_sha256", str)):
        if not isinstance(payload.get(key), kind):
            raise SummaryFormatError(summary_path, f"chiave {key!r} mancante o non valida")
    try:
        cfg = ExperimentConfig.from_dict(payload["config"])
    except TypeError as e:
        raise SummaryFormatError(summary_path, str(e)) from None
    result = run_benchmark(cfg)
    filters = payload.get("filters", {})
    rows = report_formatter.filter_rows(result.rows, filters.get("modes"), filters.get("file_types"))
    actual = sha256_hex(report_formatter.render_csv(rows).encode("utf-8"))
    expected = payload["csv_sha256"]
    return ReplayOutcome(actual == expected, expected, actual)
