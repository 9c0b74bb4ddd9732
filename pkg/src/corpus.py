# -*- coding: utf-8 -*-

"""Labeled file corpora: scan, segment, split.

Files are read as raw bytes and expanded MSB-first into one contiguous
bitstream, cut into non-overlapping k-bit segments (the partial tail is
dropped). Splits are drawn per file, never per segment. Noise is never
stored here; it is applied on the fly by whoever consumes the segments.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import streams
from .utils import BitSegment, bytes_to_bits, sha256_hex

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "validation", "test")

DEFAULT_EXTENSIONS = {
    ".html": "html",
    ".htm": "html",
    ".tex": "latex",
    ".pdf": "pdf",
    ".jpg": "jpeg",
    ".jpeg": "jpeg",
}


class CorpusError(ValueError):
    pass


class UnknownFileTypeError(CorpusError):
    def __init__(self, path):
        super().__init__(f"tipo di file sconosciuto per {path}: estensione non mappata e nessuna etichetta esplicita")
        self.path = path


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    file_type: str
    size: int
    sha256: str
    split: Optional[str] = None


@dataclass
class CorpusManifest:
    registry: tuple[str, ...] = ()
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        self.registry = tuple(self.registry)
        bad = sorted({e.file_type for e in self.entries} - set(self.registry))
        if bad:
            raise CorpusError(f"etichette fuori dal registro {list(self.registry)}: {bad}")

    def __len__(self) -> int:
        return len(self.entries)

    def of_type(self, file_type: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.file_type == file_type]

    def in_split(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def segment_counts(self, k: int) -> dict[str, int]:
        """Per-type Σ floor(8·bytes / k)."""
        counts = {t: 0 for t in self.registry}
        for e in self.entries:
            counts[e.file_type] += (8 * e.size) // k
        return counts

    def manifest_hash(self) -> str:
        payload = {"registry": list(self.registry), "entries": [asdict(e) for e in self.entries]}
        return sha256_hex(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8"))

    def to_jsonl(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            f.write(json.dumps({"registry": list(self.registry)}) + "\n")
            for e in self.entries:
                f.write(json.dumps(asdict(e), sort_keys=True) + "\n")
        return path

    @classmethod
    def from_jsonl(cls, path) -> "CorpusManifest":
        path = Path(path)
        try:
            lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
        except OSError as e:
            raise CorpusError(f"manifest non leggibile {path}: {e}") from None
        if not lines:
            raise CorpusError(f"manifest vuoto: {path}")
        try:
            head = json.loads(lines[0])
            entries = [ManifestEntry(**json.loads(ln)) for ln in lines[1:]]
            return cls(tuple(head["registry"]), entries)
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise CorpusError(f"manifest non valido {path}: {e}") from None


def _label_for(path: Path, root: Path, explicit: Optional[str], registry: Optional[Sequence[str]], extensions: Mapping[str, str]) -> str:
    if explicit is not None:
        return explicit
    label = extensions.get(path.suffix.lower())
    if label is not None:
        return label
    rel = path.relative_to(root)
    if len(rel.parts) > 1 and registry and rel.parts[0] in registry:
        return rel.parts[0]
    raise UnknownFileTypeError(path)


def _hash_file(item: tuple[Path, str]) -> ManifestEntry:
    path, label = item
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CorpusError(f"file non leggibile {path}: {e}") from None
    return ManifestEntry(path.as_posix(), label, len(data), sha256_hex(data))


def scan_corpus(
    roots: Union[Mapping[str, Union[str, Path]], Iterable[Union[str, Path]]],
    registry: Optional[Sequence[str]] = None,
    extensions: Mapping[str, str] = DEFAULT_EXTENSIONS,
    workers: int = 4,
) -> CorpusManifest:
    """Scan file trees into a manifest ordered by path.

    *roots* is either ``{label: directory}`` (every file gets that label) or
    a list of directories whose files are labeled by extension, falling back
    to the first sub-directory name when it is a registry label.
    """

    if isinstance(roots, Mapping):
        sources = [(Path(p), label) for label, p in roots.items()]
    else:
        sources = [(Path(p), None) for p in roots]

    items: list[tuple[Path, str]] = []
    for root, explicit in sources:
        if not root.is_dir():
            raise CorpusError(f"cartella non leggibile: {root}")
        for dirpath, _, filenames in os.walk(root):
            for name in filenames:
                path = Path(dirpath) / name
                items.append((path, _label_for(path, root, explicit, registry, extensions)))
    items.sort(key=lambda it: it[0].as_posix())

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        entries = list(pool.map(_hash_file, items))

    if registry is None:
        if isinstance(roots, Mapping):
            registry = tuple(roots.keys())
        else:
            registry = tuple(sorted({e.file_type for e in entries}))
    manifest = CorpusManifest(tuple(registry), entries)
    log.info("Corpus: %d file, %d tipi (%s)", len(entries), len(manifest.registry), ", ".join(manifest.registry))
    return manifest


def segment_file(data: bytes, k: int, file_type: Optional[str] = None, origin: Optional[str] = None) -> list[BitSegment]:
    """Non-overlapping k-bit windows of the MSB-first bitstream; tail dropped."""

    if k < 1:
        raise ValueError(f"k deve essere >= 1, ricevuto {k}")
    bits = bytes_to_bits(data)
    count = bits.size // k
    return [BitSegment(bits[j * k:(j + 1) * k], file_type, origin, j * k) for j in range(count)]


def load_segments(entries: Iterable[ManifestEntry], k: int, verify: bool = True) -> list[BitSegment]:
    segments: list[BitSegment] = []
    for e in entries:
        try:
            data = Path(e.path).read_bytes()
        except OSError as exc:
            raise CorpusError(f"file non leggibile {e.path}: {exc}") from None
        if verify and sha256_hex(data) != e.sha256:
            raise CorpusError(f"{e.path} è cambiato dopo la scansione (hash diverso)")
        segments.extend(segment_file(data, k, e.file_type, e.path))
    return segments


def _allocate(n: int, fractions: Sequence[float], label: str) -> list[int]:
    """Largest-remainder allocation of n files; every positive fraction gets >= 1."""

    positive = [i for i, f in enumerate(fractions) if f > 0]
    if n < len(positive):
        raise CorpusError(f"tipo {label!r}: {n} file non bastano per {len(positive)} split")
    exact = [n * f for f in fractions]
    counts = [int(np.floor(x)) for x in exact]
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    for i in positive:
        if counts[i] == 0:
            donor = max(range(len(counts)), key=lambda j: (counts[j], -j))
            counts[donor] -= 1
            counts[i] += 1
    return counts


def split_dataset(
    manifest: CorpusManifest,
    fractions: Sequence[float],
    seed: int,
    names: Sequence[str] = SPLIT_NAMES,
) -> CorpusManifest:
    """Assign every file to a split; files of type ``t`` are shuffled by substream ``t``.

    Returns a new manifest whose entries carry their split name.
    """

    fractions = [float(f) for f in fractions]
    if len(fractions) != len(names):
        raise ValueError(f"{len(fractions)} frazioni per {len(names)} split")
    if any(f < 0 for f in fractions) or not np.isclose(sum(fractions), 1.0):
        raise ValueError(f"le frazioni devono essere >= 0 e sommare a 1: {fractions}")

    assigned: dict[str, str] = {}
    for t_index, file_type in enumerate(manifest.registry):
        files = manifest.of_type(file_type)
        if not files:
            continue
        counts = _allocate(len(files), fractions, file_type)
        order = streams.stream_rng(seed, t_index, streams.SPLIT).permutation(len(files))
        start = 0
        for name, count in zip(names, counts):
            for j in order[start:start + count]:
                assigned[files[j].path] = name
            start += count
    entries = [replace(e, split=assigned.get(e.path)) for e in manifest.entries]
    return CorpusManifest(manifest.registry, entries)


def split_segments(manifest: CorpusManifest, k: int, names: Sequence[str] = SPLIT_NAMES) -> dict[str, list[BitSegment]]:
    """Per-split segment lists of an already split manifest."""

    splits = {name: load_segments(manifest.in_split(name), k) for name in names}
    overlap = split_overlap(splits)
    if overlap:
        log.warning("%d segmenti identici compaiono in più split (contenuto duplicato tra file)", overlap)
    return splits


def split_overlap(splits: Mapping[str, Sequence[BitSegment]]) -> int:
    """Number of segment digests that occur in more than one split."""

    seen: dict[str, str] = {}
    shared: set[str] = set()
    for name, segments in splits.items():
        for seg in segments:
            d = seg.digest()
            if seen.setdefault(d, name) != name:
                shared.add(d)
    return len(shared)
