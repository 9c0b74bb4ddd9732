# -*- coding: utf-8 -*-

"""Binary model container.

Layout (all integers little endian)::

    b"NRNN"            magic
    u16                format version
    u32                header length H
    H bytes            JSON header: layers, input_shape, init_seed, metadata,
                       params [{name, shape}]
    f8 blobs           one per parameter, C order, in header order
    32 bytes           SHA256 of everything above

The metadata carries role, file_type, k (window length), p_dnn and, for a
file-type recognizer, the type registry.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Optional

import numpy as np
from Cryptodome.Hash import SHA256

from .tensor_nn import LayerGraph, layer_from_descriptor

log = logging.getLogger(__name__)

MAGIC = b"NRNN"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_DIGEST_SIZE = 32


class ModelFormatError(ValueError):
    def __init__(self, path, reason: str):
        super().__init__(f"file modello non valido {path}: {reason}")


class ModelMismatchError(ValueError):
    def __init__(self, path, field: str, expected, actual):
        super().__init__(
            f"il modello {path} non corrisponde: {field} atteso {expected!r}, trovato {actual!r} "
            "(usa --force per caricarlo comunque)"
        )
        self.field = field


def model_to_bytes(model: LayerGraph) -> bytes:
    named = model.named_parameters()
    header = {
        "layers": model.describe(),
        "input_shape": list(model.input_shape),
        "init_seed": model.init_seed,
        "metadata": model.metadata,
        "params": [{"name": name, "shape": list(p.shape)} for name, p in named],
    }
    hjson = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(hjson)))
    body += hjson
    for _, p in named:
        body += np.ascontiguousarray(p, dtype="<f8").tobytes()
    return bytes(body) + SHA256.new(bytes(body)).digest()


def model_from_bytes(data: bytes, source="<bytes>") -> LayerGraph:
    if len(data) < _PREFIX.size + _DIGEST_SIZE:
        raise ModelFormatError(source, f"troppo corto ({len(data)} byte)")
    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    magic, version, hlen = _PREFIX.unpack_from(body, 0)
    if magic != MAGIC:
        raise ModelFormatError(source, f"magic {magic!r} invece di {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(source, f"versione di formato {version} non supportata")
    if SHA256.new(body).digest() != digest:
        raise ModelFormatError(source, "checksum SHA256 errato (file corrotto?)")
    try:
        header = json.loads(body[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
        layers = [layer_from_descriptor(d) for d in header["layers"]]
        model = LayerGraph(layers, header["input_shape"], header.get("init_seed", 0), header.get("metadata"))
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(source, f"intestazione non valida: {e}") from None

    offset = _PREFIX.size + hlen
    named = model.named_parameters()
    if [p["name"] for p in header["params"]] != [n for n, _ in named]:
        raise ModelFormatError(source, "l'elenco dei parametri non corrisponde ai layer")
    for spec, (name, param) in zip(header["params"], named):
        if tuple(spec["shape"]) != param.shape:
            raise ModelFormatError(source, f"{name}: forma {spec['shape']} invece di {list(param.shape)}")
        size = param.size * 8
        if offset + size > len(body):
            raise ModelFormatError(source, f"{name}: dati troncati")
        param[...] = np.frombuffer(body, dtype="<f8", count=param.size, offset=offset).reshape(param.shape)
        offset += size
    if offset != len(body):
        raise ModelFormatError(source, f"{len(body) - offset} byte in eccesso dopo i parametri")
    return model


def save_model(model: LayerGraph, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(model_to_bytes(model))
    log.info("Modello salvato in %s", path)
    return path


def check_metadata(model: LayerGraph, expect: dict, source="<model>", force: bool = False) -> None:
    """Compare *expect* against the model metadata; floats compare with 1e-12."""

    for key, want in expect.items():
        if want is None:
            continue
        have = model.metadata.get(key)
        if isinstance(want, float) and isinstance(have, (int, float)):
            same = abs(float(have) - want) <= 1e-12
        else:
            same = have == want
        if same:
            continue
        if force:
            log.warning("Metadato %s del modello %s: atteso %r, trovato %r (forzato)", key, source, want, have)
        else:
            raise ModelMismatchError(source, key, want, have)


def load_model(path, expect: Optional[dict] = None, force: bool = False) -> LayerGraph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"modello non trovato: {path}")
    model = model_from_bytes(path.read_bytes(), source=path)
    if expect:
        check_metadata(model, expect, source=path, force=force)
    log.debug("Modello %s caricato: %r", path, model)
    return model
