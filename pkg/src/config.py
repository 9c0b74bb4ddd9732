# -*- coding: utf-8 -*-

"""Experiment configuration.

Config files are plain ``key = value`` text::

    # benchmark on a synthetic Markov corpus
    code = gallager:n=600,wc=3,wr=30,seed=1
    bers = 1%, 1.5%, 2%
    trials = 1000
    modes = ldpc-only, oracle-nr-ldpc
    markov.markov = 1:0.02,0.98

Dotted keys fill per-type maps (``softdec.<type>``, ``markov.<type>``).
Any key can be overridden from the command line with ``--set key=value``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from .utils import parse_ber, parse_ber_list, sha256_hex

ENV_CONFIG = "NR_LDPC_CONFIG"

MODES = ("ldpc-only", "nr-ldpc", "oracle-nr-ldpc")

_MAP_KEYS = ("softdec", "markov")


class ConfigError(ValueError):
    def __init__(self, reason: str, source: str = "", line: Optional[int] = None):
        where = f"{source}:{line}: " if source and line else (f"{source}: " if source else "")
        super().__init__(f"{where}{reason}")


@dataclass(frozen=True)
class ExperimentConfig:
    code: str = "gallager:n=600,wc=3,wr=30,seed=1"
    bers: tuple = (0.002, 0.004, 0.008, 0.012, 0.016)
    p_dnn: float = 0.008
    trials: int = 1000
    modes: tuple = ("ldpc-only",)
    seed: int = 0
    max_iters: int = 50
    ftr_model: Optional[str] = None
    softdec: tuple = ()
    markov: tuple = ()
    manifest: Optional[str] = None
    split: str = "test"
    extrinsic: bool = False
    force: bool = False
    workers: int = 1
    out_dir: str = "results"

    def __post_init__(self):
        if not self.bers:
            raise ConfigError("la griglia dei BER è vuota")
        for p in self.bers:
            if not 0.0 < p < 0.5:
                raise ConfigError(f"BER {p} fuori da (0, 0.5)")
        if self.trials < 1:
            raise ConfigError(f"trials deve essere >= 1, ricevuto {self.trials}")
        bad = [m for m in self.modes if m not in MODES]
        if bad or not self.modes:
            raise ConfigError(f"modalità non valide {bad or list(self.modes)}; ammesse: {', '.join(MODES)}")
        if self.max_iters < 1 or self.workers < 1:
            raise ConfigError("max_iters e workers devono essere >= 1")

    @property
    def softdec_map(self) -> dict[str, str]:
        return dict(self.softdec)

    @property
    def markov_map(self) -> dict[str, str]:
        return dict(self.markov)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["bers"] = list(self.bers)
        d["modes"] = list(self.modes)
        d["softdec"] = self.softdec_map
        d["markov"] = self.markov_map
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"chiavi sconosciute: {unknown}")
        values = dict(data)
        for key in ("bers", "modes"):
            if key in values:
                values[key] = tuple(values[key])
        for key in _MAP_KEYS:
            if key in values:
                values[key] = tuple(sorted(dict(values[key]).items()))
        return cls(**values)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in {"1", "true", "yes", "on", "si", "sì"}:
        return True
    if t in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"booleano non valido: {text!r}")


def _parse_optional(text: str) -> Optional[str]:
    t = text.strip()
    return None if t.lower() in {"", "none", "-"} else t


_PARSERS = {
    "code": str.strip,
    "bers": lambda v: tuple(parse_ber_list(v)),
    "p_dnn": parse_ber,
    "trials": int,
    "modes": lambda v: tuple(m.strip() for m in v.split(",") if m.strip()),
    "seed": int,
    "max_iters": int,
    "ftr_model": _parse_optional,
    "manifest": _parse_optional,
    "split": str.strip,
    "extrinsic": _parse_bool,
    "force": _parse_bool,
    "workers": int,
    "out_dir": str.strip,
}


def _apply(values: dict[str, Any], maps: dict[str, dict[str, str]], key: str, raw: str) -> None:
    key = key.strip().replace("-", "_")
    head, dot, sub = key.partition(".")
    if dot:
        if head not in _MAP_KEYS or not sub:
            raise ValueError(f"chiave composta sconosciuta: {key!r}")
        maps[head][sub] = raw.strip()
        return
    if key not in _PARSERS:
        raise ValueError(f"chiave sconosciuta: {key!r}")
    values[key] = _PARSERS[key](raw)


def parse_config_text(text: str, source: str = "<config>", base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    values: dict[str, Any] = {}
    maps = {k: dict(getattr(base, k)) for k in _MAP_KEYS}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, raw = line.partition("=")
        if not eq:
            raise ConfigError(f"riga senza '=': {line!r}", source, lineno)
        try:
            _apply(values, maps, key, raw)
        except ValueError as e:
            raise ConfigError(str(e), source, lineno) from None
    for k in _MAP_KEYS:
        values[k] = tuple(sorted(maps[k].items()))
    return replace(base, **values)


def load_config(path=None) -> ExperimentConfig:
    """Read *path*, or ``$NR_LDPC_CONFIG`` when no path is given, or defaults."""

    if path is None:
        path = os.environ.get(ENV_CONFIG)
        if not path:
            return ExperimentConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"file di configurazione non leggibile: {e}", str(path)) from None
    return parse_config_text(text, str(path))


def apply_overrides(cfg: ExperimentConfig, overrides: Iterable[str]) -> ExperimentConfig:
    """Apply ``key=value`` strings on top of *cfg*."""

    lines = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override senza '=': {item!r}", "--set")
        lines.append(item)
    if not lines:
        return cfg
    return parse_config_text("\n".join(lines), "--set", base=cfg)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA256 of the canonical JSON rendering of every field."""

    return sha256_hex(json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8"))
