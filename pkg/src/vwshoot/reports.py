"""Condition reports and deterministic JSON serialization."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


def _plain(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value.ravel()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class ConditionReport:
    condition: str
    status: str
    worst_value: float | None = None
    witness_t: float | None = None
    witness_x: list | None = None
    samples: int = 0
    constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if self.status not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"bad status {self.status!r}")
        if self.status == FAIL and self.witness_x is None:
            raise ValueError("fail reports must carry a witness point")

    @property
    def passed(self):
        return self.status == PASS

    def to_dict(self):
        return {
            "condition": self.condition,
            "status": self.status,
            "worst_value": _plain(self.worst_value),
            "witness_t": _plain(self.witness_t),
            "witness_x": _plain(self.witness_x),
            "samples": self.samples,
            "constants": _plain(self.constants),
            "notes": list(self.notes),
        }


def dumps_canonical(payload) -> str:
    """Deterministic JSON text: sorted keys, fixed separators, repr floats."""
    return json.dumps(_plain(payload), sort_keys=True, indent=1)


def write_json_atomic(path, payload):
    """Write JSON via a temp file + rename so readers never see partials."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(dumps_canonical(payload))
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
