"""Binary problem files.

Layout (little-endian)::

    magic   8 bytes  b"OEKSPROB"
    version u32      1
    k       u64      index of the last step (k + 1 steps follow)
    per step:
        n, ell, m   3 x u64
        present     u8   bit flags F=1 H=2 c=4 G=8 o=16 K=32 L=64
        diagonal    u8   bit flags K=1 L=2 (covariance stored as its diagonal)
        arrays      f64, row-major, in the order F H c G o K L, present ones only

Shapes follow from the dimensions: F is ell x n_prev, H is ell x n, c has
length ell, G is m x n, o has length m, K is ell x ell (or ell), L is m x m
(or m).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ContractError
from ..model import SmootherProblem, StepInput

MAGIC = b"OEKSPROB"
VERSION = 1
FIELDS = ("F", "H", "c", "G", "o", "K", "L")
_HEADER = struct.Struct("<8sIQ")
_STEP = struct.Struct("<QQQBB")


def _shape(name: str, n_prev: int, n: int, ell: int, m: int, diagonal: int):
    return {
        "F": (ell, n_prev),
        "H": (ell, n),
        "c": (ell,),
        "G": (m, n),
        "o": (m,),
        "K": (ell,) if diagonal & 1 else (ell, ell),
        "L": (m,) if diagonal & 2 else (m, m),
    }[name]


def dumps(problem: SmootherProblem) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, problem.k)]
    for s in problem.steps:
        present = 0
        diagonal = 0
        for bit, name in enumerate(FIELDS):
            if getattr(s, name) is not None:
                present |= 1 << bit
        if s.K is not None and s.K.ndim == 1:
            diagonal |= 1
        if s.L is not None and s.L.ndim == 1:
            diagonal |= 2
        parts.append(_STEP.pack(s.n, s.ell, s.m, present, diagonal))
        for name in FIELDS:
            a = getattr(s, name)
            if a is not None:
                parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> SmootherProblem:
    if len(data) < _HEADER.size:
        raise ContractError("truncated problem file")
    magic, version, k = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ContractError("not a problem file (bad magic)")
    if version != VERSION:
        raise ContractError(f"unsupported problem file version {version}")
    pos = _HEADER.size
    steps = []
    n_prev = 0
    for _ in range(k + 1):
        if pos + _STEP.size > len(data):
            raise ContractError("truncated problem file")
        n, ell, m, present, diagonal = _STEP.unpack_from(data, pos)
        pos += _STEP.size
        kw = {"n": n}
        for bit, name in enumerate(FIELDS):
            if not present & (1 << bit):
                continue
            shape = _shape(name, n_prev, n, ell, m, diagonal)
            count = int(np.prod(shape))
            end = pos + 8 * count
            if end > len(data):
                raise ContractError("truncated problem file")
            kw[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
            pos = end
        steps.append(StepInput(**kw))
        n_prev = n
    if pos != len(data):
        raise ContractError("trailing bytes after last step")
    return SmootherProblem(steps)


def save_problem(problem: SmootherProblem, path) -> None:
    Path(path).write_bytes(dumps(problem))


def load_problem(path) -> SmootherProblem:
    return loads(Path(path).read_bytes())
