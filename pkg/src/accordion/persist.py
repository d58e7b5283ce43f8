"""Population files and checkpoints.

Layout (little-endian)::

    b"ACPOP\\0" | u16 version | u32 header length | JSON header
    | per member: u64 length + chromosome container (see genome.write_chromosome)

The JSON header carries the architecture description, member ids and cached
fitness, and for checkpoints the generation index, RNG state and metrics so far.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

from .errors import FormatError
from .genome import chromosome_from_bytes, chromosome_to_bytes
from .nn import NetworkSpec

MAGIC = b"ACPOP\x00"
VERSION = 1


def save_population(path, chromosomes, header=None) -> None:
    chromosomes = list(chromosomes)
    if not chromosomes:
        raise ValueError("refusing to save an empty population")
    header = dict(header or {})
    header["spec"] = chromosomes[0].spec.to_dict()
    header["size"] = len(chromosomes)
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for c in chromosomes:
            data = chromosome_to_bytes(c)
            fh.write(struct.pack("<Q", len(data)))
            fh.write(data)
    tmp.replace(path)


def load_population(path):
    """Return ``(chromosomes, header)``."""
    raw = Path(path).read_bytes()
    if raw[:6] != MAGIC:
        raise FormatError(f"{path}: not a population file", offset=0)
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header", offset=len(raw))
    version, hlen = struct.unpack("<HI", raw[6:12])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=6)
    pos = 12 + hlen
    if len(raw) < pos:
        raise FormatError(f"{path}: truncated header", offset=len(raw))
    header = json.loads(raw[12:pos])
    spec = NetworkSpec.from_dict(header["spec"])
    chromosomes = []
    for _ in range(header["size"]):
        if len(raw) < pos + 8:
            raise FormatError(f"{path}: truncated member table", offset=pos)
        (n,) = struct.unpack("<Q", raw[pos:pos + 8])
        pos += 8
        if len(raw) < pos + n:
            raise FormatError(f"{path}: truncated member", offset=pos)
        chromosomes.append(chromosome_from_bytes(raw[pos:pos + n], spec))
        pos += n
    return chromosomes, header
