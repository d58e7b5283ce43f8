"""Network <-> chromosome encodings.

All three granularities share one storage: a flat vector holding every
trainable scalar, ordered by layer, then filter/neuron, then row-major inside
the filter (``kh, kw, in_channels``) or neuron (its ingoing weights). The
granularity only changes where gene boundaries fall, which is what makes the
Accordion chromosome fold and unfold without touching its values.

    folded        one gene per Conv2D / Dense layer
    semi_folded   one gene per conv filter or per neuron's ingoing weights
    flat          one gene per scalar (the traditional encoding)
"""
from __future__ import annotations

import enum
import functools
import io
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import CodecError, ContractError
from .nn import Network, NetworkSpec, get_architecture


class Granularity(str, enum.Enum):
    FOLDED = "folded"
    SEMI_FOLDED = "semi_folded"
    FLAT = "flat"


GENE_KINDS = ("layer", "filter", "neuron", "scalar")


@dataclass(frozen=True)
class GeneLayout:
    granularity: Granularity
    offsets: np.ndarray   # start of each gene in the value vector
    lengths: np.ndarray
    layers: np.ndarray    # parameterized-layer index of each gene
    kinds: np.ndarray     # index into GENE_KINDS
    section_boundary: int  # first classifier gene

    def __len__(self):
        return len(self.offsets)

    @property
    def section_slices(self):
        return slice(0, self.section_boundary), slice(self.section_boundary, len(self))


@functools.lru_cache(maxsize=64)
def gene_layout(spec: NetworkSpec, granularity: Granularity) -> GeneLayout:
    granularity = Granularity(granularity)
    offsets, lengths, layers, kinds = [], [], [], []
    boundary = None
    start = genes = 0
    for li, layer in enumerate(spec.param_layers):
        size = int(np.prod(layer.param_shape))
        if layer.kind == "dense" and boundary is None:
            boundary = genes
        if granularity is Granularity.FOLDED:
            count, length, kind = 1, size, 0
        elif granularity is Granularity.SEMI_FOLDED:
            if layer.kind == "conv2d":
                count, kind = layer.filters, 1
            else:
                count, kind = layer.units, 2
            length = size // count
        else:
            count, length, kind = size, 1, 3
        offsets.append(start + length * np.arange(count, dtype=np.int64))
        lengths.append(np.full(count, length, dtype=np.int64))
        layers.append(np.full(count, li, dtype=np.int64))
        kinds.append(np.full(count, kind, dtype=np.int8))
        start += size
        genes += count
    return GeneLayout(
        granularity,
        np.concatenate(offsets), np.concatenate(lengths),
        np.concatenate(layers), np.concatenate(kinds),
        boundary,
    )


@dataclass(frozen=True)
class Gene:
    kind: str
    layer: int
    index: int
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class Chromosome:
    """Immutable genotype. ``values`` is a read-only 1-D array."""

    spec: NetworkSpec
    granularity: Granularity
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        values = np.asarray(self.values)
        if values.ndim != 1 or values.size != self.spec.param_count:
            raise CodecError(
                f"chromosome holds {values.size} scalars, {self.spec.name} needs {self.spec.param_count}")
        if values.flags.writeable:
            values = values.copy()
            values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @cached_property
    def layout(self) -> GeneLayout:
        return gene_layout(self.spec, self.granularity)

    def __len__(self):
        return len(self.layout)

    @property
    def section_boundary(self):
        return self.layout.section_boundary

    def gene(self, i) -> Gene:
        lay = self.layout
        start, length = int(lay.offsets[i]), int(lay.lengths[i])
        layer = int(lay.layers[i])
        first = int(np.searchsorted(lay.layers, layer))
        return Gene(GENE_KINDS[lay.kinds[i]], layer, int(i) - first, self.values[start:start + length])

    @property
    def genes(self):
        return [self.gene(i) for i in range(len(self))]

    def with_values(self, values) -> "Chromosome":
        return Chromosome(self.spec, self.granularity, values)

    @classmethod
    def from_genes(cls, spec, granularity, genes) -> "Chromosome":
        lay = gene_layout(spec, Granularity(granularity))
        genes = list(genes)
        if len(genes) != len(lay):
            raise CodecError(f"expected {len(lay)} genes, got {len(genes)}", gene_index=min(len(genes), len(lay)))
        for i, (g, n) in enumerate(zip(genes, lay.lengths)):
            if np.size(g) != n:
                raise CodecError(f"gene {i} has {np.size(g)} values, expected {n}", gene_index=i)
        return cls(spec, granularity, np.concatenate([np.ravel(g) for g in genes]))

    def __eq__(self, other):
        if not isinstance(other, Chromosome):
            return NotImplemented
        return (self.spec == other.spec and self.granularity == other.granularity
                and self.values.dtype == other.values.dtype
                and self.values.tobytes() == other.values.tobytes())

    def __hash__(self):
        return hash((self.spec.name, self.granularity, self.values.tobytes()))


# --------------------------------------------------------------------------
# codec


def encode(net: Network, granularity=Granularity.SEMI_FOLDED) -> Chromosome:
    parts = []
    for layer, p in zip(net.spec.param_layers, net.params):
        # dense [in, out] is stored neuron-major so each neuron's ingoing weights are contiguous
        parts.append(p.T.ravel() if layer.kind == "dense" else p.ravel())
    return Chromosome(net.spec, Granularity(granularity), np.concatenate(parts))


def decode(chrom: Chromosome, spec: NetworkSpec | None = None) -> Network:
    spec = chrom.spec if spec is None else spec
    if spec != chrom.spec:
        raise CodecError(f"chromosome encodes {chrom.spec.name}, not {spec.name}")
    lay = chrom.layout
    if int(lay.lengths.sum()) != chrom.values.size:
        bad = int(np.searchsorted(np.cumsum(lay.lengths), chrom.values.size))
        raise CodecError("gene table does not cover the value vector", gene_index=bad)
    params = []
    start = 0
    for layer in spec.param_layers:
        shape = layer.param_shape
        size = int(np.prod(shape))
        block = chrom.values[start:start + size]
        if layer.kind == "dense":
            params.append(np.ascontiguousarray(block.reshape(shape[1], shape[0]).T))
        else:
            params.append(block.reshape(shape).copy())
        start += size
    return Network(spec, tuple(params))


def refold(chrom: Chromosome, target) -> Chromosome:
    target = Granularity(target)
    if target is chrom.granularity:
        return chrom
    return Chromosome(chrom.spec, target, chrom.values)


def section_lengths(chrom: Chromosome) -> tuple[int, int]:
    """(feature-extraction genes, classifier genes) of a semi-folded chromosome."""
    if chrom.granularity is not Granularity.SEMI_FOLDED:
        raise ContractError(f"section_lengths needs a semi-folded chromosome, got {chrom.granularity.value}")
    b = chrom.section_boundary
    return b, len(chrom) - b


# --------------------------------------------------------------------------
# binary container
#
#   b"ACCR" | u16 version | u8 granularity | u16 len + spec name (utf-8)
#   | u32 gene count | u32[genes] gene lengths | u64 scalar count | f32le[scalars]
#
# All integers little-endian.

MAGIC = b"ACCR"
VERSION = 1
_GRAN_CODES = {Granularity.FOLDED: 0, Granularity.SEMI_FOLDED: 1, Granularity.FLAT: 2}
_GRAN_FROM_CODE = {v: k for k, v in _GRAN_CODES.items()}


def write_chromosome(chrom: Chromosome, fh) -> None:
    name = chrom.spec.name.encode()
    lay = chrom.layout
    fh.write(MAGIC)
    fh.write(struct.pack("<HBH", VERSION, _GRAN_CODES[chrom.granularity], len(name)))
    fh.write(name)
    fh.write(struct.pack("<I", len(lay)))
    fh.write(lay.lengths.astype("<u4").tobytes())
    fh.write(struct.pack("<Q", chrom.values.size))
    fh.write(chrom.values.astype("<f4").tobytes())


def chromosome_to_bytes(chrom: Chromosome) -> bytes:
    buf = io.BytesIO()
    write_chromosome(chrom, buf)
    return buf.getvalue()


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CodecError(f"truncated chromosome container while reading {what}")
    return data


def read_chromosome(fh, spec: NetworkSpec | None = None) -> Chromosome:
    if _read_exact(fh, 4, "magic") != MAGIC:
        raise CodecError("not a chromosome container (bad magic)")
    version, code, name_len = struct.unpack("<HBH", _read_exact(fh, 5, "header"))
    if version != VERSION:
        raise CodecError(f"unsupported chromosome container version {version}")
    if code not in _GRAN_FROM_CODE:
        raise CodecError(f"unknown granularity code {code}")
    granularity = _GRAN_FROM_CODE[code]
    name = _read_exact(fh, name_len, "spec name").decode()
    if spec is None:
        spec = get_architecture(name)
    elif spec.name != name:
        raise CodecError(f"container encodes {name!r}, expected {spec.name!r}")
    (count,) = struct.unpack("<I", _read_exact(fh, 4, "gene count"))
    lengths = np.frombuffer(_read_exact(fh, 4 * count, "gene table"), dtype="<u4")
    expected = gene_layout(spec, granularity).lengths
    if count != len(expected):
        raise CodecError(f"container has {count} genes, {spec.name} needs {len(expected)}",
                         gene_index=min(count, len(expected)))
    mismatch = np.flatnonzero(lengths != expected)
    if mismatch.size:
        i = int(mismatch[0])
        raise CodecError(f"gene {i} has length {lengths[i]}, expected {expected[i]}", gene_index=i)
    (n,) = struct.unpack("<Q", _read_exact(fh, 8, "scalar count"))
    values = np.frombuffer(_read_exact(fh, 4 * n, "values"), dtype="<f4").astype(np.float32)
    return Chromosome(spec, granularity, values)


def chromosome_from_bytes(data: bytes, spec: NetworkSpec | None = None) -> Chromosome:
    return read_chromosome(io.BytesIO(data), spec)
