# Chromosome encodings
#
# One network, three ways to cut it into genes: whole layers (folded),
# one filter or neuron per gene (semi-folded) and one scalar per gene (flat).

import numpy as np

from accordion import nn
from accordion.genome import Granularity, decode, encode, refold, section_lengths

# The MNIST network: four 2x2 conv layers, two pools, then 9 -> 40 -> 10.

spec = nn.mnist_custom()
print(nn.describe(spec))
print()
print(nn.MNIST_PARAM_NOTE)

net = nn.glorot_init(spec, seed=0)

# Folded: six genes, one per parameterised layer.

folded = encode(net, Granularity.FOLDED)
print("folded genes:", len(folded), [g.values.size for g in folded.genes])

# Semi-folded: 40 + 40 + 5 + 1 filters, then 40 + 10 neurons.

semi = refold(folded, Granularity.SEMI_FOLDED)
print("semi-folded genes:", len(semi), "sections:", section_lengths(semi))
g = semi.gene(86)
print("gene 86 is", g.kind, g.index, "of layer", g.layer, "with", g.values.size, "ingoing weights")

# Flat: every scalar is a gene.

flat = refold(semi, Granularity.FLAT)
print("flat genes:", len(flat))

# Refolding only changes the gene table; the value vector is shared.

assert np.shares_memory(folded.values, flat.values)
assert decode(flat) == net

# LeNet on 32x32 grayscale CIFAR.

lenet = nn.lenet_cifar10()
lsemi = encode(nn.glorot_init(lenet, 0))
print()
print(nn.describe(lenet))
print("LeNet semi-folded:", len(lsemi), section_lengths(lsemi), "flat:", lenet.param_count)
