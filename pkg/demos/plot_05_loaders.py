"""
Reading raw MNIST and CIFAR-10 files
====================================

The loaders read the original binary formats directly: big-endian IDX for
MNIST, and 3073-byte records (label + 3x32x32 pixels) for CIFAR-10. Pixels
are scaled to [0, 1]. Malformed files raise errors that carry the path and
byte offset.
"""

import os
import struct
import tempfile

from amnet.datasets import DataFormatError, load_cifar10, load_mnist

d = tempfile.mkdtemp()
img, lab = os.path.join(d, "img"), os.path.join(d, "lab")
with open(img, "wb") as f:
    f.write(struct.pack(">IIII", 0x803, 2, 2, 2) + bytes([0, 255, 51, 102, 1, 2, 3, 4]))
with open(lab, "wb") as f:
    f.write(struct.pack(">II", 0x801, 2) + bytes([7, 1]))
ds = load_mnist(img, lab)
print(ds.images)
print(ds.labels)

# %%
# CIFAR-10: one record with label 3, red channel all 255.
rec = os.path.join(d, "batch.bin")
with open(rec, "wb") as f:
    f.write(bytes([3]) + bytes([255]) * 1024 + bytes(2048))
c = load_cifar10([rec])
print(c.images.shape, c.labels, c.images[0, :3], c.images[0, 1024:1027])

# %%
# A file cut short mid-record.
with open(rec, "ab") as f:
    f.write(b"\x00" * 100)
try:
    load_cifar10([rec])
except DataFormatError as e:
    print(type(e).__name__, "->", e)
