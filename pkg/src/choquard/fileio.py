"""Binary field and kernel-cache file formats.

Field files ("CHQF"): magic, version u32, n u32, L f64, flag u8
(0 real / 1 complex), then n^3 little-endian f64 values, row-major with z
fastest; complex payloads interleave re/im.

Kernel caches ("CHQK"): magic, version u32, n u32, L f64, R f64, kind u8
(0 coulomb / 1 tabulated), optional growth bracket (2 f64, NaN when absent),
then the (2n)^3 multiplier as little-endian f64.
"""

import struct

import numpy as np

from .grid import ComplexField, Grid3, RealField
from .kernels import Kernel

_FIELD_MAGIC = b"CHQF"
_KERNEL_MAGIC = b"CHQK"
_VERSION = 1


def write_field(path, field):
    flag = 1 if isinstance(field, ComplexField) else 0
    g = field.grid
    with open(path, "wb") as f:
        f.write(_FIELD_MAGIC)
        f.write(struct.pack("<II", _VERSION, g.n))
        f.write(struct.pack("<d", g.half_width))
        f.write(struct.pack("<B", flag))
        if flag:
            buf = np.empty((g.n ** 3, 2), dtype="<f8")
            buf[:, 0] = field.values.real.ravel(order="C")
            buf[:, 1] = field.values.imag.ravel(order="C")
            f.write(buf.tobytes())
        else:
            f.write(field.values.astype("<f8").tobytes(order="C"))


def read_field(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _FIELD_MAGIC:
            raise ValueError(f"{path}: not a field file (magic {magic!r})")
        version, n = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (L,) = struct.unpack("<d", f.read(8))
        (flag,) = struct.unpack("<B", f.read(1))
        grid = Grid3(n, L)
        count = n ** 3 * (2 if flag else 1)
        data = np.frombuffer(f.read(count * 8), dtype="<f8", count=count)
    if flag:
        vals = (data[0::2] + 1j * data[1::2]).reshape((n, n, n))
        return ComplexField(grid, vals)
    return RealField(grid, data.reshape((n, n, n)).copy())


def write_kernel_cache(path, kern):
    g = kern.grid
    kind = 0 if kern.kind == "coulomb" else 1
    c1, c2 = kern.growth_bracket if kern.growth_bracket else (np.nan, np.nan)
    with open(path, "wb") as f:
        f.write(_KERNEL_MAGIC)
        f.write(struct.pack("<II", _VERSION, g.n))
        f.write(struct.pack("<dd", g.half_width, kern.truncation_radius))
        f.write(struct.pack("<B", kind))
        f.write(struct.pack("<dd", c1, c2))
        f.write(kern.multiplier.astype("<f8").tobytes(order="C"))


def read_kernel_cache(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _KERNEL_MAGIC:
            raise ValueError(f"{path}: not a kernel cache (magic {magic!r})")
        version, n = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        L, R = struct.unpack("<dd", f.read(16))
        (kind,) = struct.unpack("<B", f.read(1))
        c1, c2 = struct.unpack("<dd", f.read(16))
        n2 = 2 * n
        data = np.frombuffer(f.read(n2 ** 3 * 8), dtype="<f8", count=n2 ** 3)
    grid = Grid3(n, L)
    bracket = None if np.isnan(c1) else (c1, c2)
    return Kernel(grid, "coulomb" if kind == 0 else "tabulated", R,
                  data.reshape((n2, n2, n2)).copy(), growth_bracket=bracket)
