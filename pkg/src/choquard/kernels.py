"""Convolution kernels homogeneous of degree -1 and free-space convolution.

Two build paths:

* ``coulomb`` -- W(x) = 1/|x| through the truncated-kernel transform
  4*pi*(1 - cos(R|k|))/|k|^2 (2*pi*R^2 at k = 0).  Sampling that transform
  directly on the doubled grid is equivalent to periodizing the truncated
  kernel, which leaks images back into the box, so the multiplier is
  evaluated on an oversampled spectral grid, carried to real space,
  restricted to the doubled box, and transformed back.  The resulting
  discrete convolution is free-space to band-limit accuracy.

* tabulated -- sample an arbitrary admissible W on the doubled grid
  (Hockney), with the origin cell assigned the cell average of W estimated
  by 3^3 subsampling.

Either way the multiplier lives on the doubled (2n)^3 grid and the
convolution zero-pads, multiplies, and restricts.
"""

import numpy as np

from . import _fft
from .grid import Grid3, RealField


def coulomb_multiplier(kmag, R):
    """Spectral transform of the R-truncated Coulomb kernel.

    Equals 4*pi*(1 - cos(R|k|))/|k|^2 for k != 0 and 2*pi*R^2 at k = 0.
    """
    kmag = np.asarray(kmag, dtype=np.float64)
    out = np.full(kmag.shape, 2.0 * np.pi * R * R)
    nz = kmag > 0
    out[nz] = 4.0 * np.pi * (1.0 - np.cos(R * kmag[nz])) / kmag[nz] ** 2
    return out


def _min_truncation_radius(grid):
    # diameter of the physical box [-L, L)^3
    return 2.0 * np.sqrt(3.0) * grid.half_width


def _fold_coulomb(grid, R):
    """Alias-free doubled-grid multiplier from the analytic transform.

    The transform is sampled on an oversampled k-grid whose real-space
    period exceeds R plus the doubled-box circumradius, so the band-limited
    kernel is recovered without images, then re-expanded on the doubled box.
    """
    n, h, L = grid.n, grid.spacing, grid.half_width
    n2 = 2 * n
    need = R + 2.0 * np.sqrt(3.0) * L + 8.0 * h
    oversample = 2
    while oversample * 4.0 * L < need:
        oversample += 1
    nbig = oversample * n2
    k1 = 2.0 * np.pi * _fft.fftfreq(nbig, d=h)
    kr = 2.0 * np.pi * _fft.rfftfreq(nbig, d=h)
    kmag = np.sqrt(k1[:, None, None] ** 2 + k1[None, :, None] ** 2
                   + kr[None, None, :] ** 2)
    M = coulomb_multiplier(kmag, R)
    del kmag
    w = _fft.irfftn(M, s=(nbig,) * 3)
    del M
    idx = np.r_[0:n + 1, nbig - n + 1:nbig]  # doubled box in wrap order
    wbox = w[np.ix_(idx, idx, idx)]
    del w
    return _fft.fftn(wbox).real


def _origin_cell_average(wfun, h):
    """Cell average of W over the origin cell from 3^3 subsampling.

    The 26 off-center subcell midpoints are sampled directly; the central
    subcell is closed by self-similarity, which for a kernel homogeneous of
    degree -1 makes its integral 1/9 of the full-cell integral.
    """
    s = h / 3.0
    offs = [(ix, iy, iz) for ix in (-1, 0, 1) for iy in (-1, 0, 1)
            for iz in (-1, 0, 1) if (ix, iy, iz) != (0, 0, 0)]
    pts = np.array(offs, dtype=np.float64) * s
    vals = wfun(pts[:, 0], pts[:, 1], pts[:, 2])
    return float(np.sum(vals)) / 24.0


def _check_admissible(wfun, grid):
    """Coarse gate from the degree -1 growth bracket.

    Homogeneity makes |x| W(x) constant along rays; the sampled kernel is
    rejected when W(2x)*2 strays from W(x) by more than a factor 10, or when
    any sample is negative.
    """
    h = grid.spacing
    rng = np.random.default_rng(12345)
    pts = rng.uniform(-grid.half_width, grid.half_width, size=(256, 3))
    pts = pts[np.linalg.norm(pts, axis=1) > 2 * h]
    w1 = np.asarray(wfun(pts[:, 0], pts[:, 1], pts[:, 2]), dtype=np.float64)
    w2 = np.asarray(wfun(2 * pts[:, 0], 2 * pts[:, 1], 2 * pts[:, 2]),
                    dtype=np.float64)
    if np.any(w1 < 0) or np.any(w2 < 0):
        raise ValueError("tabulated kernel has negative samples")
    ok = w1 > 0
    ratio = 2.0 * w2[ok] / w1[ok]
    if ratio.size and (np.max(ratio) > 10.0 or np.min(ratio) < 0.1):
        raise ValueError(
            "tabulated kernel violates the degree -1 growth bracket by more "
            f"than 10x (scaling ratio range [{np.min(ratio):.3g}, {np.max(ratio):.3g}])")


class Kernel:
    """Precomputed doubled-grid spectral multiplier for one W and one grid.

    Attributes
    ----------
    grid : Grid3
    kind : str
        "coulomb" or "tabulated".
    truncation_radius : float
        Zero-mode regularization radius R (>= box diameter).
    multiplier : ndarray, shape (2n, 2n, 2n)
        Real, even spectral multiplier on the doubled grid.
    growth_bracket : tuple or None
        Empirical (C1, C2) with C1/|x| <= W <= C2/|x| over the sampled
        points (tabulated kernels only).
    """

    def __init__(self, grid, kind, truncation_radius, multiplier,
                 growth_bracket=None):
        self.grid = grid
        self.kind = kind
        self.truncation_radius = float(truncation_radius)
        self.multiplier = multiplier
        self.growth_bracket = growth_bracket
        n = grid.n
        self._mult_r = np.ascontiguousarray(multiplier[..., :n + 1])

    def __repr__(self):
        return (f"Kernel(kind={self.kind!r}, grid={self.grid!r}, "
                f"R={self.truncation_radius:.4g})")


def build_kernel(spec, grid: Grid3, R=None) -> Kernel:
    """Build a convolution kernel on `grid`.

    Parameters
    ----------
    spec : str or callable
        "coulomb", or a callable W(X, Y, Z) sampled on the doubled grid
        (tabulated path; must be even, positive, homogeneous of degree -1).
    grid : Grid3
    R : float, optional
        Truncation radius; defaults to the box diameter 2*sqrt(3)*L and must
        not be smaller.
    """
    rmin = _min_truncation_radius(grid)
    if R is None:
        R = rmin
    if R < rmin * (1.0 - 1e-12):
        raise ValueError(f"truncation radius R={R} clips interactions; need >= {rmin:.6g}")

    if isinstance(spec, str):
        if spec != "coulomb":
            raise ValueError(f"unknown kernel spec {spec!r}")
        mult = _fold_coulomb(grid, R)
        return Kernel(grid, "coulomb", R, mult)

    if not callable(spec):
        raise ValueError("kernel spec must be 'coulomb' or a callable W(X, Y, Z)")
    _check_admissible(spec, grid)
    n, h = grid.n, grid.spacing
    n2 = 2 * n
    d1 = np.arange(n2)
    d1 = np.where(d1 <= n, d1, d1 - n2) * h  # wrap-order displacements
    DX = d1[:, None, None]
    DY = d1[None, :, None]
    DZ = d1[None, None, :]
    rr = np.sqrt(DX ** 2 + DY ** 2 + DZ ** 2)
    W = np.zeros((n2, n2, n2))
    mask = rr > 0
    vals = spec(np.broadcast_to(DX, rr.shape)[mask],
                np.broadcast_to(DY, rr.shape)[mask],
                np.broadcast_to(DZ, rr.shape)[mask])
    W[mask] = vals
    W[0, 0, 0] = _origin_cell_average(spec, h)
    rw = rr[mask] * W[mask]
    bracket = (float(np.min(rw)), float(np.max(rw)))
    mult = (_fft.fftn(W).real * h ** 3)
    return Kernel(grid, "tabulated", R, mult, growth_bracket=bracket)


def free_space_convolve(density: RealField, kern: Kernel) -> RealField:
    """(W * density) with free-space boundary behavior via domain doubling."""
    if density.grid != kern.grid:
        raise ValueError("density grid does not match kernel grid")
    g = density.grid
    n, n2 = g.n, 2 * g.n
    pad = np.zeros((n2, n2, n2))
    pad[:n, :n, :n] = density.values
    conv = _fft.irfftn(_fft.rfftn(pad) * kern._mult_r, s=(n2,) * 3)
    return RealField(g, conv[:n, :n, :n].copy(), check=False)


def convolve_values(density_values, kern: Kernel):
    """Array-in, array-out variant of free_space_convolve for hot loops."""
    n = kern.grid.n
    n2 = 2 * n
    pad = np.zeros((n2, n2, n2))
    pad[:n, :n, :n] = density_values
    conv = _fft.irfftn(_fft.rfftn(pad) * kern._mult_r, s=(n2,) * 3)
    return conv[:n, :n, :n]
