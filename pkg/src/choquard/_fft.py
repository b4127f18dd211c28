"""Thin wrappers around scipy.fft with a package-wide worker count.

Serial mode (the default) is bit-reproducible; setting CHOQUARD_THREADS > 1
enables threaded transforms, which agree with serial results to roundoff.
"""

import os

import scipy.fft as _sf


def workers() -> int:
    try:
        w = int(os.environ.get("CHOQUARD_THREADS", "1"))
    except ValueError:
        w = 1
    return max(w, 1)


def fftn(a, **kw):
    return _sf.fftn(a, workers=workers(), **kw)


def ifftn(a, **kw):
    return _sf.ifftn(a, workers=workers(), **kw)


def rfftn(a, **kw):
    return _sf.rfftn(a, workers=workers(), **kw)


def irfftn(a, s, **kw):
    return _sf.irfftn(a, s=s, workers=workers(), **kw)


def fft(a, axis=-1):
    return _sf.fft(a, axis=axis, workers=workers())


fftfreq = _sf.fftfreq
rfftfreq = _sf.rfftfreq
fftshift = _sf.fftshift
