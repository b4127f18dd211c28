"""Time integration of i u_t + lap(u) + (W*|u|^2) u = 0 and orbital stability.

Strang splitting alternates the exact pointwise phase rotation
exp(i dt (W*|u|^2)) -- exact because the rotation leaves |u| unchanged, so
the Hartree potential is constant within the substep -- with the exact
spectral free flight exp(-i dt |k|^2).  Both substeps are unitary, so the
charge is conserved to roundoff and the energy drift is O(dt^2).
"""

import numpy as np

from . import _fft
from .energy import density
from .grid import ComplexField, as_complex
from .kernels import Kernel, convolve_values


class EvolutionState:
    """Field plus clock plus the conserved quantities recorded at t = 0."""

    def __init__(self, field, kern: Kernel, t=0.0, charge0=None, energy0=None):
        self.field = as_complex(field)
        self.kern = kern
        self.t = float(t)
        self.charge0 = self._charge() if charge0 is None else charge0
        self.energy0 = self._energy() if energy0 is None else energy0

    def _charge(self):
        g = self.field.grid
        return float(np.sum(np.abs(self.field.values) ** 2) * g.cell_volume)

    def _energy(self):
        g = self.field.grid
        vals = self.field.values
        dens = np.abs(vals) ** 2
        phi = convolve_values(dens, self.kern)
        uh = _fft.fftn(vals)
        kin = float(np.sum(g.k_squared() * np.abs(uh) ** 2) * g.cell_volume / g.n ** 3)
        dd = float(np.sum(phi * dens) * g.cell_volume)
        return 0.5 * kin - 0.25 * dd

    def drifts(self):
        c = self._charge()
        e = self._energy()
        denom = abs(self.energy0) if self.energy0 else 1.0
        return abs(c - self.charge0) / self.charge0, abs(e - self.energy0) / denom


def step_strang(state: EvolutionState, dt, kern: Kernel = None) -> EvolutionState:
    """One Strang step: half potential, full kinetic, half potential."""
    kern = kern or state.kern
    g = state.field.grid
    u = state.field.values
    expK = np.exp(-1j * dt * g.k_squared())
    phi = convolve_values(np.abs(u) ** 2, kern)
    u = u * np.exp(0.5j * dt * phi)
    u = _fft.ifftn(_fft.fftn(u) * expK)
    phi = convolve_values(np.abs(u) ** 2, kern)
    u = u * np.exp(0.5j * dt * phi)
    out = EvolutionState(ComplexField(g, u, check=False), kern,
                         t=state.t + dt, charge0=state.charge0,
                         energy0=state.energy0)
    return out


class EvolutionSeries:
    """Sampled time series: t, charge drift, energy drift, orbit distance."""

    def __init__(self):
        self.t = []
        self.charge_drift = []
        self.energy_drift = []
        self.orbit_distance = []
        self.best_phase = []

    def append(self, t, cd, ed, od=None, ph=None):
        self.t.append(t)
        self.charge_drift.append(cd)
        self.energy_drift.append(ed)
        self.orbit_distance.append(od)
        self.best_phase.append(ph)

    def max_orbit_distance(self):
        vals = [d for d in self.orbit_distance if d is not None]
        return max(vals) if vals else None

    def rows(self):
        for i in range(len(self.t)):
            yield (self.t[i], self.charge_drift[i], self.energy_drift[i],
                   self.orbit_distance[i], self.best_phase[i])


def evolve(u0, T, dt, kern: Kernel, sample_every=100, reference=None):
    """Propagate u0 to time T, sampling drifts every `sample_every` steps.

    Consecutive half potential steps are merged (exact, since the potential
    substep preserves |u| pointwise).  When `reference` (a GroundState) is
    given, the orbit distance is sampled as well.  NaNs abort with a
    diagnostic.

    Returns (final EvolutionState, EvolutionSeries).
    """
    if T < 0 or (T > 0 and not dt > 0):
        raise ValueError("need T >= 0 and dt > 0")
    state = EvolutionState(u0, kern)
    series = EvolutionSeries()

    def sample(st):
        cd, ed = st.drifts()
        if reference is not None:
            od = orbit_distance(st.field, reference)
            series.append(st.t, cd, ed, od.value, od.best_phase)
        else:
            series.append(st.t, cd, ed)

    sample(state)
    nsteps = int(round(T / dt)) if T > 0 else 0
    if nsteps == 0:
        return state, series

    g = state.field.grid
    expK = np.exp(-1j * dt * g.k_squared())
    u = state.field.values
    phi = convolve_values(np.abs(u) ** 2, kern)
    u = u * np.exp(0.5j * dt * phi)
    for s in range(1, nsteps + 1):
        u = _fft.ifftn(_fft.fftn(u) * expK)
        phi = convolve_values(np.abs(u) ** 2, kern)
        boundary = (s == nsteps) or (s % sample_every == 0)
        u = u * np.exp((0.5j if boundary else 1j) * dt * phi)
        if boundary:
            if not np.all(np.isfinite(u)):
                raise FloatingPointError(
                    f"non-finite field at step {s} (t={s * dt:.6g}); "
                    "reduce dt or check the initial data")
            state = EvolutionState(ComplexField(g, u, check=False), kern,
                                   t=s * dt, charge0=state.charge0,
                                   energy0=state.energy0)
            sample(state)
            if s < nsteps:
                u = u * np.exp(0.5j * dt * phi)
    return state, series


class OrbitDistance:
    """H1 distance to the ground-state orbit modulo shifts and phase."""

    def __init__(self, value, best_shift, best_phase):
        self.value = value
        self.best_shift = best_shift
        self.best_phase = best_phase

    def __repr__(self):
        return (f"OrbitDistance(value={self.value:.3e}, shift={self.best_shift}, "
                f"phase={self.best_phase:.4f})")


def orbit_distance(u, reference) -> OrbitDistance:
    """min over integer shifts y and phase theta of |u - e^{i theta} U(.-y)|_H1.

    The shift is located at the argmax of the spectral cross-correlation
    <u, U(.-y)>; the phase minimization is exact given the shift.
    """
    ref = reference.profile if hasattr(reference, "profile") else reference
    if u.grid != ref.grid:
        raise ValueError("field and reference live on different grids")
    g = u.grid
    n = g.n
    uh = _fft.fftn(np.asarray(u.values, dtype=np.complex128))
    Uh = _fft.fftn(np.asarray(ref.values, dtype=np.complex128))
    corr = _fft.ifftn(uh * np.conj(Uh))
    shift = np.unravel_index(np.argmax(np.abs(corr)), corr.shape)
    K2 = g.k_squared()
    phase_k = np.exp(-1j * (g.k1[:, None, None] * (shift[0] * g.spacing)
                            + g.k1[None, :, None] * (shift[1] * g.spacing)
                            + g.k1[None, None, :] * (shift[2] * g.spacing)))
    Uh_shift = Uh * phase_k
    scale = g.cell_volume / n ** 3
    ip = complex(np.sum((1.0 + K2) * uh * np.conj(Uh_shift)) * scale)
    h1_u = float(np.sum((1.0 + K2) * np.abs(uh) ** 2) * scale)
    h1_U = float(np.sum((1.0 + K2) * np.abs(Uh) ** 2) * scale)
    d2 = max(h1_u + h1_U - 2.0 * abs(ip), 0.0)
    theta = float(np.angle(ip)) % (2.0 * np.pi)
    return OrbitDistance(float(np.sqrt(d2)), tuple(int(s) for s in shift), theta)


def band_limited_noise(grid, seed, fraction=0.125):
    """Random complex field confined to the lowest `fraction` of the spectrum."""
    rng = np.random.default_rng(seed)
    n = grid.n
    kmax = np.max(np.abs(grid.k1)) * fraction
    K2 = grid.k_squared()
    mask = K2 <= kmax ** 2
    coeff = np.zeros((n, n, n), dtype=np.complex128)
    m = int(np.count_nonzero(mask))
    coeff[mask] = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    vals = _fft.ifftn(coeff)
    return ComplexField(grid, vals, check=False)


def stability_experiment(gs, perturbation_size, T, dt, kern: Kernel = None,
                         trials=3, seed=0, sample_every=100):
    """Evolve H1-normalized random perturbations of a ground state.

    Each trial perturbs U by a band-limited complex field of H1 norm
    `perturbation_size` (seeded reproducibly), evolves to time T, and
    records the orbit distance over time.

    Returns (max distance over all trials and times, list of series).
    """
    if perturbation_size < 0:
        raise ValueError("perturbation size must be nonnegative")
    kern = kern or gs.kernel
    grid = gs.profile.grid
    out = []
    worst = 0.0
    from .grid import h1_inner
    for trial in range(trials):
        if perturbation_size > 0:
            noise = band_limited_noise(grid, seed + 7919 * trial)
            nrm = np.sqrt(h1_inner(noise, noise).real)
            pert = noise.values * (perturbation_size / nrm)
        else:
            pert = 0.0
        u0 = ComplexField(grid, gs.profile.values + pert, check=False)
        _, series = evolve(u0, T, dt, kern, sample_every=sample_every,
                           reference=gs)
        out.append(series)
        worst = max(worst, series.max_orbit_distance())
    return worst, out
