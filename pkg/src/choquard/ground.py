"""Ground states of the limiting problem -lap(U) + a U = (W*|U|^2) U.

The constrained route minimizes E(u) = |grad u|^2/2 - D(u)/4 on the sphere
|u|_{L2}^2 = rho by a normalized semi-implicit descent: each step solves

    (1 + dt (|k|^2 + a_k)) u_hat_new = u_hat + dt F[(phi + a_k) u] - ...

in its dt -> infinity limit this is inverse iteration with the Rayleigh
shift a_k = (D(u) - |grad u|^2)/rho, which is the default step; on any
energy increase the step falls back to finite dt and backtracks.  The free
route solves at a reference mass and maps along the dilation group
u -> lam^2 u(lam x).
"""

import math

import numpy as np

from . import _fft
from .energy import energy_report, limiting_residual
from .grid import (ComplexField, RealField, boundary_shell_mass_fraction,
                   resample_scale, shift_field)
from .kernels import Kernel, convolve_values


class SolverError(RuntimeError):
    """Normalized descent failed (collapse, dt exhaustion, or max_iter)."""


class SolverParams:
    """Knobs for the constrained solver.

    dt=None selects the inverse-iteration limit of the semi-implicit step
    (with automatic fallback to finite steps); a finite dt runs the plain
    projected flow at that step size.
    """

    def __init__(self, dt=None, max_iter=600, tol=1e-10,
                 seed_profile=("gaussian", 1.0)):
        if dt is not None and not dt > 0:
            raise ValueError("dt must be positive")
        if not tol > 0:
            raise ValueError("tol must be positive")
        self.dt = dt
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        self.seed_profile = seed_profile


class GroundState:
    """Solved limiting-problem profile with its energy ledger.

    Attributes
    ----------
    profile : RealField
        Non-negative profile, maximum rolled to the grid origin.
    multiplier : float
        Coefficient a extracted from the Lagrange relation
        a = (D(U) - |grad U|^2)/rho.
    mass, free_energy, constrained_energy, least_energy : float
        rho = |U|^2, Gamma = J(U), Lambda = E(U), and E_a = (|grad U|^2
        + a |U|^2)/4.
    decay : tuple or None
        Fitted (C, sigma) envelope when the grid supports the fit.
    kernel : Kernel
    converged_field : RealField or ComplexField
        Raw converged iterate before phase alignment and centering.
    iterations : int
    residual : float
        L2 norm of the limiting-equation residual relative to |U|_H1.
    """

    def __init__(self, profile, multiplier, kernel, converged_field,
                 iterations):
        self.profile = profile
        self.multiplier = multiplier
        self.kernel = kernel
        self.converged_field = converged_field
        self.iterations = iterations
        rep = energy_report(profile, multiplier, kernel)
        self.mass = rep.mass
        self.free_energy = rep.J
        self.constrained_energy = rep.E
        self.least_energy = 0.25 * (rep.kinetic + multiplier * rep.mass)
        self.energy = rep
        _, self.residual = limiting_residual(profile, multiplier, kernel)
        self.decay = None
        try:
            fit = decay_fit(self)
            self.decay = (fit.amplitude, fit.rate)
        except DecayFitError:
            pass

    def report(self):
        rep = self.energy
        out = {
            "a": self.multiplier,
            "rho": self.mass,
            "gamma": self.free_energy,
            "lambda": self.constrained_energy,
            "E_a": self.least_energy,
            "kinetic": rep.kinetic,
            "dd": rep.dd,
            "residual_rel": self.residual,
            "pohozaev_rel": rep.pohozaev_residual / rep.dd if rep.dd else 0.0,
            "iterations": self.iterations,
        }
        v = virial_report(self)
        out.update({
            "virial_grad_dev": v.grad_dev,
            "virial_mass_dev": v.mass_dev,
            "dd_balance_dev": v.dd_balance_dev,
            "psi_dev": v.energy_map_dev,
        })
        if self.decay is not None:
            out["decay_C"] = self.decay[0]
            out["decay_sigma"] = self.decay[1]
        return out


def _seed_values(grid, seed_profile, dtype):
    if isinstance(seed_profile, (RealField, ComplexField)):
        return seed_profile.values.astype(dtype)
    if isinstance(seed_profile, tuple) and seed_profile[0] == "gaussian":
        width = float(seed_profile[1])
        X, Y, Z = grid.coords()
        return np.exp(-(X ** 2 + Y ** 2 + Z ** 2) / (2.0 * width ** 2)).astype(dtype)
    if isinstance(seed_profile, str):
        from .fileio import read_field
        return read_field(seed_profile).values.astype(dtype)
    raise ValueError(f"unrecognized seed profile {seed_profile!r}")


def solve_constrained(rho, kern: Kernel, params: SolverParams = None) -> GroundState:
    """Minimize E on the L2 sphere of mass rho; returns the ground state.

    Stops when the relative energy decrease between accepted steps falls
    below params.tol.  Raises SolverError on non-convergence, persistent
    energy increase, or collapse to the zero field.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    params = params or SolverParams()
    grid = kern.grid
    n, w = grid.n, grid.cell_volume
    K2 = grid.k_squared()

    u = _seed_values(grid, params.seed_profile, np.complex128)
    if np.max(np.abs(u.imag)) == 0.0:
        u = u.real.copy()
    is_real = not np.iscomplexobj(u)
    fft = _fft.rfftn if is_real else _fft.fftn
    K2s = K2[..., :n // 2 + 1] if is_real else K2
    if is_real:
        wgt = np.ones(n // 2 + 1)
        wgt[1:(n + 1) // 2] = 2.0

    def ifft(a):
        return _fft.irfftn(a, s=(n,) * 3) if is_real else _fft.ifftn(a)

    def ledger(vals):
        dens = np.abs(vals) ** 2
        phi = convolve_values(dens, kern)
        vh = fft(vals)
        spec = K2s * np.abs(vh) ** 2
        kin = float(np.sum(spec * wgt) if is_real else np.sum(spec)) * w / n ** 3
        dd = float(np.sum(phi * dens) * w)
        return phi, kin, dd, 0.5 * kin - 0.25 * dd

    m0 = float(np.sum(np.abs(u) ** 2) * w)
    if m0 <= 0:
        raise SolverError("seed profile has zero mass")
    u = u * math.sqrt(rho / m0)
    phi, kin, dd, E = ledger(u)

    dt = params.dt if params.dt is not None else math.inf
    dt_floor = 1e-8
    iterations = 0
    converged = False
    for it in range(params.max_iter):
        a_k = (dd - kin) / rho
        shift = max(a_k, 0.05 * kin / rho + 1e-12)
        while True:
            if math.isinf(dt):
                trial_h = fft(phi * u) / (K2s + shift)
            else:
                trial_h = (fft(u) + dt * fft(phi * u)) / (1.0 + dt * K2s)
            trial = ifft(trial_h)
            mt = float(np.sum(np.abs(trial) ** 2) * w)
            if not mt > 1e-300:
                raise SolverError("flow collapsed to the zero field")
            trial = trial * math.sqrt(rho / mt)
            phi2, kin2, dd2, E2 = ledger(trial)
            if E2 <= E + 1e-14 * abs(E):
                break
            # energy increased: shorten the step and retry from u
            dt = 1.0 if math.isinf(dt) else 0.5 * dt
            if dt < dt_floor:
                raise SolverError("energy increase persists at the minimum step size")
        moved = abs(E2 - E) >= params.tol * abs(E if E != 0 else 1.0)
        u, phi, kin, dd, E = trial, phi2, kin2, dd2, E2
        if not moved:
            converged = True
            if it == 0:
                iterations = 0  # fixed-point restart: already at tolerance
            break
        iterations = it + 1
    if not converged:
        raise SolverError(f"no convergence in {params.max_iter} iterations "
                          f"(last relative decrease above tol={params.tol})")

    if is_real:
        raw = RealField(grid, u, check=False)
        aligned = np.abs(u)
    else:
        raw = ComplexField(grid, u, check=False)
        theta = np.angle(np.sum(u * np.abs(u)))
        aligned = np.abs((np.exp(-1j * theta) * u).real)
    # center the maximum at the grid origin (first argmax wins ties)
    peak = np.unravel_index(np.argmax(aligned), aligned.shape)
    roll = tuple(grid.origin_index()[i] - peak[i] for i in range(3))
    profile = RealField(grid, np.roll(aligned, roll, axis=(0, 1, 2)), check=False)

    dens = profile.values ** 2
    phi = convolve_values(dens, kern)
    uh = _fft.rfftn(profile.values)
    wgt = np.ones(n // 2 + 1)
    wgt[1:(n + 1) // 2] = 2.0
    kin = float(np.sum(K2[..., :n // 2 + 1] * np.abs(uh) ** 2 * wgt) * w / n ** 3)
    dd = float(np.sum(phi * dens) * w)
    a = (dd - kin) / rho
    return GroundState(profile, a, kern, raw, iterations)


def rescale(u, lam):
    """Dilation u -> lam^2 u(lam x) mapping multiplier gamma to gamma*lam^2.

    Mass transforms as lam * |u|^2.  Raises when the rescaled field leaks
    into the boundary shell (tail mass beyond 1e-6 of the total).
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    g = u.grid
    if lam > 1.0:
        frac_in = boundary_shell_mass_fraction(u.values, g, width=1)
        if frac_in > 1e-6:
            raise ValueError(f"input tail mass fraction {frac_in:.2e} wraps under "
                             "compression; enlarge the domain")
    out = resample_scale(u, lam)
    out.values *= lam ** 2
    frac = boundary_shell_mass_fraction(out.values, g, width=1)
    if frac > 1e-6:
        raise ValueError(f"rescaled support exceeds the grid "
                         f"(boundary tail mass fraction {frac:.2e})")
    return out


def solve_free(a, kern: Kernel, params: SolverParams = None,
               reference_mass=3.0) -> GroundState:
    """Ground state of the free equation at multiplier a.

    Solves the constrained problem at a reference mass, applies the
    dilation with lam = sqrt(a/gamma), and re-polishes at the mapped mass so
    the extracted multiplier matches a to discretization accuracy.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    params = params or SolverParams()
    gs = solve_constrained(reference_mass, kern, params)
    state = gs.profile
    mass = gs.mass
    gamma = gs.multiplier
    for _ in range(3):
        lam = math.sqrt(a / gamma)
        if abs(lam - 1.0) > 1e-12:
            state = rescale(state, lam)
            mass = lam * mass
        polish = SolverParams(dt=params.dt, max_iter=params.max_iter,
                              tol=params.tol, seed_profile=state)
        gs = solve_constrained(mass, kern, polish)
        state, gamma, mass = gs.profile, gs.multiplier, gs.mass
        if abs(gamma / a - 1.0) < 1e-8:
            break
    return gs


def energy_map(m, a, rho):
    """Free critical level m -> constrained level c = -(1/2)(3/(a rho))^-3 m^-2."""
    if not m > 0:
        raise ValueError("free level m must be positive")
    return -0.5 * (3.0 / (a * rho)) ** (-3) * m ** (-2)


def energy_map_inverse(c, a, rho):
    """Constrained level c (< 0) -> free critical level m."""
    if not c < 0:
        raise ValueError("constrained level c must be negative")
    return math.sqrt(-0.5 * (3.0 / (a * rho)) ** (-3) / c)


class VirialReport:
    """Relative deviations of the solution identities for one ground state.

    grad_dev:   |grad U|^2/Gamma - 1
    mass_dev:   a |U|^2/(3 Gamma) - 1
    pohozaev_rel: Pohozaev residual / D(U)
    dd_balance_dev: (|grad U|^2 + a |U|^2)/D - 1
    least_energy_dev: (kinetic + a mass)/4 / Gamma - 1
    energy_map_dev: Lambda/(-Gamma/2) - 1  at rho = 3 Gamma / a
    """

    def __init__(self, gs):
        rep = gs.energy
        G = gs.free_energy
        if rep.dd <= 0 or G == 0:
            raise ValueError("degenerate input: zero field or zero energy")
        self.grad_dev = rep.kinetic / G - 1.0
        self.mass_dev = gs.multiplier * rep.mass / (3.0 * G) - 1.0
        self.pohozaev_rel = rep.pohozaev_residual / rep.dd
        self.dd_balance_dev = (rep.kinetic + gs.multiplier * rep.mass) / rep.dd - 1.0
        self.least_energy_dev = gs.least_energy / G - 1.0
        self.energy_map_dev = rep.E / (-0.5 * G) - 1.0
        self.rho_dev = rep.mass / (3.0 * G / gs.multiplier) - 1.0

    def max_abs(self):
        return max(abs(self.grad_dev), abs(self.mass_dev),
                   abs(self.pohozaev_rel), abs(self.dd_balance_dev),
                   abs(self.least_energy_dev), abs(self.energy_map_dev))

    def __repr__(self):
        return (f"VirialReport(grad={self.grad_dev:+.2e}, mass={self.mass_dev:+.2e}, "
                f"poho={self.pohozaev_rel:+.2e}, dd={self.dd_balance_dev:+.2e}, "
                f"Ea={self.least_energy_dev:+.2e}, map={self.energy_map_dev:+.2e})")


def virial_report(gs: GroundState) -> VirialReport:
    return VirialReport(gs)


def scale_path_energy(gs: GroundState, t):
    """J(U(./t)) measured by quadrature vs the closed form
    Gamma*(t/2 + 3 t^3/2 - t^5).

    Returns (measured, closed_form); the sweep peaks at t = 1.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if t == 1.0:
        dil = gs.profile
    else:
        dil = resample_scale(gs.profile, 1.0 / t)
        frac = boundary_shell_mass_fraction(dil.values, gs.profile.grid, width=1)
        if frac > 1e-6:
            raise ValueError(f"dilated profile clipped (boundary mass {frac:.2e})")
    rep = energy_report(dil, gs.multiplier, gs.kernel)
    G = gs.free_energy
    closed = G * (0.5 * t + 1.5 * t ** 3 - t ** 5)
    return rep.J, closed


class DecayFitError(ValueError):
    """Tail fit not possible: flat field, thin range, or non-exponential."""


class DecayFit:
    def __init__(self, amplitude, rate, shell_points, max_log_dev, curvature):
        self.amplitude = amplitude      # C
        self.rate = rate                # sigma
        self.shell_points = shell_points
        self.max_log_dev = max_log_dev
        self.curvature = curvature

    def __repr__(self):
        return (f"DecayFit(C={self.amplitude:.4g}, sigma={self.rate:.4g}, "
                f"points={self.shell_points})")


def _fit_exponential_shell(values, dist, lo_frac=1e-8, hi_frac=1e-2,
                           envelope_factor=1.5, curvature_tol=0.15):
    vmax = float(np.max(values))
    if vmax <= 0:
        raise DecayFitError("field is identically zero")
    pos = values[values > 0]
    if float(np.min(pos)) > 1e-6 * vmax:
        raise DecayFitError("field spans fewer than 6 decades on this grid")
    sel = (values >= lo_frac * vmax) & (values <= hi_frac * vmax)
    if np.count_nonzero(sel) < 64:
        raise DecayFitError("too few points in the fit shell")
    r = dist[sel]
    y = np.log(values[sel])
    A = np.vstack([np.ones_like(r), r]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    logC, slope = coef
    sigma = -slope
    if sigma <= 0:
        raise DecayFitError("fitted rate is not positive (growing tail?)")
    # curvature statistic over radial bins: reject super/sub-exponential tails
    nbins = 12
    edges = np.linspace(r.min(), r.max(), nbins + 1)
    centers, means = [], []
    for i in range(nbins):
        m = (r >= edges[i]) & (r < edges[i + 1] + (1e-12 if i == nbins - 1 else 0))
        if np.count_nonzero(m) >= 4:
            centers.append(0.5 * (edges[i] + edges[i + 1]))
            means.append(float(np.mean(y[m])))
    centers = np.array(centers)
    means = np.array(means)
    if centers.size < 5:
        raise DecayFitError("fit shell too thin for the curvature statistic")
    q = np.polyfit(centers, means, 2)
    span = centers[-1] - centers[0]
    curvature = abs(q[0]) * span ** 2 / max(abs(q[1]) * span, 1e-300)
    if curvature > curvature_tol:
        raise DecayFitError(f"log-tail curvature {curvature:.3f} exceeds "
                            f"{curvature_tol}: non-exponential tail")
    dev = float(np.max(y - (logC + slope * r)))
    if dev > math.log(envelope_factor):
        raise DecayFitError(f"envelope exceeded by factor {math.exp(dev):.2f} "
                            "on the fit shell")
    return DecayFit(math.exp(logC), sigma, int(np.count_nonzero(sel)), dev,
                    curvature)


def decay_fit(gs_or_field) -> DecayFit:
    """Least-squares exponential tail fit C*exp(-sigma |x|) of a profile.

    Fits log U against |x| on the shell U in [1e-8, 1e-2]*max; verifies the
    envelope bound up to factor 1.5 there and rejects non-exponential tails
    by a log-curvature statistic.
    """
    field = gs_or_field.profile if isinstance(gs_or_field, GroundState) else gs_or_field
    g = field.grid
    X, Y, Z = g.coords()
    r = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
    vals = np.abs(field.values)
    return _fit_exponential_shell(vals, np.broadcast_to(r, vals.shape))
