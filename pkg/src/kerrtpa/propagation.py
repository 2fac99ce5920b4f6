"""
Reduced power/carrier propagation along a nonlinear waveguide.

The complex envelope is never integrated. Power obeys

    dP/dz = -alpha_tpa P^2 - sigma_fca N P - alpha P

and the mode-averaged carrier density is built up along the pulse at every
z-slice. The output phase follows from the two path integrals

    S(tau) = int_0^L P dz,   T(tau) = int_0^L N dz

as phi = gamma S - (sigma_fca mu / 2) T, so gamma and mu never touch the
power evolution and S/T tables can be reused while fitting them.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .core import (DEFAULT_WAVELENGTH, H_PLANCK, C_LIGHT, NonlinearCoeffs, PulseEnvelope,
                   TemporalGrid, peak_from_average, pulse_energy, sech2_pulse)
from .errors import ConvergenceError, InstabilityError, InvalidArgumentError, PreconditionError

log = logging.getLogger(__name__)

SCHEMES = ("exponential", "euler")


@dataclass(frozen=True)
class SolverConfig:
    """
    dz: initial z step (m). Each halving doubles the step count until the
    relative change of transmission drops below ``tol``.

    scheme "exponential" integrates the TPA + linear-loss part of each step
    exactly and extrapolates the carrier density to mid-step; "euler" is
    plain explicit first-order stepping of the full right-hand side.
    """

    dz: float = 10e-6
    max_step_halvings: int = 4
    tol: float = 1e-5
    scheme: str = "exponential"

    def __post_init__(self):
        if not self.dz > 0:
            raise InvalidArgumentError("dz must be positive")
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be positive")
        if self.max_step_halvings < 0:
            raise InvalidArgumentError("max_step_halvings must be >= 0")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"scheme must be one of {SCHEMES}")


@dataclass(frozen=True, eq=False)
class PropagationResult:
    input: PulseEnvelope
    output: PulseEnvelope
    carriers_out: np.ndarray
    s_table: np.ndarray
    t_table: np.ndarray
    transmission: float
    step_count: int
    convergence_estimate: float

    @property
    def inverse_transmission(self):
        return 1.0 / self.transmission


@dataclass(frozen=True)
class _Medium:
    length: float
    alpha: float
    alpha_tpa: float
    sigma: float
    gen: float          # beta_tpa * chi / (2 hbar omega), 1/(W^2 m^3 s)
    decay: float        # exp(-dt / tau_c)
    dt: float
    n0: float


def _medium(grid, wg, nl, wavelength, carrier_preload):
    photon = H_PLANCK * C_LIGHT / wavelength
    return _Medium(
        length=wg.length,
        alpha=wg.linear_loss,
        alpha_tpa=nl.alpha_tpa(wg),
        sigma=nl.sigma_fca,
        gen=nl.beta_tpa * wg.chi_gen / (2.0 * photon),
        decay=math.exp(-grid.dt / wg.carrier_lifetime),
        dt=grid.dt,
        n0=float(carrier_preload),
    )


def _carriers(p, m):
    """Carrier density along tau for each row of ``p``.

    Exact exponential decay between samples, trapezoidal source accumulation.
    """
    rows = p.shape[0]
    start = np.full((rows, 1), m.n0)
    if m.gen == 0:
        return np.broadcast_to(start, p.shape).copy()
    q = m.gen * p * p
    inc = 0.5 * (q[:, :-1] * m.decay + q[:, 1:]) * m.dt
    y, _ = lfilter([1.0], [1.0, -m.decay], inc, axis=-1, zi=m.decay * start)
    return np.concatenate([start, y], axis=-1)


def _exp_step(p, n, m, h):
    """Exact solution of dP/dz = -a P^2 - kappa P over h with kappa frozen.

    Returns the new power and the exact integral of P over the step.
    """
    kappa = m.alpha + m.sigma * n
    em = np.expm1(-kappa * h)
    if m.alpha > 0:
        lh = -em / kappa
    else:
        lh = np.divide(-em, kappa, out=np.full(np.shape(em), h), where=kappa > 0)
    y = m.alpha_tpa * p * lh
    p_new = p * (1.0 + em) / (1.0 + y)
    ratio = np.divide(np.log1p(y), y, out=np.ones_like(y), where=y > 0)
    return p_new, p * lh * ratio


def _march(p0, m, n_steps, scheme):
    """Integrate a batch of input powers (rows) over the full length."""
    h = m.length / n_steps
    p = p0.copy()
    s = np.zeros_like(p)
    t = np.zeros_like(p)
    n = _carriers(p, m)
    n_prev = None
    for _ in range(n_steps):
        if scheme == "euler":
            p_new = p - h * (m.alpha_tpa * p * p + m.sigma * n * p + m.alpha * p)
            if np.any(p_new < 0) or not np.all(np.isfinite(p_new)):
                raise InstabilityError(f"negative power at dz={h:.3g} m; reduce the step")
            s += 0.5 * (p + p_new) * h
        else:
            if n_prev is None:
                if m.sigma > 0:
                    p_star, _ = _exp_step(p, n, m, h)
                    n_mid = 0.5 * (n + _carriers(p_star, m))
                else:
                    n_mid = n
            else:
                n_mid = np.maximum(1.5 * n - 0.5 * n_prev, 0.0)
            p_new, ds = _exp_step(p, n_mid, m, h)
            s += ds
        n_new = _carriers(p_new, m)
        t += 0.5 * (n + n_new) * h
        p, n_prev, n = p_new, n, n_new
    if not np.all(np.isfinite(p)):
        raise InstabilityError("non-finite power encountered")
    return p, n, s, t


def _transmissions(p_in, p_out, dt, linear):
    out = np.empty(p_in.shape[0])
    for i in range(p_in.shape[0]):
        e_in = np.trapezoid(p_in[i], dx=dt)
        out[i] = linear if e_in == 0 else np.trapezoid(p_out[i], dx=dt) / e_in
    return out


def _check_length(wg, cfg):
    if cfg.dz > wg.length / 100.0 * (1 + 1e-12):
        raise PreconditionError(f"dz={cfg.dz} exceeds L/100={wg.length / 100}")


def _solve_rows(powers, phases, grid, wg, nl, cfg, wavelength, carrier_preload):
    """Step-halving driver. Each row stops at its own converged level."""
    m = _medium(grid, wg, nl, wavelength, carrier_preload)
    gamma = nl.gamma(wg, wavelength)
    base_steps = max(1, math.ceil(wg.length / cfg.dz - 1e-9))
    rows = powers.shape[0]
    linear = wg.linear_transmission
    done = [None] * rows

    active = np.arange(rows)
    steps = base_steps
    prev = _march(powers, m, steps, cfg.scheme)
    prev_tr = _transmissions(powers, prev[0], grid.dt, linear)
    if cfg.max_step_halvings == 0:
        for i in range(rows):
            done[i] = (tuple(x[i] for x in prev), prev_tr[i], steps, math.nan)
    else:
        estimate = None
        for _ in range(cfg.max_step_halvings):
            steps *= 2
            cur = _march(powers[active], m, steps, cfg.scheme)
            cur_tr = _transmissions(powers[active], cur[0], grid.dt, linear)
            estimate = np.abs(cur_tr - prev_tr) / cur_tr
            keep = []
            for j, i in enumerate(active):
                if estimate[j] < cfg.tol:
                    done[i] = (tuple(x[j] for x in cur), cur_tr[j], steps, float(estimate[j]))
                else:
                    keep.append(j)
            if not keep:
                break
            active = active[keep]
            prev = tuple(x[keep] for x in cur)
            prev_tr = cur_tr[keep]
        else:
            worst = float(np.max(estimate[keep]))
            raise ConvergenceError(
                f"transmission changed by {worst:.3g} (> tol {cfg.tol:g}) after "
                f"{cfg.max_step_halvings} halvings (dz={wg.length / steps:.3g} m)", worst)

    results = []
    for i in range(rows):
        (p, n, s, t), tr, n_steps, est = done[i]
        phase = phases[i] + gamma * s - 0.5 * nl.sigma_fca * nl.mu * t
        results.append(PropagationResult(
            input=PulseEnvelope(grid, powers[i], phases[i]),
            output=PulseEnvelope(grid, p, phase),
            carriers_out=n, s_table=s, t_table=t,
            transmission=float(tr), step_count=n_steps, convergence_estimate=est))
    return results


def _chunks(n, workers):
    workers = max(1, min(int(workers), n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def propagate_many(pulses, wg, nl, cfg=SolverConfig(), *, wavelength=DEFAULT_WAVELENGTH,
                   carrier_preload=0.0, workers=1):
    """Propagate several pulses sharing one grid; results are in input order.

    Rows are independent, so the output does not depend on ``workers``.
    """
    pulses = list(pulses)
    if not pulses:
        return []
    grid = pulses[0].grid
    if any(p.grid != grid for p in pulses):
        raise InvalidArgumentError("all pulses must share one grid")
    _check_length(wg, cfg)
    powers = np.array([p.power for p in pulses])
    phases = np.array([p.phase for p in pulses])

    def run(idx):
        return _solve_rows(powers[idx], phases[idx], grid, wg, nl, cfg, wavelength, carrier_preload)

    chunks = _chunks(len(pulses), workers)
    if len(chunks) == 1:
        return run(chunks[0])
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(run, chunks))
    return [r for part in parts for r in part]


def propagate(pulse, wg, nl, cfg=SolverConfig(), *, wavelength=DEFAULT_WAVELENGTH,
              carrier_preload=0.0):
    """Propagate one pulse through the waveguide with step-halving error control.

    Raises ConvergenceError if the transmission has not settled to ``cfg.tol``
    after ``cfg.max_step_halvings`` halvings.
    """
    return propagate_many([pulse], wg, nl, cfg, wavelength=wavelength,
                          carrier_preload=carrier_preload)[0]


def propagate_fixed(pulse, wg, nl, n_steps, *, scheme="exponential",
                    wavelength=DEFAULT_WAVELENGTH, carrier_preload=0.0):
    """Single pass with a fixed number of z steps and no error control."""
    m = _medium(pulse.grid, wg, nl, wavelength, carrier_preload)
    p, n, s, t = (x[0] for x in _march(pulse.power[None, :], m, int(n_steps), scheme))
    phase = pulse.phase + nl.gamma(wg, wavelength) * s - 0.5 * nl.sigma_fca * nl.mu * t
    tr = _transmissions(pulse.power[None, :], p[None, :], pulse.grid.dt, wg.linear_transmission)[0]
    return PropagationResult(pulse, PulseEnvelope(pulse.grid, p, phase), n, s, t,
                             float(tr), int(n_steps), math.nan)


def _sech2_or_zero(grid, peak, fwhm):
    if peak == 0:
        return PulseEnvelope(grid, np.zeros(grid.n_samples))
    return sech2_pulse(grid, peak, fwhm)


def transmission_curve(avg_powers, laser, wg, nl, cfg=SolverConfig(), *, grid=None, workers=1,
                       return_results=False):
    """
    Inverse waveguide transmission 1/T = P_in/P_out for a list of average powers.

    Returns a list of (avg_power, 1/T) pairs, plus the PropagationResults when
    ``return_results`` is set. Coupler losses are not included.
    """
    grid = grid or TemporalGrid.centered()
    avg = [float(p) for p in avg_powers]
    if any(p < 0 for p in avg):
        raise InvalidArgumentError("average powers must be non-negative")
    pulses = [_sech2_or_zero(grid, peak_from_average(p, laser), laser.fwhm) for p in avg]
    results = propagate_many(pulses, wg, nl, cfg, wavelength=laser.wavelength, workers=workers)
    curve = [(p, r.inverse_transmission) for p, r in zip(avg, results)]
    return (curve, results) if return_results else curve


@dataclass(frozen=True, eq=False)
class STTable:
    """Path integrals S(tau) [W m] and T(tau) [1/m^2] for one (peak power, alpha_tpa)."""

    grid: TemporalGrid
    s: np.ndarray
    t: np.ndarray
    peak_power: float = math.nan
    alpha_tpa: float = math.nan
    sigma_fca: float = math.nan
    transmission: float = math.nan
    convergence_estimate: float = math.nan

    def phase(self, gamma, mu):
        return phase_from_ansatz(gamma, mu, self.sigma_fca, self.s, self.t)


def st_tables(peak_powers, alpha_tpa, sigma_fca, wg, laser, cfg=SolverConfig(), *, grid=None,
              workers=1):
    """
    Tabulate S and T over the Cartesian grid of peak powers and alpha_tpa values.

    Returns a dict keyed by (peak_power, alpha_tpa). Runs with gamma = mu = 0,
    which leaves power and carrier evolution unchanged.
    """
    peaks = [float(p) for p in np.atleast_1d(peak_powers)]
    alphas = [float(a) for a in np.atleast_1d(alpha_tpa)]
    if not peaks or not alphas:
        raise InvalidArgumentError("grids must be non-empty")
    if any(b < a for a, b in zip(peaks, peaks[1:])) or any(b < a for a, b in zip(alphas, alphas[1:])):
        raise InvalidArgumentError("grids must be ascending")
    grid = grid or TemporalGrid.centered()
    pulses = [_sech2_or_zero(grid, p, laser.fwhm) for p in peaks]
    tables = {}
    for a in alphas:
        nl = NonlinearCoeffs(n2=0.0, beta_tpa=a * wg.a_eff, sigma_fca=sigma_fca, mu=0.0)
        results = propagate_many(pulses, wg, nl, cfg, wavelength=laser.wavelength, workers=workers)
        for peak, r in zip(peaks, results):
            tables[(peak, a)] = STTable(grid, r.s_table, r.t_table, peak, a, sigma_fca,
                                        r.transmission, r.convergence_estimate)
    return tables


def phase_from_ansatz(gamma, mu, sigma_fca, s, t):
    """phi(tau) = gamma S(tau) - (sigma_fca mu / 2) T(tau)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.shape != t.shape:
        raise InvalidArgumentError(f"S and T grids differ: {s.shape} vs {t.shape}")
    return gamma * s - 0.5 * sigma_fca * mu * t


def output_energy_bound(result, wg):
    """Largest output energy compatible with linear loss alone."""
    return pulse_energy(result.input) * wg.linear_transmission
