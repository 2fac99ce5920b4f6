"""
Temporal phase retrieval from a power spectrum and a temporal envelope.

Spectral arrays are kept in FFT order on the conjugate axis of a
TemporalGrid: bin k sits at angular-frequency offset ``grid.omega[k]`` from
the carrier. With the field written as a(t) exp(-i w0 t), the spectrum at
w0 + dw is proportional to ``ifft(a)[k]``, so ``ifft``/``fft`` (orthonormal)
are the time->frequency and frequency->time maps used throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .core import C_LIGHT, PulseEnvelope, TemporalGrid
from .errors import AliasingError, DataError, InvalidArgumentError

INIT_CHOICES = ("zero", "quadratic", "spm")
SUPPORT_LEVEL = 1e-6
MASK_LEVEL = 0.05


@dataclass(frozen=True, eq=False)
class SpectrumRecord:
    """OSA trace: wavelengths (m, ascending), linear PSD per unit wavelength, resolution bandwidth (m)."""

    wavelengths: np.ndarray
    psd: np.ndarray
    resolution_bw: float = 0.0

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=float)
        psd = np.asarray(self.psd, dtype=float)
        if wl.ndim != 1 or wl.shape != psd.shape:
            raise InvalidArgumentError("wavelength and psd lengths differ")
        if wl.size < 2:
            raise InvalidArgumentError("spectrum needs at least two samples")
        if np.any(np.diff(wl) <= 0):
            raise InvalidArgumentError("wavelengths must be strictly increasing")
        if np.any(wl <= 0) or not np.all(np.isfinite(psd)):
            raise InvalidArgumentError("wavelengths must be positive and psd finite")
        if np.any(psd < 0):
            raise InvalidArgumentError("psd must be non-negative")
        if self.resolution_bw < 0:
            raise InvalidArgumentError("resolution bandwidth must be non-negative")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "psd", psd)


@dataclass(frozen=True)
class RetrievalConfig:
    """
    max_iters, err_tol: stopping rule on the normalised spectral-magnitude error.
    init: "spm" seeds the phase with c * I(t)/I_max, c >= 0 chosen to best match
    the spectrum; "quadratic" uses ``curvature`` (rad per sample^2) around the
    peak; "zero" starts flat.
    """

    max_iters: int = 2000
    err_tol: float = 1e-6
    init: str = "spm"
    curvature: float = 0.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be >= 1")
        if not self.err_tol > 0:
            raise InvalidArgumentError("err_tol must be positive")
        if self.init not in INIT_CHOICES:
            raise InvalidArgumentError(f"init must be one of {INIT_CHOICES}")


@dataclass(frozen=True, eq=False)
class RetrievedPhase:
    grid: TemporalGrid
    phase: np.ndarray
    final_error: float
    iterations_used: int
    converged: bool
    error_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    magnitude: np.ndarray = None
    seed: tuple = (0.0, 0.0)

    def __post_init__(self):
        ph = np.asarray(self.phase, dtype=float)
        if ph.shape != (self.grid.n_samples,) or not np.all(np.isfinite(ph)):
            raise InvalidArgumentError("phase must be finite and match the grid")
        if not self.final_error >= 0:
            raise InvalidArgumentError("final_error must be non-negative")
        object.__setattr__(self, "phase", ph)
        if self.magnitude is not None:
            object.__setattr__(self, "magnitude", np.asarray(self.magnitude, dtype=float))

    def with_phase(self, phase):
        return replace(self, phase=phase)

    @property
    def peak_index(self):
        if self.magnitude is None:
            return self.grid.n_samples // 2
        return int(np.argmax(self.magnitude))


def _unit(x):
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x)
    if norm == 0 or not np.isfinite(norm):
        raise DataError("magnitude has zero or non-finite energy")
    return x / norm


def omega_from_wavelength(wavelengths, center_wavelength):
    return 2.0 * np.pi * C_LIGHT * (1.0 / np.asarray(wavelengths) - 1.0 / center_wavelength)


def resample_spectrum(s, grid, center_wavelength):
    """
    Spectral magnitude on the grid's conjugate axis, FFT order, unit energy.

    The PSD is converted from per-wavelength to per-frequency density
    (factor lambda^2 / 2 pi c) and linearly interpolated; bins outside the
    recorded range are zero. The OSA resolution bandwidth is not deconvolved.
    """
    omega = omega_from_wavelength(s.wavelengths, center_wavelength)[::-1]
    dens = (s.psd * s.wavelengths**2 / (2.0 * np.pi * C_LIGHT))[::-1]
    nyq = np.pi / grid.dt
    support = omega[dens > SUPPORT_LEVEL * dens.max()] if dens.max() > 0 else omega[:0]
    if support.size == 0:
        raise DataError("spectrum is identically zero")
    if support.min() < -nyq or support.max() >= nyq:
        raise AliasingError(
            f"spectral support [{support.min():.3g}, {support.max():.3g}] rad/s exceeds "
            f"the Nyquist band +-{nyq:.3g} rad/s")
    sampled = np.interp(grid.omega, omega, dens, left=0.0, right=0.0)
    return _unit(np.sqrt(sampled))


def spectrum_from_field(field_t):
    """Complex spectrum (FFT order, orthonormal) of a sampled time-domain field."""
    return np.fft.ifft(np.asarray(field_t), norm="ortho")


def field_from_spectrum(spec):
    return np.fft.fft(np.asarray(spec), norm="ortho")


def spectrum_record_from_pulse(pulse, center_wavelength, resolution_bw=0.0):
    """Synthetic OSA trace of a pulse, sampled at the grid's own frequency bins."""
    dens = np.abs(spectrum_from_field(pulse.field)) ** 2
    omega = pulse.grid.omega + 2.0 * np.pi * C_LIGHT / center_wavelength
    if np.any(omega <= 0):
        raise InvalidArgumentError("grid bandwidth exceeds the optical carrier")
    wl = 2.0 * np.pi * C_LIGHT / omega
    psd = dens * 2.0 * np.pi * C_LIGHT / wl**2
    order = np.argsort(wl)
    return SpectrumRecord(wl[order], psd[order], resolution_bw)


def _spectral_error(time_mag, phase, spec_mag):
    return float(np.linalg.norm(np.abs(np.fft.ifft(time_mag * np.exp(1j * phase), norm="ortho")) - spec_mag))


def _spm_scale_estimate(spec_mag, time_mag):
    # Excess spectral variance over the flat-phase spectrum, divided by the
    # variance of the normalised intensity slope.
    n = time_mag.size
    w = 2.0 * np.pi * np.fft.fftfreq(n)
    flat = np.abs(np.fft.ifft(time_mag, norm="ortho")) ** 2

    def var(p):
        m = np.sum(w * p)
        return np.sum((w - m) ** 2 * p)

    excess = var(spec_mag**2) - var(flat)
    inten = time_mag**2
    slope = np.gradient(inten / inten.max())
    wt = inten / inten.sum()
    sv = np.sum(wt * slope**2) - np.sum(wt * slope) ** 2
    if excess <= 0 or sv <= 0:
        return 0.0
    return math.sqrt(excess / sv)


def _seed_basis(time_mag):
    inten = time_mag**2
    kerr = inten / inten.max()
    carriers = np.cumsum(inten**2)
    return kerr, carriers / carriers[-1]


def spm_seed(spec_mag, time_mag, n_scan=25):
    """
    Seed coefficients (a, b), both >= 0, for the phase a*I/I_max - b*C where
    C is the normalised running integral of I^2 (carrier-like, trailing).

    A coarse grid scan picks the basin, Nelder-Mead polishes it. Restricting
    the signs selects the physical member of the time-reversal twin pair.
    """
    kerr, carriers = _seed_basis(time_mag)
    a_hi = max(3.0 * _spm_scale_estimate(spec_mag, time_mag), 1.0)

    def cost(x):
        return _spectral_error(time_mag, x[0] * kerr - x[1] * carriers, spec_mag)

    best = (math.inf, 0.0, 0.0)
    for a in np.linspace(0.0, a_hi, n_scan):
        for b in np.linspace(0.0, 0.5 * a_hi, (n_scan + 1) // 2):
            v = cost((a, b))
            if v < best[0]:
                best = (v, a, b)
    res = minimize(cost, best[1:], method="Nelder-Mead",
                   bounds=[(0.0, None), (0.0, None)],
                   options={"xatol": 1e-6 * a_hi, "fatol": 1e-14, "maxiter": 2000})
    x = res.x if res.fun <= best[0] else best[1:]
    return float(x[0]), float(x[1])


def _initial_phase(spec_mag, time_mag, cfg):
    n = time_mag.size
    if cfg.init == "zero":
        return np.zeros(n), (0.0, 0.0)
    if cfg.init == "quadratic":
        j = np.arange(n) - int(np.argmax(time_mag))
        return cfg.curvature * j.astype(float) ** 2, (0.0, 0.0)
    a, b = spm_seed(spec_mag, time_mag)
    kerr, carriers = _seed_basis(time_mag)
    return a * kerr - b * carriers, (a, b)


def unwrap_from_peak(phase, peak):
    """Unwrap outward from ``peak`` and shift so phase[peak] == 0 exactly."""
    right = np.unwrap(phase[peak:])
    left = np.unwrap(phase[: peak + 1][::-1])[::-1]
    out = np.concatenate([left[:-1], right])
    return out - out[peak]


def gerchberg_saxton(spec_mag, time_mag, cfg=None, *, grid=None):
    """
    Error-reduction phase retrieval.

    ``spec_mag`` is in FFT order on the conjugate axis of ``time_mag``'s grid.
    Both are rescaled to unit energy. The error after each iteration is
    || |F{g}| - spec_mag || / ||spec_mag||, which cannot increase.
    Returns the phase unwrapped from, and zeroed at, the temporal peak.
    """
    cfg = cfg or RetrievalConfig()
    spec_mag = np.asarray(spec_mag, dtype=float)
    time_mag = np.asarray(time_mag, dtype=float)
    n = time_mag.size
    if spec_mag.shape != time_mag.shape or time_mag.ndim != 1:
        raise InvalidArgumentError("spectral and temporal magnitudes must have equal length")
    if n < 2 or n & (n - 1):
        raise InvalidArgumentError("length must be a power of two")
    if np.any(spec_mag < 0) or np.any(time_mag < 0):
        raise InvalidArgumentError("magnitudes must be non-negative")
    grid = grid or TemporalGrid(n, 1.0, -0.5 * n)
    if grid.n_samples != n:
        raise InvalidArgumentError("grid length does not match the magnitudes")
    spec_mag = _unit(spec_mag)
    time_mag = _unit(time_mag)

    phase, seed = _initial_phase(spec_mag, time_mag, cfg)
    g = time_mag * np.exp(1j * phase)
    history = []
    converged = False
    for _ in range(cfg.max_iters):
        big_g = np.fft.ifft(g, norm="ortho")
        mag = np.abs(big_g)
        err = float(np.linalg.norm(mag - spec_mag))
        history.append(err)
        if err < cfg.err_tol:
            converged = True
            break
        unit = np.divide(big_g, mag, out=np.ones_like(big_g), where=mag > 0)
        back = np.fft.fft(spec_mag * unit, norm="ortho")
        g = time_mag * np.exp(1j * np.angle(back))

    peak = int(np.argmax(time_mag))
    phase = unwrap_from_peak(np.angle(g), peak)
    history = np.array(history)
    return RetrievedPhase(grid, phase, float(history[-1]), len(history), converged,
                          history, time_mag, seed)


def _same_grid(a, b):
    if a != b:
        raise InvalidArgumentError("phase records live on different grids")


def baseline_correct(phases, reference):
    """Subtract the reference phase from every entry."""
    out = []
    for p in phases:
        _same_grid(p.grid, reference.grid)
        out.append(p.with_phase(p.phase - reference.phase))
    return out


def subtract_fiber_background(phase, fiber_gamma_l, launched_pulse):
    """Remove lossless-fiber SPM, fiber_gamma_l * P_launched(tau), from a retrieved phase."""
    _same_grid(phase.grid, launched_pulse.grid)
    return phase.with_phase(phase.phase - fiber_gamma_l * launched_pulse.power)


def estimate_fiber_gamma_l(phases, launched_pulses, level=MASK_LEVEL):
    """
    Fiber gamma*L (1/W) from retrievals of pulses that bypass the chip.

    Each retrieved phase is zero at the peak, so the model is
    gamma_L * (P(tau) - P(tau_peak)) over the region above ``level`` of peak.
    """
    num = den = 0.0
    for ph, pulse in zip(phases, launched_pulses, strict=True):
        _same_grid(ph.grid, pulse.grid)
        i0 = ph.peak_index
        x = pulse.power - pulse.power[i0]
        mask = pulse.power > level * pulse.peak_power
        num += float(np.dot(ph.phase[mask], x[mask]))
        den += float(np.dot(x[mask], x[mask]))
    if den == 0:
        raise DataError("launched pulses carry no power variation")
    return num / den


def power_mask(power, level=MASK_LEVEL):
    power = np.asarray(power)
    return power > level * power.max()


def phase_rms_error(retrieved, truth, power, level=MASK_LEVEL, twin=True):
    """
    RMS difference over the region where ``power`` exceeds ``level`` of its
    peak, with both phases zeroed at the power peak.

    With ``twin`` the time-reversed conjugate -truth(-t) is also scored and the
    smaller error returned.
    """
    retrieved = np.asarray(retrieved, dtype=float)
    truth = np.asarray(truth, dtype=float)
    mask = power_mask(power, level)
    peak = int(np.argmax(power))
    candidates = [truth]
    if twin:
        candidates.append(-np.roll(truth[::-1], 1))
    best = math.inf
    for cand in candidates:
        d = (retrieved - retrieved[peak]) - (cand - cand[peak])
        best = min(best, float(np.sqrt(np.mean(d[mask] ** 2))))
    return best


def synthetic_retrieval_inputs(pulse, center_wavelength):
    """(spectral magnitude, temporal magnitude) that a lab measurement of ``pulse`` would give."""
    record = spectrum_record_from_pulse(pulse, center_wavelength)
    return resample_spectrum(record, pulse.grid, center_wavelength), np.sqrt(pulse.power)


def retrieve_pulse_phase(record, envelope, center_wavelength, cfg=None):
    """Resample an OSA record onto ``envelope``'s grid and run GS with its magnitude."""
    if not isinstance(envelope, PulseEnvelope):
        raise InvalidArgumentError("envelope must be a PulseEnvelope")
    spec = resample_spectrum(record, envelope.grid, center_wavelength)
    return gerchberg_saxton(spec, np.sqrt(envelope.power), cfg, grid=envelope.grid)
