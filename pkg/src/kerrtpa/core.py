"""
Shared domain types: time grids, pulse envelopes, laser and waveguide
descriptions, and the unit conversions used at I/O boundaries.

Everything inside the library is SI. Lab-friendly units (dB/cm, cm/GW,
mW, ps, nm) only appear in the ``*_from_*`` helpers and in the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, PreconditionError

# Physical constants (fixed values so derived numbers are reproducible).
K_B_EV = 8.617333e-5          # eV/K
Q_E = 1.602177e-19            # C
EPS0 = 8.854188e-12           # F/m
M0 = 9.109384e-31             # kg
C_LIGHT = 2.997925e8          # m/s
H_PLANCK = 6.62607015e-34     # J s

SECH2_FWHM_FACTOR = 2.0 * math.acosh(math.sqrt(2.0))  # FWHM / T0 for sech^2

DEFAULT_WAVELENGTH = 1551.8e-9
DEFAULT_N_SAMPLES = 4096
DEFAULT_WINDOW = 64e-12

# Edge level below which a pulse is considered to fit its window.
EDGE_LEVEL = 1e-6


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TemporalGrid:
    """Uniform retarded-time grid ``tau_j = t0 + j*dt``."""

    n_samples: int
    dt: float
    t0: float

    def __post_init__(self):
        n = int(self.n_samples)
        if n != self.n_samples or n < 2 or n & (n - 1):
            raise InvalidArgumentError(f"n_samples must be a power of two >= 2, got {self.n_samples}")
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "n_samples", n)

    @classmethod
    def centered(cls, n_samples=DEFAULT_N_SAMPLES, window=DEFAULT_WINDOW):
        """Grid of ``n_samples`` points spanning ``window`` seconds, with tau=0 at index n/2."""
        dt = window / n_samples
        return cls(n_samples, dt, -0.5 * n_samples * dt)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_samples)

    @property
    def window(self):
        """Periodic window length n*dt (the DFT period)."""
        return self.n_samples * self.dt

    @property
    def span(self):
        """Distance between the first and last sample."""
        return (self.n_samples - 1) * self.dt

    @property
    def omega(self):
        """Angular-frequency offsets of the conjugate grid, in FFT order (rad/s)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_samples, self.dt)

    @property
    def d_omega(self):
        return 2.0 * np.pi / self.window


@dataclass(frozen=True, eq=False)
class PulseEnvelope:
    """Sampled power P(tau) [W] and phase phi(tau) [rad] on a grid."""

    grid: TemporalGrid
    power: np.ndarray
    phase: np.ndarray = None

    def __post_init__(self):
        power = _freeze(self.power)
        phase = np.zeros_like(power) if self.phase is None else self.phase
        phase = _freeze(phase)
        n = self.grid.n_samples
        if power.shape != (n,) or phase.shape != (n,):
            raise InvalidArgumentError(f"power and phase must have length {n}")
        if not (np.all(np.isfinite(power)) and np.all(np.isfinite(phase))):
            raise InvalidArgumentError("power and phase must be finite")
        if np.any(power < 0):
            raise InvalidArgumentError("power must be non-negative")
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "phase", phase)

    @property
    def peak_power(self):
        return float(self.power.max())

    @property
    def field(self):
        """Complex envelope sqrt(P) exp(i phi), in sqrt(W)."""
        return np.sqrt(self.power) * np.exp(1j * self.phase)

    def edges_decayed(self, level=EDGE_LEVEL):
        """True when both edge samples are below ``level`` times the peak."""
        peak = self.peak_power
        if peak == 0:
            return True
        return bool(self.power[0] < level * peak and self.power[-1] < level * peak)

    def with_phase(self, phase):
        return PulseEnvelope(self.grid, self.power, phase)


@dataclass(frozen=True)
class LaserSpec:
    fwhm: float
    rep_rate: float
    wavelength: float = DEFAULT_WAVELENGTH
    shape: str = "sech2"

    def __post_init__(self):
        for name in ("fwhm", "rep_rate", "wavelength"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.shape != "sech2":
            raise InvalidArgumentError(f"unsupported pulse shape {self.shape!r}")

    @property
    def t0(self):
        """sech^2 time constant T0 = FWHM / (2 arccosh sqrt 2)."""
        return self.fwhm / SECH2_FWHM_FACTOR

    @property
    def photon_energy(self):
        """hbar*omega in joules, from the wavelength."""
        return H_PLANCK * C_LIGHT / self.wavelength

    @property
    def k0(self):
        return 2.0 * np.pi / self.wavelength


@dataclass(frozen=True)
class WaveguideSpec:
    """
    Waveguide description.

    ``chi_gen`` is the sixth-order overlap factor (1/m^4) such that the
    carrier-generation coefficient is ``beta_tpa * chi_gen``. When omitted the
    uniform-mode value 1/a_eff^2 is used and ``chi_is_approximate`` is set.
    """

    length: float
    linear_loss: float
    a_eff: float
    chi_gen: float = None
    carrier_lifetime: float = 1e-9
    chi_is_approximate: bool = field(default=False, init=False)

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidArgumentError("length must be positive")
        if not self.linear_loss >= 0:
            raise InvalidArgumentError("linear_loss must be non-negative")
        if not self.a_eff > 0:
            raise InvalidArgumentError("a_eff must be positive")
        if not self.carrier_lifetime > 0:
            raise InvalidArgumentError("carrier_lifetime must be positive")
        if self.chi_gen is None:
            object.__setattr__(self, "chi_gen", 1.0 / self.a_eff**2)
            object.__setattr__(self, "chi_is_approximate", True)
        elif not self.chi_gen > 0:
            raise InvalidArgumentError("chi_gen must be positive")

    @property
    def effective_length(self):
        """(1 - exp(-alpha L)) / alpha, equal to L for a lossless guide."""
        a = self.linear_loss
        if a == 0:
            return self.length
        return -math.expm1(-a * self.length) / a

    @property
    def linear_transmission(self):
        return math.exp(-self.linear_loss * self.length)


@dataclass(frozen=True)
class NonlinearCoeffs:
    """Material coefficients: n2 [m^2/W], beta_tpa [m/W], sigma_fca [m^2], mu [-]."""

    n2: float = 0.0
    beta_tpa: float = 0.0
    sigma_fca: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        for name in ("n2", "beta_tpa", "sigma_fca"):
            if not getattr(self, name) >= 0:
                raise InvalidArgumentError(f"{name} must be non-negative")

    @classmethod
    def from_waveguide(cls, wg, gamma=0.0, alpha_tpa=0.0, sigma_fca=0.0, mu=0.0,
                       wavelength=DEFAULT_WAVELENGTH):
        """Build from waveguide parameters gamma and alpha_tpa (both 1/(W m))."""
        k0 = 2.0 * np.pi / wavelength
        return cls(n2=gamma * wg.a_eff / k0, beta_tpa=alpha_tpa * wg.a_eff,
                   sigma_fca=sigma_fca, mu=mu)

    def gamma(self, wg, wavelength=DEFAULT_WAVELENGTH):
        """Kerr parameter k0*n2/A_eff in 1/(W m)."""
        return 2.0 * np.pi / wavelength * self.n2 / wg.a_eff

    def alpha_tpa(self, wg):
        """TPA parameter beta_tpa/A_eff in 1/(W m)."""
        return self.beta_tpa / wg.a_eff


def convert_loss(db_per_cm):
    """Convert a loss in dB/cm to a power attenuation coefficient in 1/m."""
    if db_per_cm < 0:
        raise InvalidArgumentError(f"loss must be non-negative, got {db_per_cm}")
    return db_per_cm * math.log(10.0) / 10.0 * 100.0


def beta_from_cm_per_gw(value):
    return value * 1e-11


def beta_to_cm_per_gw(value):
    return value * 1e11


def sech2_pulse(grid, peak_power, fwhm, center=0.0):
    """
    Transform-limited sech^2 pulse centred at ``center``.

    Raises PreconditionError if the window is shorter than 8 FWHM or the
    pulse has not decayed below 1e-6 of its peak at both window edges.
    """
    if not fwhm > 0:
        raise InvalidArgumentError("fwhm must be positive")
    if peak_power < 0:
        raise InvalidArgumentError("peak_power must be non-negative")
    t0 = fwhm / SECH2_FWHM_FACTOR
    tau = grid.times
    if grid.span < 8.0 * fwhm:
        raise PreconditionError(f"window {grid.span:.3g} s is shorter than 8 FWHM ({8 * fwhm:.3g} s)")
    edge = min(tau[-1] - center, center - tau[0])
    if edge <= 0 or 1.0 / math.cosh(min(edge / t0, 700.0)) ** 2 >= EDGE_LEVEL:
        raise PreconditionError("pulse does not decay below 1e-6 of peak inside the window")
    power = peak_power / np.cosh((tau - center) / t0) ** 2
    return PulseEnvelope(grid, power)


def peak_from_average(avg_power, laser):
    """Peak power of a sech^2 pulse train with the given average power."""
    if avg_power < 0:
        raise InvalidArgumentError("average power must be non-negative")
    return avg_power / (laser.rep_rate * 2.0 * laser.t0)


def pulse_energy(pulse):
    """Trapezoidal integral of P(tau) over the grid, in joules."""
    return float(np.trapezoid(pulse.power, dx=pulse.grid.dt))
