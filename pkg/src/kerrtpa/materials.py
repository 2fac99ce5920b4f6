"""
Temperature-dependent material models for crystalline silicon near 1.55 um.

Covers the phonon-assisted TPA model with a Varshni bandgap, the empirical
coth-shaped Kerr model, free-carrier absorption (Drude formula and tabulated
values), the nonlinear figure of merit, and photon-pair heralding metrics.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .core import C_LIGHT, EPS0, K_B_EV, M0, Q_E
from .errors import (ChannelClosedError, DegenerateFitError, InvalidArgumentError,
                     OutOfRangeError)
from .optimize import golden_section


class TpaVariant(str, enum.Enum):
    """Pairing of Bose factors with the phonon creation/annihilation numerators.

    AS_PRINTED puts 1/(exp(E/kT)-1) under the creation numerator
    (2hw - Eg - Eph)^2 and 1/(1-exp(-E/kT)) under the annihilation one.
    PHYSICAL_BOSE swaps them, so phonon creation carries the (n_B + 1) weight.
    """

    AS_PRINTED = "as_printed"
    PHYSICAL_BOSE = "physical_bose"


@dataclass(frozen=True)
class VarshniParams:
    e_gap_0: float = 1.156      # eV
    beta_v: float = 7.021e-4    # eV/K
    delta_v: float = 1108.0     # K

    def __post_init__(self):
        if not (self.e_gap_0 > 0 and self.beta_v > 0 and self.delta_v > 0):
            raise InvalidArgumentError("Varshni parameters must be positive")


@dataclass(frozen=True)
class PhononBranch:
    label: str
    e_ph: float   # eV
    k: float      # amplitude, gives cm/GW

    @classmethod
    def from_kelvin(cls, label, temperature, k):
        return cls(label, temperature * K_B_EV, k)


def _default_branches():
    return (PhononBranch.from_kelvin("TA", 212.0, 0.233),
            PhononBranch.from_kelvin("TO", 670.0, 2.138))


@dataclass(frozen=True)
class TpaModelParams:
    branches: tuple = field(default_factory=_default_branches)
    photon_energy: float = 0.797   # eV
    varshni: VarshniParams = field(default_factory=VarshniParams)
    variant: TpaVariant = TpaVariant.PHYSICAL_BOSE

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "variant", TpaVariant(self.variant))
        if any(b.e_ph <= 0 for b in self.branches):
            raise InvalidArgumentError("phonon energies must be positive")

    def amplitudes(self):
        return {b.label: b.k for b in self.branches}


@dataclass(frozen=True)
class KerrModelParams:
    n2_0: float = 3.86e-18     # m^2/W
    e_ph_emp: float = 576.0    # K

    def __post_init__(self):
        if not (self.n2_0 > 0 and self.e_ph_emp > 0):
            raise InvalidArgumentError("Kerr model parameters must be positive")


@dataclass(frozen=True)
class FcaDrudeParams:
    mu_e: float
    mu_h: float
    wavelength: float = 1551.8e-9
    refractive_index: float = 3.48
    m_e_eff: float = 0.3
    m_h_eff: float = 0.4

    def __post_init__(self):
        for name in ("mu_e", "mu_h", "wavelength", "refractive_index", "m_e_eff", "m_h_eff"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")


# sigma_FCA vs temperature used as the solver input (K, m^2).
TABULATED_FCA = ((0.0, 0.0), (5.5, 0.9e-22), (50.0, 2.7e-22), (150.0, 3.1e-22), (300.0, 3.7e-22))


@dataclass(frozen=True)
class FcaTable:
    points: tuple = TABULATED_FCA

    def __post_init__(self):
        pts = tuple((float(t), float(s)) for t, s in self.points)
        if not pts:
            raise InvalidArgumentError("FCA table is empty")
        temps = [t for t, _ in pts]
        if any(b <= a for a, b in zip(temps, temps[1:])):
            raise InvalidArgumentError("FCA table temperatures must be strictly increasing")
        if any(s < 0 for _, s in pts):
            raise InvalidArgumentError("FCA cross-sections must be non-negative")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class PairSourceScenario:
    p_pair: float
    purity: float
    fom: float

    def __post_init__(self):
        if not 0 < self.purity < 1:
            raise InvalidArgumentError(f"purity must lie in (0, 1), got {self.purity}")
        if not self.p_pair > 0:
            raise InvalidArgumentError("p_pair must be positive")
        if not self.fom > 0:
            raise InvalidArgumentError("fom must be positive")
        if self.p_pair > 0.2:
            warnings.warn(f"p_pair={self.p_pair} is outside the weak-pump regime", stacklevel=3)


@dataclass(frozen=True)
class PairSourceMetrics:
    xi: float
    heralding: float
    gamma_lp: float


def varshni_gap(temperature, p=VarshniParams()):
    """Bandgap in eV: Eg(0) - beta*T^2/(T + delta)."""
    if temperature < 0:
        raise InvalidArgumentError("temperature must be non-negative")
    return p.e_gap_0 - p.beta_v * temperature**2 / (temperature + p.delta_v)


def _bose_pair(e_ph, temperature):
    """Return (n_B, n_B + 1) for a phonon of energy e_ph (eV)."""
    if temperature == 0:
        return 0.0, 1.0
    x = e_ph / (K_B_EV * temperature)
    return 1.0 / math.expm1(x), -1.0 / math.expm1(-x)


def _tpa_branch_terms(temperature, branch, p):
    """Creation and annihilation contributions F+ and F- for a unit amplitude."""
    eg = varshni_gap(temperature, p.varshni)
    base_c = 2.0 * p.photon_energy - eg - branch.e_ph
    base_a = 2.0 * p.photon_energy - eg + branch.e_ph
    if base_c < 0:
        raise ChannelClosedError(
            f"{branch.label} creation channel closed at T={temperature} K "
            f"(2hw - Eg - Eph = {base_c:.4g} eV)")
    n_b, n_b1 = _bose_pair(branch.e_ph, temperature)
    if p.variant is TpaVariant.AS_PRINTED:
        return base_c**2 * n_b, base_a**2 * n_b1
    return base_c**2 * n_b1, base_a**2 * n_b


def tpa_basis(temperature, p=TpaModelParams()):
    """Per-branch model value with K_b = 1, including the Eg^(3/2) prefactor."""
    if temperature < 0:
        raise InvalidArgumentError("temperature must be non-negative")
    eg32 = varshni_gap(temperature, p.varshni) ** 1.5
    return {b.label: eg32 * sum(_tpa_branch_terms(temperature, b, p)) for b in p.branches}


def tpa_coefficient(temperature, p=TpaModelParams()):
    """TPA coefficient in cm/GW at ``temperature`` (K)."""
    basis = tpa_basis(temperature, p)
    return sum(b.k * basis[b.label] for b in p.branches)


def kerr_coefficient(temperature, p=KerrModelParams()):
    """n2(T) = n2(0) coth(E_ph / 2 k_B T), in m^2/W."""
    if temperature < 0:
        raise InvalidArgumentError("temperature must be non-negative")
    if temperature == 0:
        return p.n2_0
    return p.n2_0 / math.tanh(p.e_ph_emp / (2.0 * temperature))


def fca_cross_section(p):
    """Drude free-carrier absorption cross-section in m^2."""
    pref = Q_E**3 * p.wavelength**2 / (4.0 * math.pi**2 * EPS0 * C_LIGHT**3 * p.refractive_index)
    me = p.m_e_eff * M0
    mh = p.m_h_eff * M0
    return pref * (1.0 / (me**2 * p.mu_e) + 1.0 / (mh**2 * p.mu_h))


def fca_lookup(temperature, table=FcaTable()):
    """Piecewise-linear interpolation of sigma_FCA(T) from a table."""
    temps = [t for t, _ in table.points]
    if temperature < temps[0] or temperature > temps[-1]:
        raise OutOfRangeError(f"T={temperature} K outside table range [{temps[0]}, {temps[-1]}]")
    return float(np.interp(temperature, temps, [s for _, s in table.points]))


def nonlinear_fom(n2, beta_tpa, wavelength):
    """n2 / (lambda * beta_tpa). Returns math.inf when beta_tpa is zero."""
    if n2 < 0 or beta_tpa < 0 or not wavelength > 0:
        raise InvalidArgumentError("n2, beta_tpa must be non-negative and wavelength positive")
    if beta_tpa == 0:
        return math.inf
    return n2 / (wavelength * beta_tpa)


def pair_source_metrics(s):
    """Cross-TPA-limited heralding efficiency of a simple waveguide pair source.

    Returns xi, the Klyshko efficiency 1/(1+xi)^2 and gamma*L*P obtained by
    inverting the pair-probability relation. xi uses the sqrt(1 - P^2) form.
    """
    if not 0 < s.purity < 1:
        raise InvalidArgumentError(f"purity must lie in (0, 1), got {s.purity}")
    pur = s.purity
    gamma_lp = math.sqrt(2.0 * s.p_pair * math.sqrt(pur / (1.0 - pur**2)))
    if math.isinf(s.fom):
        xi = 0.0
    else:
        xi = math.sqrt(2.0 * s.p_pair * pur / math.sqrt(1.0 - pur**2)) / (2.0 * math.pi * s.fom)
    return PairSourceMetrics(xi=xi, heralding=heralding_efficiency(xi), gamma_lp=gamma_lp)


def heralding_efficiency(xi):
    return 1.0 / (1.0 + xi) ** 2


def xi_readings(s):
    """The three ways of evaluating xi for a scenario, for auditing.

    ``squared``: the form used by pair_source_metrics; ``as_printed``: with
    sqrt(1 - P) in the inner root; ``direct``: gamma_lp / (2 pi FOM).
    """
    pur = s.purity
    k = 1.0 / (2.0 * math.pi * s.fom)
    gamma_lp = math.sqrt(2.0 * s.p_pair * math.sqrt(pur / (1.0 - pur**2)))
    return {
        "squared": k * math.sqrt(2.0 * s.p_pair * pur / math.sqrt(1.0 - pur**2)),
        "as_printed": k * math.sqrt(2.0 * s.p_pair * pur / math.sqrt(1.0 - pur)),
        "direct": k * gamma_lp,
    }


@dataclass(frozen=True)
class MaterialFit:
    params: object
    temperatures: np.ndarray
    values: np.ndarray
    fitted: np.ndarray

    @property
    def residuals(self):
        return self.fitted - self.values

    @property
    def rms_relative(self):
        return float(np.sqrt(np.mean((self.residuals / self.values) ** 2)))


def fit_material_constants(points, model, params=None, freeze=None, e_ph_bounds=(20.0, 3000.0)):
    """
    Least-squares fit of model constants to (temperature, value) points.

    model="tpa": values in cm/GW; solves for the branch amplitudes K_b in
    closed form with phonon energies held fixed. Branch labels listed in
    ``freeze`` (mapping label -> value) are held at the given amplitude.

    model="kerr": values in m^2/W; scans the empirical phonon temperature and
    solves n2(0) in closed form at each candidate.
    """
    pts = sorted((float(t), float(v)) for t, v in points)
    temps = np.array([t for t, _ in pts])
    vals = np.array([v for _, v in pts])
    if model == "tpa":
        return _fit_tpa(temps, vals, params or TpaModelParams(), freeze or {})
    if model == "kerr":
        return _fit_kerr(temps, vals, params or KerrModelParams(), e_ph_bounds)
    raise InvalidArgumentError(f"unknown model {model!r}")


def _fit_tpa(temps, vals, params, freeze):
    labels = [b.label for b in params.branches]
    free = [lab for lab in labels if lab not in freeze]
    if len(temps) < max(len(free), 2):
        raise InvalidArgumentError("TPA fit needs at least two points")
    basis = [tpa_basis(t, params) for t in temps]
    x = np.array([[row[lab] for lab in free] for row in basis])
    offset = np.array([sum(freeze[lab] * row[lab] for lab in freeze) for row in basis])
    normal = x.T @ x
    if not free:
        amps = {}
    else:
        if np.linalg.cond(normal) > 1e12:
            raise DegenerateFitError("singular normal equations for TPA amplitudes")
        sol = np.linalg.solve(normal, x.T @ (vals - offset))
        amps = dict(zip(free, sol))
    amps.update(freeze)
    branches = tuple(replace(b, k=float(amps[b.label])) for b in params.branches)
    fitted_params = replace(params, branches=branches)
    fitted = np.array([tpa_coefficient(t, fitted_params) for t in temps])
    return MaterialFit(fitted_params, temps, vals, fitted)


def _kerr_shape(temps, e_ph):
    out = np.ones_like(temps)
    hot = temps > 0
    out[hot] = 1.0 / np.tanh(e_ph / (2.0 * temps[hot]))
    return out


def _fit_kerr(temps, vals, params, bounds):
    if len(temps) < 2:
        raise InvalidArgumentError("Kerr fit needs at least two points")
    if np.all(temps == 0):
        raise DegenerateFitError("all Kerr points at T=0; phonon energy unidentifiable")

    def profile(e_ph):
        g = _kerr_shape(temps, e_ph)
        scale = g @ vals / (g @ g)
        return float(np.sum((scale * g - vals) ** 2)), scale

    # Log-spaced scan, then golden refinement between the neighbours of the best node.
    nodes = np.geomspace(bounds[0], bounds[1], 200)
    costs = [profile(e)[0] for e in nodes]
    i = int(np.argmin(costs))
    lo, hi = nodes[max(i - 1, 0)], nodes[min(i + 1, len(nodes) - 1)]
    res = golden_section(lambda e: profile(e)[0], lo, hi, xtol=1e-9 * hi)
    e_best = res.x
    _, n2_0 = profile(e_best)
    fitted_params = replace(params, n2_0=float(n2_0), e_ph_emp=float(e_best))
    fitted = np.array([kerr_coefficient(t, fitted_params) for t in temps])
    return MaterialFit(fitted_params, temps, vals, fitted)
