"""
Parameter recovery from power scans and retrieved phases.

Scan geometry. Light passes input coupler -> waveguide -> output coupler.
With the cross-over switch in the "on" state the pump enters through the
left coupler (eta_l) and picks up the switch excess loss eta_x, split evenly
between input and output paths; in the "off" state it enters through the
right coupler (eta_r) and bypasses the switch:

    on:  P_chip = eta_l sqrt(eta_x) P_in,  P_out = eta_r sqrt(eta_x) T_wg P_chip
    off: P_chip = eta_r P_in,              P_out = eta_l T_wg P_chip

A fit that assumes equal couplers g = sqrt(eta_l eta_r) sees an apparent
alpha_tpa scaled by (input coupler)/g; the geometric mean of the two
directions cancels the asymmetry.
"""

from __future__ import annotations

import enum
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .core import LaserSpec, NonlinearCoeffs, TemporalGrid, WaveguideSpec, peak_from_average
from .errors import (DataInconsistentError, DegenerateFitError, FitError, InvalidArgumentError,
                     PreconditionError)
from .optimize import golden_section
from .propagation import SolverConfig, transmission_curve

MASK_LEVEL = 0.05


class Direction(str, enum.Enum):
    ON = "on"
    OFF = "off"


@dataclass(frozen=True)
class PowerScan:
    """samples: ((p_in_avg, p_out_avg), ...) in W, sorted by input power."""

    direction: Direction
    temperature: float
    samples: tuple
    excess_loss_on: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        samples = tuple((float(a), float(b)) for a, b in self.samples)
        if not samples:
            raise InvalidArgumentError("scan has no samples")
        if any(a <= 0 or b <= 0 for a, b in samples):
            raise InvalidArgumentError("scan powers must be positive")
        if any(b[0] < a[0] for a, b in zip(samples, samples[1:])):
            raise InvalidArgumentError("scan samples must be sorted by input power")
        if not 0 < self.excess_loss_on <= 1:
            raise InvalidArgumentError("excess_loss_on must lie in (0, 1]")
        if self.temperature < 0:
            raise InvalidArgumentError("temperature must be non-negative")
        object.__setattr__(self, "samples", samples)

    @property
    def p_in(self):
        return np.array([a for a, _ in self.samples])

    @property
    def p_out(self):
        return np.array([b for _, b in self.samples])

    @property
    def inverse_transmission(self):
        return self.p_in / self.p_out

    @property
    def switch_factor(self):
        """Product of switch losses seen along the optical path."""
        return self.excess_loss_on if self.direction is Direction.ON else 1.0


def coupling(direction, eta_l, eta_r, eta_x=1.0):
    """(input, output) transmittances of the fiber-to-chip path for a direction."""
    if Direction(direction) is Direction.ON:
        s = math.sqrt(eta_x)
        return eta_l * s, eta_r * s
    return eta_r, eta_l


@dataclass
class CurveCache:
    """Memoized waveguide 1/T keyed by (alpha_tpa, on-chip average powers). Thread safe."""

    wg: WaveguideSpec
    laser: LaserSpec
    sigma_fca: float
    cfg: SolverConfig
    grid: TemporalGrid
    _store: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    convergence: list = field(default_factory=list, repr=False)

    def __call__(self, alpha_tpa, chip_powers):
        key = (float(alpha_tpa), tuple(float(p) for p in chip_powers))
        with self._lock:
            hit = self._store.get(key)
        if hit is not None:
            return hit
        nl = NonlinearCoeffs(beta_tpa=alpha_tpa * self.wg.a_eff, sigma_fca=self.sigma_fca)
        curve, results = transmission_curve(key[1], self.laser, self.wg, nl, self.cfg,
                                            grid=self.grid, return_results=True)
        value = np.array([c[1] for c in curve])
        with self._lock:
            self._store.setdefault(key, value)
            self.convergence.extend(r.convergence_estimate for r in results)
            return self._store[key]

    def __len__(self):
        return len(self._store)


def fitting_solver(wg, steps=400):
    """Fixed-step settings used inside fit loops (about L/steps, second-order accurate).

    The convergence of the final model is checked separately with one halving.
    """
    return SolverConfig(dz=wg.length / steps, max_step_halvings=0, tol=1e-3)


def fitting_grid(laser=None):
    """Coarse grid for fit loops: 256 samples over 9.5 FWHM (sech^2 edges below 1e-6)."""
    window = 9.5 * (4.9e-12 if laser is None else laser.fwhm)
    return TemporalGrid.centered(256, window)


def simulate_scan(direction, temperature, p_in, wg, laser, nl, eta_l, eta_r, eta_x=1.0,
                  cfg=None, grid=None, noise=0.0, rng=None):
    """
    Forward model of a fiber-to-fiber power scan.

    ``noise`` is a relative (multiplicative, Gaussian) error applied to each
    measured output power.
    """
    cfg = cfg or SolverConfig()
    grid = grid or TemporalGrid.centered()
    c_in, c_out = coupling(direction, eta_l, eta_r, eta_x)
    p_in = np.sort(np.asarray(p_in, dtype=float))
    curve = transmission_curve(c_in * p_in, laser, wg, nl, cfg, grid=grid)
    inv_t = np.array([c[1] for c in curve])
    p_out = c_in * c_out * p_in / inv_t
    if noise:
        rng = rng if rng is not None else np.random.default_rng(0)
        p_out = p_out * (1.0 + noise * rng.standard_normal(p_out.size))
    ex = eta_x if Direction(direction) is Direction.ON else 1.0
    return PowerScan(direction, temperature, tuple(zip(p_in, p_out)), excess_loss_on=ex)


@dataclass(frozen=True)
class TransmissionFit:
    direction: Direction
    temperature: float
    alpha: float                   # waveguide linear loss used, 1/m
    alpha_tpa_apparent: float      # 1/(W m)
    coupler_mean: float            # sqrt(eta_l eta_r) implied by the intercept
    intercept: float               # fiber-to-fiber 1/T at zero power
    residual_rms: float
    relative_residual_rms: float
    covariance: tuple              # 2x2 over (intercept, alpha_tpa_apparent)
    sigma_fca: float
    excess_loss_on: float
    n_samples: int
    n_model_evals: int
    convergence_estimate: float

    @property
    def alpha_tpa_std(self):
        return math.sqrt(max(self.covariance[1][1], 0.0))


def _intercept(p, y):
    """Zero-power intercept and initial slope from the weakly nonlinear end of the scan."""
    low = y <= y[0] + 0.25 * (y.min() if y.min() > 0 else 1.0)
    if low.sum() < 3:
        low = np.zeros_like(low)
        low[:3] = True
    deg = 2 if low.sum() >= 5 else 1
    coef = np.polyfit(p[low], y[low], deg)
    return float(coef[-1]), float(coef[-2])


def fit_inverse_transmission(scan, wg, laser, cfg=None, *, sigma_fca=0.0, grid=None,
                             polish=True, xtol=1e-4, cache=None, start=None):
    """
    Two-stage fit of a power scan under the mean-coupler assumption.

    Stage 1 extrapolates 1/T to zero power from the low-power end; with the
    waveguide loss known this gives g^2 = exp(alpha L) / (intercept * eta_x).
    Stage 2 golden-section searches alpha_tpa_apparent against the propagated
    model. With ``polish`` a bounded least-squares pass then refines
    (intercept, alpha_tpa) jointly, which removes the extrapolation bias of
    stage 1 on strongly nonlinear scans. ``sigma_fca`` is the (apparent) FCA
    cross-section held fixed in the model. ``start`` = (intercept, alpha_tpa)
    skips both stages and goes straight to the polish.
    """
    p, y = scan.p_in, scan.inverse_transmission
    if p.size < 4:
        raise PreconditionError(f"need at least 4 samples, got {p.size}")
    if 10.0 * math.log10(p[-1] / p[0]) < 10.0 - 1e-9:
        raise PreconditionError("input powers must span at least 10 dB")
    cfg = cfg or fitting_solver(wg)
    grid = grid or fitting_grid(laser)
    cache = cache or CurveCache(wg, laser, sigma_fca, cfg, grid)
    x = scan.switch_factor
    lin = math.exp(wg.linear_loss * wg.length)

    intercept, slope = _intercept(p, y)
    if not intercept > 0:
        raise DataInconsistentError(f"non-positive zero-power intercept {intercept:.4g}")
    evals = [0]

    def coupler(icpt):
        return math.sqrt(lin / (icpt * x))

    def model(icpt, a):
        evals[0] += 1
        chip = coupler(icpt) * math.sqrt(x) * p
        return icpt / lin * cache(a, chip)

    def sse(a):
        return float(np.sum((y - model(intercept, a)) ** 2))

    if start is None:
        g = coupler(intercept)
        per_watt = peak_from_average(1.0, laser)
        a0 = max(slope, 0.0) / intercept / (per_watt * wg.effective_length * (2.0 / 3.0) * g * math.sqrt(x))
        hi = max(3.0 * a0, 1.0)
        for _ in range(6):
            res = golden_section(sse, 0.0, hi, xtol=xtol * hi)
            if res.x < hi * (1 - 1e-3):
                break
            hi *= 4.0
        else:
            raise FitError(f"alpha_tpa minimum not bracketed below {hi / 4:.4g} /(W m)")
        alpha_tpa = res.x
    else:
        intercept, alpha_tpa = float(start[0]), float(start[1])
        polish = True

    def resid(th):
        return (model(th[0], th[1]) - y) / y

    if polish:
        # relative residuals keep the high-power points from dominating
        sol = least_squares(resid, [intercept, alpha_tpa], bounds=([1e-12, 0.0], [np.inf, np.inf]),
                            x_scale=[intercept, max(alpha_tpa, 1.0)], diff_step=1e-4,
                            xtol=1e-10, ftol=1e-12)
        if sol.cost <= 0.5 * float(np.sum(resid([intercept, alpha_tpa]) ** 2)):
            intercept, alpha_tpa = float(sol.x[0]), float(sol.x[1])

    fitted = model(intercept, alpha_tpa)
    r = y - fitted
    cov = _covariance(lambda th: y - model(th[0], th[1]), np.array([intercept, alpha_tpa]), r)
    # Step-halving check of the final model only.
    check_cfg = SolverConfig(dz=cfg.dz, max_step_halvings=max(cfg.max_step_halvings, 1), tol=1.0,
                             scheme=cfg.scheme)
    nl = NonlinearCoeffs(beta_tpa=alpha_tpa * wg.a_eff, sigma_fca=sigma_fca)
    _, check = transmission_curve(coupler(intercept) * math.sqrt(x) * p, laser, wg, nl, check_cfg,
                                  grid=grid, return_results=True)
    conv = max(c.convergence_estimate for c in check)
    return TransmissionFit(
        direction=scan.direction, temperature=scan.temperature, alpha=wg.linear_loss,
        alpha_tpa_apparent=float(alpha_tpa), coupler_mean=float(coupler(intercept)),
        intercept=float(intercept),
        residual_rms=float(np.sqrt(np.mean(r**2))),
        relative_residual_rms=float(np.sqrt(np.mean((r / y) ** 2))),
        covariance=cov, sigma_fca=float(sigma_fca), excess_loss_on=scan.excess_loss_on,
        n_samples=int(p.size), n_model_evals=evals[0], convergence_estimate=float(conv))


def _covariance(resid_fn, theta, resid):
    n, k = resid.size, theta.size
    if n <= k:
        return tuple(tuple(math.nan for _ in range(k)) for _ in range(k))
    jac = np.empty((n, k))
    for j in range(k):
        h = 1e-4 * max(abs(theta[j]), 1e-3)
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] = max(dn[j] - h, 0.0)
        jac[:, j] = (resid_fn(up) - resid_fn(dn)) / (up[j] - dn[j])
    s2 = float(resid @ resid) / (n - k)
    try:
        cov = s2 * np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        cov = np.full((k, k), math.nan)
    return tuple(tuple(float(v) for v in row) for row in cov)


@dataclass(frozen=True)
class BidirectionalResult:
    temperature: float
    alpha_tpa_true: float
    eta_l: float
    eta_r: float
    coupler_mean: float
    sigma_fca_true: float = None

    @property
    def eta_l_db(self):
        return 10.0 * math.log10(self.eta_l)

    @property
    def eta_r_db(self):
        return 10.0 * math.log10(self.eta_r)


def combine_apparent(a_on, a_off, g, sigma_on=None, sigma_off=None, temperature=math.nan):
    """Geometric-mean correction of a pair of apparent coefficients."""
    if not (a_on > 0 and a_off > 0):
        raise InvalidArgumentError("apparent coefficients must be positive")
    if not g > 0:
        raise InvalidArgumentError("mean coupler transmittance must be positive")
    ratio = math.sqrt(a_on / a_off)
    sigma = None
    if sigma_on is not None and sigma_off is not None:
        if sigma_on < 0 or sigma_off < 0:
            raise InvalidArgumentError("sigma values must be non-negative")
        sigma = math.sqrt(sigma_on * sigma_off)
    return BidirectionalResult(temperature, math.sqrt(a_on * a_off), g * ratio, g / ratio, g, sigma)


def combine_bidirectional(fit_on, fit_off):
    """True alpha_tpa and individual coupler losses from an on/off pair."""
    t_on, t_off = fit_on.temperature, fit_off.temperature
    if not math.isclose(t_on, t_off, rel_tol=1e-9, abs_tol=1e-9):
        raise InvalidArgumentError(f"fits at different temperatures: {t_on} K vs {t_off} K")
    g = math.sqrt(fit_on.coupler_mean * fit_off.coupler_mean)
    return combine_apparent(fit_on.alpha_tpa_apparent, fit_off.alpha_tpa_apparent, g,
                            temperature=t_on)


def fit_bidirectional(scan_on, scan_off, wg, laser, cfg=None, *, sigma_fca=0.0, grid=None,
                      max_rounds=5, rtol=1e-3, workers=1):
    """
    Fit an on/off pair and combine them, with free carriers made consistent.

    Under the mean-coupler assumption the apparent FCA cross-section of a
    direction is sigma * (alpha_tpa_apparent / alpha_tpa_true), so each round
    refits both scans with sigma scaled by the current apparent/true ratio.
    With ``sigma_fca`` = 0 one round suffices.
    Returns (fit_on, fit_off, BidirectionalResult).
    """
    sig = {Direction.ON: sigma_fca, Direction.OFF: sigma_fca}
    scans = {Direction.ON: scan_on, Direction.OFF: scan_off}
    fits = {}
    prev = None
    for _ in range(max_rounds):
        def run(d):
            start = None
            if d in fits:
                start = (fits[d].intercept, fits[d].alpha_tpa_apparent)
            return fit_inverse_transmission(scans[d], wg, laser, cfg, sigma_fca=sig[d], grid=grid,
                                            start=start)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=2) as pool:
                fits = dict(zip(sig, pool.map(run, list(sig))))
        else:
            fits = {d: run(d) for d in sig}
        res = combine_bidirectional(fits[Direction.ON], fits[Direction.OFF])
        if sigma_fca == 0:
            break
        for d in sig:
            sig[d] = sigma_fca * fits[d].alpha_tpa_apparent / res.alpha_tpa_true
        if prev is not None and abs(res.alpha_tpa_true - prev) <= rtol * prev:
            break
        prev = res.alpha_tpa_true
    res = combine_apparent(fits[Direction.ON].alpha_tpa_apparent, fits[Direction.OFF].alpha_tpa_apparent,
                           res.coupler_mean, fits[Direction.ON].sigma_fca, fits[Direction.OFF].sigma_fca,
                           temperature=res.temperature)
    return fits[Direction.ON], fits[Direction.OFF], res


@dataclass(frozen=True)
class PhaseFit:
    gamma: float
    mu: float
    residual_rms: float
    mu_identifiable: bool
    n_used: int


def fit_phase_profile(phase, table, sigma_fca=None, *, reference=None, power=None,
                      level=MASK_LEVEL):
    """
    Closed-form (gamma, mu) from a retrieved phase and S/T tables.

    The phase is modelled as gamma*S - (sigma*mu/2)*T plus an unknown constant,
    over samples where ``power`` exceeds ``level`` of its peak. ``power``
    defaults to the retrieval's temporal magnitude squared. When ``reference``
    tables are given, the model uses S - S_ref and T - T_ref (for phases that
    were baseline-corrected against that reference).
    """
    sigma = table.sigma_fca if sigma_fca is None else sigma_fca
    s, t = np.asarray(table.s, float), np.asarray(table.t, float)
    if reference is not None:
        s, t = s - reference.s, t - reference.t
    phi = np.asarray(phase.phase, float)
    if s.shape != phi.shape or t.shape != phi.shape:
        raise InvalidArgumentError("phase and tables have different lengths")
    if power is None:
        power = phase.magnitude**2 if phase.magnitude is not None else table.s
    power = np.asarray(power, float)
    mask = power > level * power.max()
    if mask.sum() < 3:
        raise DegenerateFitError("fewer than 3 samples above the power threshold")

    def centred(v):
        v = v[mask]
        return v - v.mean()

    y = centred(phi)
    xs = centred(s)
    xt = centred(-0.5 * sigma * t) if sigma else np.zeros_like(xs)
    if not np.any(xs):
        raise DegenerateFitError("S table is constant over the fit region")
    if not np.any(xt):
        gamma = float(xs @ y / (xs @ xs))
        r = y - gamma * xs
        return PhaseFit(gamma, math.nan, float(np.sqrt(np.mean(r**2))), False, int(mask.sum()))
    a = np.column_stack([xs, xt])
    normal = a.T @ a
    if np.linalg.cond(normal) > 1e12:
        raise DegenerateFitError("S and T are proportional; mu is unidentifiable")
    gamma, c = np.linalg.solve(normal, a.T @ y)
    r = y - a @ np.array([gamma, c])
    return PhaseFit(float(gamma), float(c), float(np.sqrt(np.mean(r**2))), True, int(mask.sum()))


@dataclass(frozen=True)
class SeriesPoint:
    temperature: float
    mean: float
    std: float
    n: int
    spread_defined: bool


@dataclass(frozen=True)
class TemperatureSeries:
    points: tuple
    groups: dict = field(default_factory=dict, compare=False)

    def temperatures(self):
        return [p.temperature for p in self.points]

    def means(self):
        return [p.mean for p in self.points]


def aggregate_series(results, key="alpha_tpa_true"):
    """
    Per-temperature mean and sample standard deviation.

    ``results`` is either a list of BidirectionalResult (grouped by their
    temperature, value taken from ``key``) or a mapping temperature -> values.
    Groups of one get std = nan and spread_defined = False.
    """
    if isinstance(results, dict):
        groups = {float(t): [float(v) for v in vs] for t, vs in results.items()}
    else:
        groups = {}
        for r in results:
            groups.setdefault(float(r.temperature), []).append(float(getattr(r, key)))
    points = []
    for temp in sorted(groups):
        vals = np.sort(np.array(groups[temp]))
        if vals.size == 0:
            raise InvalidArgumentError(f"empty group at {temp} K")
        mean = float(math.fsum(vals) / vals.size)
        if vals.size >= 2:
            std = float(math.sqrt(math.fsum((vals - mean) ** 2) / (vals.size - 1)))
        else:
            std = math.nan
        points.append(SeriesPoint(temp, mean, std, int(vals.size), vals.size >= 2))
    return TemperatureSeries(tuple(points), groups)
