"""
Run configuration: one JSON file with named sections, unit-suffixed keys.

Unknown sections or keys are rejected so typos surface early. Values can be
overridden from the command line with ``section.key=value`` strings; the
value is parsed as JSON when possible and taken as a string otherwise.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .core import (LaserSpec, NonlinearCoeffs, TemporalGrid, WaveguideSpec, beta_from_cm_per_gw,
                   convert_loss)
from .errors import ConfigError, KerrTpaError, OutOfRangeError
from .materials import (TABULATED_FCA, FcaTable, KerrModelParams, PhononBranch, TpaModelParams,
                        TpaVariant, fca_lookup, kerr_coefficient, tpa_coefficient)
from .propagation import SolverConfig
from .retrieval import RetrievalConfig

REQUIRED = (("waveguide", "a_eff_um2"),)

DEFAULTS = {
    "waveguide": {
        "length_mm": 19.09,
        "loss_db_per_cm": 2.4,
        "a_eff_um2": None,
        "chi_gen_per_um4": None,
        "carrier_lifetime_ns": 1.0,
    },
    "laser": {"fwhm_ps": 4.9, "rep_rate_MHz": 50.0, "wavelength_nm": 1551.8},
    "solver": {"dz_um": 10.0, "max_step_halvings": 4, "tol": 1e-5, "scheme": "exponential"},
    "grid": {"n_samples": 4096, "window_ps": 64.0},
    "material": {
        "tpa_variant": "physical_bose",
        "k_ta": 0.233,
        "k_to": 2.138,
        "e_ph_ta_K": 212.0,
        "e_ph_to_K": 670.0,
        "photon_energy_eV": 0.797,
        "n2_0_m2_per_W": 3.86e-18,
        "kerr_e_ph_K": 576.0,
        "mu": 7.0,
        "fca_table_K_m2": [list(row) for row in TABULATED_FCA],
    },
    # explicit values replace the temperature models when not null
    "coefficients": {"beta_cm_per_GW": None, "n2_m2_per_W": None, "sigma_fca_m2": None, "mu": None},
    "setup": {"eta_l": 0.316, "eta_r": 0.316, "excess_loss_on": 1.0,
              "fiber_gamma_l_per_W": 0.0, "fiber_coupling": 1.0},
    "scan": {"temperatures_K": [300.0], "p_min_mW": 0.02, "p_max_mW": 20.0, "n_points": 20,
             "noise": 0.0, "seed": 0},
    "retrieval": {"max_iters": 2000, "err_tol": 1e-6, "init": "spm", "curvature": 0.0,
                  "reference_mW": None},
    "fit": {"steps": 400, "n_samples": 256, "max_rounds": 5},
    "paths": {"output_dir": "out", "scans": None, "spectra_dir": None},
    "run": {"temperature_K": 300.0, "workers": 1},
}


def _merge(base, update, where):
    for section, values in update.items():
        if section not in base:
            raise ConfigError(f"{where}: unknown section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"{where}: section {section!r} must be an object")
        for key, val in values.items():
            if key not in base[section]:
                raise ConfigError(f"{where}: unknown key {section}.{key}")
            base[section][key] = val


def parse_override(text):
    """'section.key=value' -> ({section: {key: value}})."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    lhs, rhs = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    try:
        value = json.loads(rhs)
    except json.JSONDecodeError:
        value = rhs
    return {section: {key: value}}


@dataclass(frozen=True)
class RunConfig:
    data: dict
    source: str = None

    # ---- construction

    @classmethod
    def load(cls, path=None, overrides=()):
        data = copy.deepcopy(DEFAULTS)
        source = None
        if path is not None:
            source = str(path)
            try:
                raw = json.loads(Path(path).read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
            if not isinstance(raw, dict):
                raise ConfigError(f"{path}: top level must be an object")
            _merge(data, raw, str(path))
        for ov in overrides:
            _merge(data, parse_override(ov), "override")
        cfg = cls(data, source)
        cfg.validate()
        return cfg

    def validate(self):
        for section, key in REQUIRED:
            if self.data[section][key] is None:
                raise ConfigError(f"missing required setting {section}.{key}")
        for key in ("scans", "spectra_dir"):
            p = self.data["paths"][key]
            if p is not None and not Path(p).exists():
                raise ConfigError(f"paths.{key} does not exist: {p}")
        try:
            self.waveguide()
            self.laser()
            self.solver()
            self.grid()
            self.tpa_params()
            self.fca_table()
            self.retrieval()
        except (KerrTpaError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None

    # ---- provenance

    def canonical(self):
        """Canonical JSON of the settings that can affect results (worker count excluded)."""
        data = copy.deepcopy(self.data)
        data["run"].pop("workers", None)
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def __getitem__(self, section):
        return self.data[section]

    # ---- typed views

    def waveguide(self):
        w = self.data["waveguide"]
        a_eff = float(w["a_eff_um2"]) * 1e-12
        chi = w["chi_gen_per_um4"]
        return WaveguideSpec(
            length=float(w["length_mm"]) * 1e-3,
            linear_loss=convert_loss(float(w["loss_db_per_cm"])),
            a_eff=a_eff,
            chi_gen=None if chi is None else float(chi) * 1e24,
            carrier_lifetime=float(w["carrier_lifetime_ns"]) * 1e-9,
        )

    def laser(self):
        la = self.data["laser"]
        return LaserSpec(float(la["fwhm_ps"]) * 1e-12, float(la["rep_rate_MHz"]) * 1e6,
                         float(la["wavelength_nm"]) * 1e-9)

    def solver(self):
        s = self.data["solver"]
        return SolverConfig(float(s["dz_um"]) * 1e-6, int(s["max_step_halvings"]), float(s["tol"]),
                            str(s["scheme"]))

    def grid(self):
        g = self.data["grid"]
        return TemporalGrid.centered(int(g["n_samples"]), float(g["window_ps"]) * 1e-12)

    def retrieval(self):
        r = self.data["retrieval"]
        return RetrievalConfig(int(r["max_iters"]), float(r["err_tol"]), str(r["init"]),
                               float(r["curvature"]))

    def tpa_params(self):
        m = self.data["material"]
        branches = (PhononBranch.from_kelvin("TA", float(m["e_ph_ta_K"]), float(m["k_ta"])),
                    PhononBranch.from_kelvin("TO", float(m["e_ph_to_K"]), float(m["k_to"])))
        return TpaModelParams(branches, float(m["photon_energy_eV"]),
                              variant=TpaVariant(m["tpa_variant"]))

    def kerr_params(self):
        m = self.data["material"]
        return KerrModelParams(float(m["n2_0_m2_per_W"]), float(m["kerr_e_ph_K"]))

    def fca_table(self):
        return FcaTable(tuple(tuple(row) for row in self.data["material"]["fca_table_K_m2"]))

    def workers(self):
        return max(1, int(self.data["run"]["workers"]))

    def coefficients(self, temperature):
        """Material coefficients at ``temperature``; explicit values win over the models."""
        c = self.data["coefficients"]
        beta = c["beta_cm_per_GW"]
        beta = tpa_coefficient(temperature, self.tpa_params()) if beta is None else float(beta)
        n2 = c["n2_m2_per_W"]
        n2 = kerr_coefficient(temperature, self.kerr_params()) if n2 is None else float(n2)
        sigma = c["sigma_fca_m2"]
        if sigma is None:
            try:
                sigma = fca_lookup(temperature, self.fca_table())
            except OutOfRangeError as exc:
                raise ConfigError(f"{exc}; set coefficients.sigma_fca_m2") from None
        mu = c["mu"]
        mu = float(self.data["material"]["mu"]) if mu is None else float(mu)
        return NonlinearCoeffs(n2=n2, beta_tpa=beta_from_cm_per_gw(beta), sigma_fca=float(sigma), mu=mu)

    def variants(self):
        """Model selections recorded in every report."""
        wg = self.waveguide()
        return {
            "tpa_variant": TpaVariant(self.data["material"]["tpa_variant"]).value,
            "solver_scheme": self.data["solver"]["scheme"],
            "retrieval_init": self.data["retrieval"]["init"],
            "chi_gen_approximate": wg.chi_is_approximate,
            "coefficient_overrides": sorted(k for k, v in self.data["coefficients"].items()
                                            if v is not None),
        }


def finite_or_none(x):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None
