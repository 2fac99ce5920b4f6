"""
Command-line front end.

    kerrtpa simulate         forward model: pulses, spectra, S/T tables, 1/T, synthetic scans
    kerrtpa fit-transmission bidirectional 1/T fits -> beta_TPA vs temperature
    kerrtpa retrieve-phase   GS retrieval of output phases from spectra
    kerrtpa fit-phase        gamma, mu (and n2) from retrieved phases
    kerrtpa material         model table of beta, n2, sigma, FOM vs temperature
    kerrtpa herald           cross-TPA limited heralding efficiency

Exit codes: 0 ok, 2 parse/config/argument error, 3 fit failure, 4 solver
non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig
from .core import (NonlinearCoeffs, PulseEnvelope, TemporalGrid, beta_to_cm_per_gw,
                   peak_from_average, sech2_pulse)
from .errors import (ConfigError, ConvergenceError, DataError, DataInconsistentError,
                     DegenerateFitError, FitError, InstabilityError, InvalidArgumentError,
                     NothingToFitError, OutOfRangeError, ParseError)
from .fitting import (Direction, aggregate_series, fit_bidirectional, fit_phase_profile,
                      fitting_grid, fitting_solver, simulate_scan)
from .materials import (PairSourceScenario, fca_lookup, kerr_coefficient, nonlinear_fom,
                        pair_source_metrics, tpa_coefficient)
from .propagation import STTable, propagate_many
from .retrieval import (RetrievedPhase, baseline_correct, gerchberg_saxton, resample_spectrum,
                        spectrum_record_from_pulse, subtract_fiber_background)

log = logging.getLogger("kerrtpa")

EXIT_OK, EXIT_CONFIG, EXIT_FIT, EXIT_SOLVER = 0, 2, 3, 4


def _provenance(cfg, inputs=()):
    return {
        "config_hash": cfg.hash,
        "config_source": Path(cfg.source).name if cfg.source else None,
        "inputs": sorted(Path(p).name for p in inputs),
        "variants": cfg.variants(),
    }


def _coeff_dict(cfg, nl):
    wg, laser = cfg.waveguide(), cfg.laser()
    return {
        "beta_cm_per_GW": beta_to_cm_per_gw(nl.beta_tpa),
        "n2_m2_per_W": nl.n2,
        "sigma_fca_m2": nl.sigma_fca,
        "mu": nl.mu,
        "gamma_per_W_m": nl.gamma(wg, laser.wavelength),
        "alpha_tpa_per_W_m": nl.alpha_tpa(wg),
    }


def _out_dir(cfg, out):
    d = Path(out if out is not None else cfg["paths"]["output_dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _input_pulses(grid, laser, peaks):
    return [sech2_pulse(grid, pk, laser.fwhm) for pk in peaks]


# ---------------------------------------------------------------- simulate


def cmd_simulate(cfg, out=None, avg_mw=None, peak_w=None, temperature=None, spectra=True,
                 scans=False):
    """Forward simulation at a set of in-waveguide powers; optional synthetic scan file."""
    out = _out_dir(cfg, out)
    wg, laser, solver, grid = cfg.waveguide(), cfg.laser(), cfg.solver(), cfg.grid()
    temp = float(cfg["run"]["temperature_K"] if temperature is None else temperature)
    nl = cfg.coefficients(temp)
    if avg_mw is None and peak_w is None:
        avg_mw = [5.0]
    if avg_mw is not None:
        avg_w = [float(p) * 1e-3 for p in avg_mw]
        peaks = [peak_from_average(p, laser) for p in avg_w]
    else:
        peaks = [float(p) for p in peak_w]
        avg_w = [pk * laser.rep_rate * 2.0 * laser.t0 for pk in peaks]
    if any(p <= 0 for p in peaks):
        raise InvalidArgumentError("powers must be positive")
    pulses = _input_pulses(grid, laser, peaks)
    results = propagate_many(pulses, wg, nl, solver, wavelength=laser.wavelength,
                             workers=cfg.workers())

    rows, runs = [], []
    for p_avg, pk, res in zip(avg_w, peaks, results):
        tag = io.power_tag(p_avg * 1e3)
        with open(out / f"pulse_{tag}mW.txt", "w") as fh:
            fh.write("# tau_ps P_in_W P_out_W phase_rad\n")
            for t, a, b, ph in zip(grid.times, res.input.power, res.output.power, res.output.phase):
                fh.write(f"{io.fmt(t * 1e12)} {io.fmt(a)} {io.fmt(b)} {io.fmt(ph)}\n")
        io.write_st_table(out / f"st_{tag}mW.txt",
                          STTable(grid, res.s_table, res.t_table, pk, nl.alpha_tpa(wg), nl.sigma_fca,
                                  res.transmission, res.convergence_estimate))
        if spectra:
            fiber = _fiber_phase(cfg, res.input)
            record = spectrum_record_from_pulse(res.output.with_phase(res.output.phase + fiber),
                                                laser.wavelength)
            io.write_spectrum(out / f"spec_{tag}mW.txt", record)
        rows.append([p_avg * 1e3, pk, res.inverse_transmission, res.transmission])
        runs.append({
            "avg_power_mW": p_avg * 1e3,
            "peak_power_W": pk,
            "transmission": res.transmission,
            "inverse_transmission": res.inverse_transmission,
            "output_peak_power_W": res.output.peak_power,
            "peak_phase_rad": float(res.output.phase.max()),
            "step_count": res.step_count,
            "convergence_estimate": res.convergence_estimate,
        })
    io.write_csv(out / "transmission.csv", ["p_avg_mW", "peak_W", "inv_T", "T"], rows)

    summary = {
        "command": "simulate",
        "temperature_K": temp,
        "coefficients": _coeff_dict(cfg, nl),
        "runs": runs,
        "provenance": _provenance(cfg),
    }
    if scans:
        summary["scans"] = _simulate_scans(cfg, out / "scans.csv")
    io.write_json(out / "summary.json", summary)
    return summary


def _fiber_phase(cfg, chip_input):
    """SPM picked up in the input fiber, from the launched (pre-coupler) power."""
    gl = float(cfg["setup"]["fiber_gamma_l_per_W"])
    if gl == 0:
        return np.zeros(chip_input.grid.n_samples)
    return gl * chip_input.power / float(cfg["setup"]["fiber_coupling"])


def _simulate_scans(cfg, path):
    wg, laser, solver, grid = cfg.waveguide(), cfg.laser(), cfg.solver(), cfg.grid()
    sc, st = cfg["scan"], cfg["setup"]
    p_in = np.geomspace(float(sc["p_min_mW"]), float(sc["p_max_mW"]), int(sc["n_points"])) * 1e-3
    rng = np.random.default_rng(int(sc["seed"]))
    jobs = [(float(t), d) for t in sc["temperatures_K"] for d in (Direction.ON, Direction.OFF)]
    # noise draws are taken up front so they do not depend on worker scheduling
    draws = [rng.standard_normal(p_in.size) for _ in jobs]

    def run(k):
        temp, d = jobs[k]
        scan = simulate_scan(d, temp, p_in, wg, laser, cfg.coefficients(temp), float(st["eta_l"]),
                             float(st["eta_r"]), float(st["excess_loss_on"]), solver, grid)
        noise = float(sc["noise"])
        if noise:
            samples = [(a, b * (1.0 + noise * e)) for (a, b), e in zip(scan.samples, draws[k])]
            scan = type(scan)(scan.direction, scan.temperature, tuple(samples), scan.excess_loss_on)
        return scan

    with ThreadPoolExecutor(max_workers=cfg.workers()) as pool:
        scans = list(pool.map(run, range(len(jobs))))
    io.write_scan_set(path, scans)
    return {"file": path.name, "n_scans": len(scans), "eta_l": float(st["eta_l"]),
            "eta_r": float(st["eta_r"]), "noise": float(sc["noise"])}


# ---------------------------------------------------------------- fit-transmission


def cmd_fit_transmission(cfg, scan_files, out=None):
    """Fit on/off pairs per temperature and aggregate beta_TPA across pairs."""
    out = _out_dir(cfg, out)
    wg, laser = cfg.waveguide(), cfg.laser()
    ex = float(cfg["setup"]["excess_loss_on"])
    pairs, unpaired = [], []
    for f in scan_files:
        by_temp = {}
        for scan in io.load_scan_set(f, excess_loss_on=ex):
            by_temp.setdefault(scan.temperature, {})[scan.direction] = scan
        for temp, d in sorted(by_temp.items()):
            if Direction.ON in d and Direction.OFF in d:
                pairs.append((Path(f).name, temp, d[Direction.ON], d[Direction.OFF]))
            else:
                for direction in d:
                    unpaired.append({"file": Path(f).name, "temperature_K": temp,
                                     "direction": direction.value})
    for u in unpaired:
        log.warning("unpaired scan skipped: %s", u)
    if not pairs:
        raise NothingToFitError("no on/off scan pairs found")

    fcfg = cfg["fit"]
    solver = fitting_solver(wg, int(fcfg["steps"]))
    grid = TemporalGrid.centered(int(fcfg["n_samples"]), fitting_grid(laser).window)

    def run(item):
        name, temp, on, off = item
        sigma = cfg.coefficients(temp).sigma_fca
        return fit_bidirectional(on, off, wg, laser, solver, sigma_fca=sigma, grid=grid,
                                 max_rounds=int(fcfg["max_rounds"]))

    with ThreadPoolExecutor(max_workers=cfg.workers()) as pool:
        fitted = list(pool.map(run, pairs))

    def beta(a):
        return beta_to_cm_per_gw(a * wg.a_eff)

    pair_reports, results = [], []
    for (name, temp, _, _), (f_on, f_off, res) in zip(pairs, fitted):
        results.append(res)
        pair_reports.append({
            "file": name,
            "temperature_K": temp,
            "alpha_tpa_true_per_W_m": res.alpha_tpa_true,
            "beta_cm_per_GW": beta(res.alpha_tpa_true),
            "eta_l": res.eta_l, "eta_r": res.eta_r,
            "eta_l_dB": res.eta_l_db, "eta_r_dB": res.eta_r_db,
            "coupler_mean": res.coupler_mean,
            "sigma_fca_true_m2": res.sigma_fca_true,
            "fits": [_fit_dict(f, beta) for f in (f_on, f_off)],
        })
    series = aggregate_series(results)
    rows = [[p.temperature, beta(p.mean), beta(p.std) if p.spread_defined else math.nan, p.n]
            for p in series.points]
    io.write_csv(out / "beta_vs_T.csv", ["temperature_K", "beta_cm_per_GW", "std_cm_per_GW", "n_pairs"],
                 rows)
    report = {
        "command": "fit-transmission",
        "pairs": pair_reports,
        "unpaired": unpaired,
        "series": [{"temperature_K": p.temperature, "beta_cm_per_GW": beta(p.mean),
                    "std_cm_per_GW": beta(p.std) if p.spread_defined else None,
                    "alpha_tpa_per_W_m": p.mean, "n_pairs": p.n, "spread_defined": p.spread_defined}
                   for p in series.points],
        "a_eff_m2": wg.a_eff,
        "provenance": _provenance(cfg, scan_files),
    }
    io.write_json(out / "fit_transmission.json", report)
    return report


def _fit_dict(f, beta):
    return {
        "direction": f.direction.value,
        "alpha_tpa_apparent_per_W_m": f.alpha_tpa_apparent,
        "beta_apparent_cm_per_GW": beta(f.alpha_tpa_apparent),
        "intercept": f.intercept,
        "coupler_mean": f.coupler_mean,
        "linear_loss_per_m": f.alpha,
        "sigma_fca_apparent_m2": f.sigma_fca,
        "residual_rms": f.residual_rms,
        "relative_residual_rms": f.relative_residual_rms,
        "covariance": f.covariance,
        "n_samples": f.n_samples,
        "n_model_evals": f.n_model_evals,
        "convergence_estimate": f.convergence_estimate,
    }


# ---------------------------------------------------------------- retrieve-phase


def _alpha_from_fit(path, temp):
    data = json.loads(Path(path).read_text())
    for row in data.get("series", []):
        if math.isclose(row["temperature_K"], temp, abs_tol=1e-9):
            return float(row["alpha_tpa_per_W_m"])
    raise ConfigError(f"{path} has no result at {temp} K")


def cmd_retrieve_phase(cfg, spectra_dir, out=None, fit_json=None, temperature=None):
    """Retrieve, background-correct and baseline-correct phases for every spectrum file."""
    out = _out_dir(cfg, out)
    wg, laser, solver, grid = cfg.waveguide(), cfg.laser(), cfg.solver(), cfg.grid()
    temp = float(cfg["run"]["temperature_K"] if temperature is None else temperature)
    nl0 = cfg.coefficients(temp)
    alpha_tpa = _alpha_from_fit(fit_json, temp) if fit_json else nl0.alpha_tpa(wg)
    nl = NonlinearCoeffs(beta_tpa=alpha_tpa * wg.a_eff, sigma_fca=nl0.sigma_fca)

    files = sorted((io.spectrum_power_mw(p.name), p) for p in Path(spectra_dir).iterdir()
                   if io.spectrum_power_mw(p.name) is not None)
    if not files:
        raise ConfigError(f"no spec_<p>mW.txt files in {spectra_dir}")
    ref_mw = cfg["retrieval"]["reference_mW"]
    if ref_mw is None:
        ref_mw = files[0][0]
    elif not any(math.isclose(p, float(ref_mw), rel_tol=1e-9) for p, _ in files):
        raise ConfigError(f"reference spectrum at {ref_mw} mW not found in {spectra_dir}")
    ref_mw = float(ref_mw)

    powers = [p for p, _ in files]
    peaks = [peak_from_average(p * 1e-3, laser) for p in powers]
    pulses = _input_pulses(grid, laser, peaks)
    results = propagate_many(pulses, wg, nl, solver, wavelength=laser.wavelength,
                             workers=cfg.workers())
    rcfg = cfg.retrieval()

    def run(k):
        record = io.read_spectrum(files[k][1])
        spec = resample_spectrum(record, grid, laser.wavelength)
        env = results[k].output
        ph = gerchberg_saxton(spec, np.sqrt(env.power), rcfg, grid=grid)
        gl = float(cfg["setup"]["fiber_gamma_l_per_W"])
        if gl:
            launched = PulseEnvelope(grid, results[k].input.power / float(cfg["setup"]["fiber_coupling"]))
            ph = subtract_fiber_background(ph, gl, launched)
        return ph

    with ThreadPoolExecutor(max_workers=cfg.workers()) as pool:
        raw = list(pool.map(run, range(len(files))))
    ref_index = next(i for i, p in enumerate(powers) if math.isclose(p, ref_mw, rel_tol=1e-9))
    corrected = baseline_correct(raw, raw[ref_index])

    entries = []
    for p_mw, pk, res, ph in zip(powers, peaks, results, corrected):
        tag = io.power_tag(p_mw)
        io.write_phase(out / f"phase_{tag}mW.txt", ph,
                       {"avg_power_mW": io.fmt(p_mw), "iterations": ph.iterations_used,
                        "final_error": io.fmt(ph.final_error)})
        io.write_st_table(out / f"st_{tag}mW.txt",
                          STTable(grid, res.s_table, res.t_table, pk, alpha_tpa, nl.sigma_fca,
                                  res.transmission, res.convergence_estimate))
        hist = ph.error_history
        entries.append({
            "avg_power_mW": p_mw,
            "tag": tag,
            "reference": math.isclose(p_mw, ref_mw, rel_tol=1e-9),
            "iterations": ph.iterations_used,
            "final_error": ph.final_error,
            "converged": ph.converged,
            "error_nonincreasing": bool(np.all(np.diff(hist) <= 1e-12)),
            "seed": list(ph.seed),
            "peak_phase_rad": float(ph.phase.max()),
            "solver_convergence_estimate": res.convergence_estimate,
        })
    report = {
        "command": "retrieve-phase",
        "temperature_K": temp,
        "reference_mW": ref_mw,
        "alpha_tpa_per_W_m": alpha_tpa,
        "sigma_fca_m2": nl.sigma_fca,
        "retrieval": {"max_iters": rcfg.max_iters, "err_tol": rcfg.err_tol, "init": rcfg.init,
                      "resolution_bandwidth": "not deconvolved"},
        "spectra": entries,
        "provenance": _provenance(cfg, [f for _, f in files] + ([fit_json] if fit_json else [])),
    }
    io.write_json(out / "retrieve.json", report)
    return report


# ---------------------------------------------------------------- fit-phase


def cmd_fit_phase(cfg, phase_dir, out=None):
    """gamma and mu per power from retrieve-phase output; n2 = gamma A_eff / k0."""
    phase_dir = Path(phase_dir)
    out = _out_dir(cfg, out)
    wg, laser = cfg.waveguide(), cfg.laser()
    try:
        meta = json.loads((phase_dir / "retrieve.json").read_text())
    except FileNotFoundError:
        raise ConfigError(f"{phase_dir} has no retrieve.json") from None
    entries = meta["spectra"]
    ref = next((e for e in entries if e["reference"]), None)
    if ref is None:
        raise ConfigError("no reference entry in retrieve.json")
    ref_table = io.read_st_table(phase_dir / f"st_{ref['tag']}mW.txt")
    rows, fits = [], []
    for e in entries:
        if e["reference"]:
            continue
        grid, phase, _ = io.read_phase(phase_dir / f"phase_{e['tag']}mW.txt")
        table = io.read_st_table(phase_dir / f"st_{e['tag']}mW.txt")
        rp = RetrievedPhase(grid, phase, 0.0, 0, True)
        item = {"avg_power_mW": e["avg_power_mW"]}
        try:
            pf = fit_phase_profile(rp, table, reference=ref_table)
        except DegenerateFitError as exc:
            item.update(degenerate=True, message=str(exc))
            fits.append(item)
            continue
        n2 = pf.gamma * wg.a_eff / laser.k0
        item.update(degenerate=False, gamma_per_W_m=pf.gamma, mu=pf.mu, n2_m2_per_W=n2,
                    residual_rms_rad=pf.residual_rms, mu_identifiable=pf.mu_identifiable,
                    n_used=pf.n_used)
        fits.append(item)
        rows.append(n2)
    if not rows:
        raise FitError("every phase fit was degenerate")
    temp = float(meta["temperature_K"])
    series = aggregate_series({temp: rows})
    pt = series.points[0]
    io.write_csv(out / "n2_vs_T.csv", ["temperature_K", "n2_m2_per_W", "std_m2_per_W", "n"],
                 [[pt.temperature, pt.mean, pt.std, pt.n]])
    mus = [f["mu"] for f in fits if not f.get("degenerate") and f["mu_identifiable"]]
    report = {
        "command": "fit-phase",
        "temperature_K": temp,
        "reference_mW": ref["avg_power_mW"],
        "fits": fits,
        "n2_mean_m2_per_W": pt.mean,
        "n2_std_m2_per_W": pt.std if pt.spread_defined else None,
        "mu_mean": float(np.mean(mus)) if mus else None,
        "provenance": _provenance(cfg, [phase_dir / "retrieve.json"]),
    }
    io.write_json(out / "fit_phase.json", report)
    return report


# ---------------------------------------------------------------- material / herald


def cmd_material(cfg, temperatures, out=None, beta_override=None):
    out = _out_dir(cfg, out)
    laser = cfg.laser()
    rows, table = [], []
    for t in temperatures:
        t = float(t)
        if t < 0:
            raise InvalidArgumentError("temperatures must be non-negative")
        beta = float(beta_override) if beta_override is not None else tpa_coefficient(t, cfg.tpa_params())
        n2 = kerr_coefficient(t, cfg.kerr_params())
        try:
            sigma = fca_lookup(t, cfg.fca_table())
        except OutOfRangeError:
            sigma = math.nan
        fom = nonlinear_fom(n2, beta * 1e-11, laser.wavelength)
        rows.append([t, beta, n2, sigma, fom])
        table.append({"temperature_K": t, "beta_cm_per_GW": beta, "n2_m2_per_W": n2,
                      "sigma_fca_m2": sigma, "fom": fom})
    io.write_csv(out / "material.csv",
                 ["temperature_K", "beta_cm_per_GW", "n2_m2_per_W", "sigma_fca_m2", "fom"], rows)
    report = {"command": "material", "rows": table, "beta_overridden": beta_override is not None,
              "provenance": _provenance(cfg)}
    io.write_json(out / "material.json", report)
    return report


def cmd_herald(cfg, p_pair, purity, fom=None, temperature=None):
    if fom is None:
        temp = float(cfg["run"]["temperature_K"] if temperature is None else temperature)
        nl = cfg.coefficients(temp)
        fom = nonlinear_fom(nl.n2, nl.beta_tpa, cfg.laser().wavelength)
        source = f"temperature {temp:g} K"
    else:
        source = "given"
    m = pair_source_metrics(PairSourceScenario(float(p_pair), float(purity), float(fom)))
    return {"command": "herald", "p_pair": float(p_pair), "purity": float(purity), "fom": fom,
            "fom_source": source, "xi": m.xi, "heralding": m.heralding, "gamma_lp": m.gamma_lp}


# ---------------------------------------------------------------- entry point


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def build_parser():
    p = argparse.ArgumentParser(prog="kerrtpa", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        sp.add_argument("-c", "--config", help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a configuration value (repeatable)")
        sp.add_argument("-o", "--out", help="output directory (default: paths.output_dir)")
        sp.add_argument("--workers", type=int, help="worker threads")

    sp = sub.add_parser("simulate", help="forward propagation and synthetic data")
    common(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--avg-mW", type=_floats, help="in-waveguide average powers, mW")
    g.add_argument("--peak-W", type=_floats, help="in-waveguide peak powers, W")
    sp.add_argument("--temperature", type=float)
    sp.add_argument("--no-spectra", action="store_true")
    sp.add_argument("--scans", action="store_true", help="also write a synthetic scans.csv")

    sp = sub.add_parser("fit-transmission", help="fit bidirectional inverse-transmission scans")
    common(sp)
    sp.add_argument("scans", nargs="*", help="scan CSV files (default: paths.scans)")

    sp = sub.add_parser("retrieve-phase", help="phase retrieval from spectra")
    common(sp)
    sp.add_argument("spectra", nargs="?", help="directory of spec_<p>mW.txt files")
    sp.add_argument("--fit", help="fit_transmission.json supplying alpha_TPA")
    sp.add_argument("--temperature", type=float)

    sp = sub.add_parser("fit-phase", help="fit gamma and mu to retrieved phases")
    common(sp)
    sp.add_argument("phases", help="output directory of retrieve-phase")

    sp = sub.add_parser("material", help="temperature table of material coefficients")
    common(sp)
    sp.add_argument("temperatures", type=_floats, help="e.g. '0,5.5,50,150,300'")
    sp.add_argument("--beta", type=float, help="override beta_TPA in cm/GW for the FOM column")

    sp = sub.add_parser("herald", help="heralding efficiency of a pair source")
    common(sp)
    sp.add_argument("--p-pair", type=float, required=True)
    sp.add_argument("--purity", type=float, required=True)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--fom", type=float)
    g.add_argument("--temperature", type=float)
    return p


def _load_config(args):
    overrides = list(args.set)
    if args.workers is not None:
        overrides.append(f"run.workers={args.workers}")
    if args.config is None and not any(o.startswith("waveguide.a_eff_um2") for o in overrides):
        # material and herald do not need a waveguide; supply a placeholder area
        if args.command in ("material", "herald"):
            overrides.insert(0, "waveguide.a_eff_um2=0.1")
    return RunConfig.load(args.config, overrides)


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    cfg = _load_config(args)
    if args.command == "simulate":
        res = cmd_simulate(cfg, args.out, args.avg_mW, args.peak_W, args.temperature,
                           spectra=not args.no_spectra, scans=args.scans)
        for r in res["runs"]:
            print(f"P_avg={r['avg_power_mW']:.4g} mW  P_peak={r['peak_power_W']:.4g} W  "
                  f"1/T={r['inverse_transmission']:.6g}  conv={r['convergence_estimate']:.2g}")
    elif args.command == "fit-transmission":
        files = args.scans or ([cfg["paths"]["scans"]] if cfg["paths"]["scans"] else [])
        if not files:
            raise ConfigError("no scan files given")
        res = cmd_fit_transmission(cfg, files, args.out)
        for s in res["series"]:
            print(f"T={s['temperature_K']:g} K  beta={s['beta_cm_per_GW']:.4f} cm/GW  n={s['n_pairs']}")
    elif args.command == "retrieve-phase":
        spectra = args.spectra or cfg["paths"]["spectra_dir"]
        if spectra is None:
            raise ConfigError("no spectra directory given")
        res = cmd_retrieve_phase(cfg, spectra, args.out, args.fit, args.temperature)
        for e in res["spectra"]:
            print(f"{e['avg_power_mW']:g} mW  iters={e['iterations']}  err={e['final_error']:.3g}")
    elif args.command == "fit-phase":
        res = cmd_fit_phase(cfg, args.phases, args.out)
        print(f"n2 = {res['n2_mean_m2_per_W']:.4g} m^2/W")
    elif args.command == "material":
        res = cmd_material(cfg, args.temperatures, args.out, args.beta)
        print("T_K beta_cm_per_GW n2_m2_per_W sigma_m2 FOM")
        for r in res["rows"]:
            print(f"{r['temperature_K']:g} {r['beta_cm_per_GW']:.4f} {r['n2_m2_per_W']:.4g} "
                  f"{r['sigma_fca_m2']:.3g} {r['fom']:.3f}")
    elif args.command == "herald":
        res = cmd_herald(cfg, args.p_pair, args.purity, args.fom, args.temperature)
        print(f"FOM        {res['fom']:.4g} ({res['fom_source']})")
        print(f"xi         {res['xi']:.4f}")
        print(f"heralding  {res['heralding']:.4f}")
        print(f"gamma*L*P  {res['gamma_lp']:.4f}")
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except (ParseError, ConfigError, InvalidArgumentError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, DegenerateFitError, NothingToFitError, DataInconsistentError) as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (ConvergenceError, InstabilityError) as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
