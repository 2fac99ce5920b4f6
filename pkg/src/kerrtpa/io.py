"""Text formats: scan CSV, OSA spectra, retrieved phases, S/T tables, JSON reports."""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .core import TemporalGrid
from .errors import DataError, ParseError
from .fitting import Direction, PowerScan
from .propagation import STTable
from .retrieval import SpectrumRecord

SCAN_HEADER = ("direction", "temperature_K", "p_in_mW", "p_out_mW")
SPECTRUM_NAME = re.compile(r"^spec_([0-9]+(?:\.[0-9]*)?(?:[eE][-+]?[0-9]+)?)mW\.txt$")


def fmt(x):
    """Shortest round-trip representation of a float."""
    return repr(float(x))


# ---------------------------------------------------------------- scans


def write_scan_set(path, scans):
    """Write scans as CSV, powers in mW."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_HEADER)
        for sc in scans:
            for p_in, p_out in sc.samples:
                w.writerow([sc.direction.value, fmt(sc.temperature), fmt(p_in * 1e3), fmt(p_out * 1e3)])


def load_scan_set(path, excess_loss_on=1.0):
    """
    Read a scan CSV and group rows into PowerScans by (temperature, direction).

    Powers are converted from mW to W and each scan is sorted by input power.
    Scans come back ordered by temperature, then "off" before "on".
    """
    groups = {}
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(h.strip() for h in header) != SCAN_HEADER:
            raise ParseError(f"header must be exactly {','.join(SCAN_HEADER)}", 1)
        for lineno, row in enumerate(rows, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", lineno)
            direction = row[0].strip().lower()
            if direction not in ("on", "off"):
                raise ParseError(f"direction must be 'on' or 'off', got {row[0]!r}", lineno)
            try:
                temp, p_in, p_out = (float(c) for c in row[1:])
            except ValueError as exc:
                raise ParseError(f"non-numeric field ({exc})", lineno) from None
            if not all(math.isfinite(v) for v in (temp, p_in, p_out)):
                raise ParseError("non-finite value", lineno)
            if p_in <= 0 or p_out <= 0:
                raise DataError(f"line {lineno}: powers must be positive")
            if temp < 0:
                raise DataError(f"line {lineno}: temperature must be non-negative")
            groups.setdefault((temp, direction), []).append((p_in * 1e-3, p_out * 1e-3))
    scans = []
    for (temp, direction), samples in sorted(groups.items()):
        samples.sort()
        ex = excess_loss_on if direction == "on" else 1.0
        scans.append(PowerScan(Direction(direction), temp, tuple(samples), excess_loss_on=ex))
    return scans


# ---------------------------------------------------------------- spectra


def _header_and_rows(path):
    meta, rows = {}, []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                body = s[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            parts = s.replace(",", " ").split()
            try:
                rows.append((lineno, [float(v) for v in parts]))
            except ValueError:
                raise ParseError(f"non-numeric data {s!r}", lineno) from None
    return meta, rows


def read_spectrum(path):
    """
    Two-column OSA export: wavelength in nm, then power in dBm or mW.

    A ``# scale = dBm`` or ``# scale = linear`` header line selects the power
    unit (linear by default); ``# resolution_nm = ...`` is optional.
    """
    meta, rows = _header_and_rows(path)
    scale = meta.get("scale", "linear").lower()
    if scale not in ("dbm", "linear"):
        raise ParseError(f"unknown scale {meta['scale']!r}")
    for lineno, vals in rows:
        if len(vals) != 2:
            raise ParseError(f"expected 2 columns, got {len(vals)}", lineno)
    if len(rows) < 2:
        raise ParseError("spectrum has fewer than two data rows")
    data = np.array([v for _, v in rows])
    wl = data[:, 0] * 1e-9
    power = 10.0 ** (data[:, 1] / 10.0) if scale == "dbm" else data[:, 1]
    order = np.argsort(wl, kind="stable")
    res = float(meta.get("resolution_nm", 0.0)) * 1e-9
    return SpectrumRecord(wl[order], power[order], res)


def write_spectrum(path, record, scale="linear"):
    with open(path, "w") as fh:
        fh.write(f"# scale = {scale}\n")
        fh.write(f"# resolution_nm = {fmt(record.resolution_bw * 1e9)}\n")
        fh.write("# wavelength_nm power\n")
        for wl, p in zip(record.wavelengths, record.psd):
            val = 10.0 * math.log10(p) if scale.lower() == "dbm" else p
            fh.write(f"{fmt(wl * 1e9)} {fmt(val)}\n")


def spectrum_power_mw(name):
    """Average power (mW) encoded in a ``spec_<p>mW.txt`` file name, or None."""
    m = SPECTRUM_NAME.match(Path(name).name)
    return float(m.group(1)) if m else None


def power_tag(p_mw):
    """File-name friendly power label, e.g. 0.02 -> '0.02', 5.0 -> '5'."""
    return f"{p_mw:.6g}"


# ---------------------------------------------------------------- phases and tables


def grid_from_times(times):
    times = np.asarray(times, dtype=float)
    dt = float(np.mean(np.diff(times)))
    return TemporalGrid(times.size, dt, float(times[0]))


def write_phase(path, phase, meta=None):
    """Two columns: tau in ps, phase in rad."""
    meta = dict(meta or {})
    meta.update(n_samples=phase.grid.n_samples, dt=fmt(phase.grid.dt), t0=fmt(phase.grid.t0))
    with open(path, "w") as fh:
        for k, v in sorted(meta.items()):
            fh.write(f"# {k} = {v}\n")
        fh.write("# tau_ps dphi_rad\n")
        for t, ph in zip(phase.grid.times, phase.phase):
            fh.write(f"{fmt(t * 1e12)} {fmt(ph)}\n")


def read_phase(path):
    """Returns (grid, phase array, header dict)."""
    meta, rows = _header_and_rows(path)
    data = np.array([v for _, v in rows])
    if data.ndim != 2 or data.shape[1] != 2:
        raise ParseError("phase file must have two columns")
    grid = TemporalGrid(data.shape[0], float(meta["dt"]), float(meta["t0"])) if "dt" in meta \
        else grid_from_times(data[:, 0] * 1e-12)
    return grid, data[:, 1], meta


def write_st_table(path, table):
    """Columnar (tau, S, T) text with the grid and run parameters in the header."""
    g = table.grid
    with open(path, "w") as fh:
        fh.write("# kerrtpa S/T table\n")
        for key, val in (("n_samples", g.n_samples), ("dt", fmt(g.dt)), ("t0", fmt(g.t0)),
                         ("peak_power_W", fmt(table.peak_power)),
                         ("alpha_tpa_per_W_m", fmt(table.alpha_tpa)),
                         ("sigma_fca_m2", fmt(table.sigma_fca)),
                         ("transmission", fmt(table.transmission)),
                         ("convergence_estimate", fmt(table.convergence_estimate))):
            fh.write(f"# {key} = {val}\n")
        fh.write("# tau_s S_W_m T_per_m2\n")
        for t, s, tt in zip(g.times, table.s, table.t):
            fh.write(f"{fmt(t)} {fmt(s)} {fmt(tt)}\n")


def read_st_table(path):
    meta, rows = _header_and_rows(path)
    try:
        grid = TemporalGrid(int(meta["n_samples"]), float(meta["dt"]), float(meta["t0"]))
    except KeyError as exc:
        raise ParseError(f"missing header field {exc}") from None
    data = np.array([v for _, v in rows])
    if data.shape != (grid.n_samples, 3):
        raise ParseError(f"expected {grid.n_samples} rows of 3 columns")
    return STTable(grid, data[:, 1], data[:, 2],
                   float(meta.get("peak_power_W", "nan")), float(meta.get("alpha_tpa_per_W_m", "nan")),
                   float(meta.get("sigma_fca_m2", "nan")), float(meta.get("transmission", "nan")),
                   float(meta.get("convergence_estimate", "nan")))


# ---------------------------------------------------------------- CSV / JSON


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps_json(obj):
    """Deterministic JSON: sorted keys, NaN/inf as null, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps_json(obj))
