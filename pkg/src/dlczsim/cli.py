"""Command-line front end for the source model and its diagnostics.

Subcommands: sweep, fit, simulate, and aux with a report topic. Each run
writes delimited data, figures (unless --no-plot) and a manifest JSON
recording parameters, seeds and file digests into --out. Exit codes:
0 success, 2 invalid input, 3 numerical failure (fit did not converge).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from collections.abc import Mapping
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, fitting, model, physics, plotting
from .config import ConfigError, load_config
from .config import (
    parse_decay,
    parse_fit,
    parse_hbt,
    parse_montecarlo,
    parse_spectrum,
    parse_timing,
    parse_wavepacket,
)
from .config import parse_filter as parse_filter_section
from .montecarlo import TrialBatchConfig, estimate, sample_trials

__all__ = ["main"]

SWEEP_COLUMNS = ("p", "p1", "p2", "p12", "g12", "qc", "pc")
FIT_HEADER = ("p1", "g12", "g12_err", "qc", "qc_err")
RESIDUAL_COLUMNS = ("p1", "observable", "measured", "sigma", "model",
                    "standardized")
AUX_TOPICS = ("decay", "spectrum", "filter", "timing", "hbt", "wavepacket")


def _fmt(value) -> str:
    # 17 significant digits so every float survives a write/read cycle
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path: Path, header, rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _jsonable(value):
    """Plain JSON-safe structures; non-finite floats become null."""
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _jsonable(getattr(value, f.name))
                for f in dataclasses.fields(value)}
    if isinstance(value, bool):
        return value
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, Path):
        return str(value)
    return value


def _write_json(path: Path, payload) -> Path:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, name: str, command: str, parameters,
                    seeds, input_paths, output_paths) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
        "parameters": parameters,
        "seeds": list(seeds),
        "inputs": {Path(p).name: _sha256(p) for p in input_paths},
        "outputs": {Path(p).name: _sha256(p) for p in output_paths},
    }
    return _write_json(out_dir / f"{name}_manifest.json", manifest)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int,
                        help="override montecarlo.seed from the config")
    common.add_argument("--trials", type=int,
                        help="override montecarlo.n_trials from the config")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="delimited output format for sweep/simulate")
    common.add_argument("--plot", action=argparse.BooleanOptionalAction,
                        default=True, help="render figures next to the data")

    parser = argparse.ArgumentParser(
        prog="dlczsim",
        description="Heralded single-excitation source: curves, fits and "
                    "trial-level simulation.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common],
                   help="model figure-of-merit curves over an excitation grid")
    fit_parser = sub.add_parser("fit", parents=[common],
                                help="recover source parameters from measured curves")
    fit_parser.add_argument("data",
                            help="CSV with columns " + ",".join(FIT_HEADER))
    sub.add_parser("simulate", parents=[common],
                   help="trial-level counting simulation with seeded streams")
    aux_parser = sub.add_parser("aux", parents=[common],
                                help="auxiliary report curves and budgets")
    aux_parser.add_argument("topic", choices=AUX_TOPICS)
    return parser


def cmd_sweep(args, cfg, out_dir: Path) -> int:
    if "grid" not in cfg:
        raise ConfigError("config: sweep needs a 'grid' section")
    template = cfg.get("model", model.ModelParams.defaults())
    axis, values = cfg["grid"]
    if axis == "p1":
        p_values = [fitting.invert_p1(template, v) for v in values]
    else:
        p_values = [float(v) for v in values]
    points = model.sweep(template, p_values)
    rows = [{name: getattr(pt, name) for name in SWEEP_COLUMNS}
            for pt in points]

    outputs = []
    if args.format == "json":
        outputs.append(_write_json(out_dir / "sweep.json", rows))
    else:
        outputs.append(_write_csv(out_dir / "sweep.csv", SWEEP_COLUMNS,
                                  [[row[c] for c in SWEEP_COLUMNS]
                                   for row in rows]))
    if args.plot:
        outputs.append(plotting.sweep_figure(rows, out_dir / "sweep.png"))

    parameters = {"model": _jsonable(template), "grid_axis": axis,
                  "grid_values": _jsonable(values), "format": args.format}
    inputs = [args.config] if args.config else []
    _write_manifest(out_dir, "sweep", "sweep", parameters, [], inputs, outputs)
    print(f"wrote {outputs[0]}")
    return 0


def _read_measured_csv(path: str) -> list[fitting.MeasuredPoint]:
    """Parse a measured-curve CSV; empty cells mark absent observables."""
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines()
             if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file; expected header "
                         + ",".join(FIT_HEADER))
    header = tuple(cell.strip() for cell in lines[0].split(","))
    if header != FIT_HEADER:
        raise ValueError(f"{path}: header mismatch; expected "
                         + ",".join(FIT_HEADER))
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = [cell.strip() for cell in line.split(",")]
        if len(cells) != len(FIT_HEADER):
            raise ValueError(f"{path}:{lineno}: expected {len(FIT_HEADER)} "
                             f"cells, got {len(cells)}")
        values = []
        for name, cell in zip(FIT_HEADER, cells):
            if cell == "":
                values.append(None)
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: non-numeric {name} cell {cell!r}") from None
        if values[0] is None:
            raise ValueError(f"{path}:{lineno}: p1 is required")
        try:
            points.append(fitting.MeasuredPoint(p1=values[0], g12=values[1],
                                                g12_err=values[2], qc=values[3],
                                                qc_err=values[4]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return points


def cmd_fit(args, cfg, out_dir: Path) -> int:
    fit_cfg = cfg.get("fit", parse_fit({}))
    data = _read_measured_csv(args.data)
    result = fitting.fit(data, fixed=fit_cfg["fixed"],
                         initial=fit_cfg["initial"],
                         observables=fit_cfg["observables"],
                         weighted=fit_cfg["weighted"],
                         n_starts=fit_cfg["n_starts"],
                         max_nfev=fit_cfg["max_nfev"])
    report = fitting.residual_report(result, data)

    payload = {
        "command": "fit",
        "values": {"kappa1": result.kappa1, "kappa2": result.kappa2,
                   "alpha2": result.alpha2},
        "sigmas": dict(zip(("kappa1", "kappa2", "alpha2"), result.sigmas)),
        "covariance": result.covariance,
        "residual_norm": result.residual_norm,
        "chi2": report.chi2,
        "dof": report.dof,
        "chi2_per_dof": report.chi2_per_dof,
        "converged": result.converged,
        "n_residuals": result.n_residuals,
        "observables": list(result.observables),
        "weighted": result.weighted,
        "fixed": result.fixed,
    }
    outputs = [_write_json(out_dir / "fit_result.json", payload)]
    outputs.append(_write_csv(
        out_dir / "fit_residuals.csv", RESIDUAL_COLUMNS,
        [[row.p1, row.observable, row.measured, row.sigma, row.model,
          row.standardized] for row in report.rows]))

    if args.plot:
        abscissa = np.geomspace(min(pt.p1 for pt in data),
                                max(pt.p1 for pt in data), 200)
        g12_curve, qc_curve = fitting.model_curves(
            abscissa, result.kappa1, result.kappa2, result.alpha2,
            fixed=result.fixed)
        curves = {"p1": abscissa}
        if "g12" in result.observables:
            curves["g12"] = g12_curve
        if "qc" in result.observables:
            curves["qc"] = qc_curve
        outputs.append(plotting.fit_figure(data, curves,
                                           out_dir / "fit_curves.png"))

    parameters = {"fixed": _jsonable(result.fixed),
                  "initial": fit_cfg["initial"],
                  "observables": list(result.observables),
                  "weighted": result.weighted,
                  "n_starts": fit_cfg["n_starts"]}
    inputs = [args.data] + ([args.config] if args.config else [])
    _write_manifest(out_dir, "fit", "fit", parameters, [], inputs, outputs)

    values = ", ".join(f"{k}={v:.6g}" for k, v in payload["values"].items())
    print(f"fit {'converged' if result.converged else 'DID NOT CONVERGE'}: "
          f"{values} (chi2/dof={report.chi2_per_dof:.3g})")
    return 0 if result.converged else 3


def cmd_simulate(args, cfg, out_dir: Path) -> int:
    mc = cfg.get("montecarlo", parse_montecarlo({}))
    params = cfg.get("model", model.ModelParams.defaults())
    n_trials = args.trials if args.trials is not None else mc["n_trials"]
    seed = args.seed if args.seed is not None else mc["seed"]
    if seed is None:
        raise ConfigError("montecarlo.seed: required (or pass --seed)")
    batch = TrialBatchConfig(n_trials=n_trials, seed=seed,
                             detector_kind=mc["detector_kind"],
                             batch_size=mc["batch_size"])
    tap_path = str(out_dir / mc["tap"]) if mc["tap"] else None
    counts = sample_trials(params, batch, n_workers=mc["n_workers"],
                           tap_path=tap_path)
    estimates = estimate(counts, params.eta2)

    payload = {
        "command": "simulate",
        "params": params,
        "detector_kind": batch.detector_kind,
        "n_trials": batch.n_trials,
        "seed": batch.seed,
        "counts": counts,
        "estimates": estimates,
    }
    outputs = [_write_json(out_dir / "simulate_result.json", payload)]
    if args.format == "csv":
        header = ["n_trials", "seed", "k1", "k2a", "k2b", "k2", "k12",
                  "k1_2a", "k1_2b", "k_triple"]
        row = [batch.n_trials, batch.seed, counts.k1, counts.k2a, counts.k2b,
               counts.k2, counts.k12, counts.k1_2a, counts.k1_2b,
               counts.k_triple]
        for name in ("g12", "pc", "qc", "w"):
            est = getattr(estimates, name)
            header += [name, f"{name}_sigma"]
            row += [None if math.isnan(est.value) else est.value,
                    None if math.isnan(est.sigma) else est.sigma]
        outputs.append(_write_csv(out_dir / "simulate_result.csv", header,
                                  [row]))
    if tap_path:
        outputs.append(tap_path)

    parameters = {"model": _jsonable(params), "n_trials": batch.n_trials,
                  "seed": batch.seed, "detector_kind": batch.detector_kind,
                  "batch_size": batch.batch_size,
                  "n_workers": mc["n_workers"], "tap": mc["tap"]}
    inputs = [args.config] if args.config else []
    _write_manifest(out_dir, "simulate", "simulate", parameters, [batch.seed],
                    inputs, outputs)
    g12 = estimates.g12
    print(f"simulate: {batch.n_trials} trials, seed {batch.seed}, "
          f"g12 = {g12.value:.4g} +- {g12.sigma:.2g}")
    return 0


def _aux_decay(args, cfg, out_dir: Path):
    section = cfg.get("decay", parse_decay({}))
    decay = section["model"]
    if section["fwhm_hz"] is not None:
        decay = physics.DecayModel(
            q0=section["q0"], tau=physics.tau_from_broadening(section["fwhm_hz"]))
    t = np.linspace(0.0, section["t_max_s"], section["n_points"])
    qc = physics.retrieval_vs_time(decay, t)
    outputs = [_write_csv(out_dir / "decay.csv", ("t_us", "qc"),
                          zip(t * 1e6, qc))]
    if args.plot:
        outputs.append(plotting.decay_figure(t, qc, out_dir / "decay.png"))
    return outputs, {"q0": decay.q0, "tau_s": decay.tau,
                     "fwhm_hz": section["fwhm_hz"],
                     "t_max_s": section["t_max_s"],
                     "n_points": section["n_points"]}


def _aux_spectrum(args, cfg, out_dir: Path):
    section = cfg.get("spectrum", parse_spectrum({}))
    delta = np.linspace(-section["delta_max_hz"], section["delta_max_hz"],
                        section["n_points"])
    transmission = physics.transmission_profile(section["params"], delta)
    outputs = [_write_csv(out_dir / "spectrum.csv",
                          ("delta_mhz", "transmission"),
                          zip(delta / 1e6, transmission))]
    if args.plot:
        outputs.append(plotting.spectrum_figure(delta, transmission,
                                                out_dir / "spectrum.png"))
    return outputs, {"od": section["od"], "gamma_hz": section["gamma_hz"],
                     "delta_max_hz": section["delta_max_hz"],
                     "n_points": section["n_points"]}


def _aux_filter(args, cfg, out_dir: Path):
    section = cfg.get("filter", parse_filter_section({}))
    chain = section["chain"]
    budget = physics.chain_budget(chain, section["input_power_w"],
                                  section["wavelength_m"])
    rows = [[stage.name, stage.isolation_db, stage.transmission, None]
            for stage in chain.stages]
    rows.append(["total", budget.total_isolation_db,
                 budget.total_transmission, budget.leakage_photon_rate_hz])
    outputs = [_write_csv(out_dir / "filter.csv",
                          ("name", "isolation_db", "transmission",
                           "leakage_photon_rate_hz"), rows)]
    if args.plot:
        outputs.append(plotting.filter_figure(chain, out_dir / "filter.png"))
    print(f"filter total: {budget.total_isolation_db:g} dB, "
          f"{budget.total_transmission:.2f}")
    return outputs, {"stages": _jsonable(chain.stages),
                     "input_power_w": section["input_power_w"],
                     "wavelength_m": section["wavelength_m"]}


def _aux_timing(args, cfg, out_dir: Path):
    seq = cfg.get("sequence", physics.SequenceConfig.default())
    section = cfg.get("timing", parse_timing({}))
    summary = physics.rates(seq, section["p1"], pc=section["pc"])
    header = ("p1", "trial_period_us", "trials_per_cycle", "cycle_rate_hz",
              "protocol_duration_ms", "duty_fraction", "in_protocol_hz",
              "averaged_hz", "pairs_hz")
    row = [section["p1"], seq.trial_period * 1e6, seq.trials_per_cycle,
           seq.cycle_rate, seq.protocol_duration * 1e3, seq.duty_fraction,
           summary.in_protocol_hz, summary.averaged_hz, summary.pairs_hz]
    outputs = [_write_csv(out_dir / "timing.csv", header, [row]),
               _write_csv(out_dir / "timing_phases.csv",
                          ("phase", "duration_ms"),
                          [[name, duration * 1e3]
                           for name, duration in seq.phases])]
    if args.plot:
        outputs.append(plotting.timing_figure(seq, out_dir / "timing.png"))
    return outputs, {"sequence": _jsonable(seq), "p1": section["p1"],
                     "pc": section["pc"]}


def _aux_hbt(args, cfg, out_dir: Path):
    section = cfg.get("hbt", parse_hbt({}))
    template = cfg.get("model", model.ModelParams.defaults())
    p_values = np.geomspace(section["p_min"], section["p_max"],
                            section["n_points"])
    rows = []
    for p in p_values:
        point = model.figure_of_merit(template.at(float(p)))
        w_model = model.antibunching_model(template.at(float(p)),
                                           n_max=section["n_max"],
                                           kind=section["kind"])
        rows.append([point.g12, model.antibunching_ideal(point.g12), w_model])
    outputs = [_write_csv(out_dir / "hbt.csv",
                          ("g12", "w_ideal", "w_model"), rows)]
    if args.plot:
        g12, w_ideal, w_model = (np.array([r[i] for r in rows])
                                 for i in range(3))
        outputs.append(plotting.hbt_figure(g12, w_ideal, w_model,
                                           out_dir / "hbt.png"))
    return outputs, {"model": _jsonable(template),
                     "p_values": _jsonable(p_values),
                     "n_max": section["n_max"], "kind": section["kind"]}


def _aux_wavepacket(args, cfg, out_dir: Path):
    section = cfg.get("wavepacket", parse_wavepacket({}))
    t = np.linspace(-section["t_max_s"], section["t_max_s"],
                    section["n_points"])
    amplitude = physics.wavepacket(t, section["width_s"])
    outputs = [_write_csv(out_dir / "wavepacket.csv", ("t_ns", "amplitude"),
                          zip(t * 1e9, amplitude))]
    if args.plot:
        outputs.append(plotting.wavepacket_figure(t, amplitude,
                                                  out_dir / "wavepacket.png"))
    return outputs, {"width_s": section["width_s"],
                     "t_max_s": section["t_max_s"],
                     "n_points": section["n_points"]}


_AUX_HANDLERS = {
    "decay": _aux_decay,
    "spectrum": _aux_spectrum,
    "filter": _aux_filter,
    "timing": _aux_timing,
    "hbt": _aux_hbt,
    "wavepacket": _aux_wavepacket,
}


def cmd_aux(args, cfg, out_dir: Path) -> int:
    outputs, parameters = _AUX_HANDLERS[args.topic](args, cfg, out_dir)
    inputs = [args.config] if args.config else []
    _write_manifest(out_dir, f"aux_{args.topic}", f"aux {args.topic}",
                    parameters, [], inputs, outputs)
    print(f"wrote {outputs[0]}")
    return 0


_COMMANDS = {
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "aux": cmd_aux,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = load_config(args.config) if args.config else {}
        return _COMMANDS[args.command](args, cfg, out_dir)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
