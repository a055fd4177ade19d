"""Execute an ExperimentConfig and write its CSV table and JSON summary."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .. import bohm
from ..conescan import RadialSpec, momentum_cone_probability, sict_convergence_scan
from ..flux import (asymptotic_integrated_flux, asymptotic_integrated_flux_by_time,
                    integrated_flux, log_finite_window_flux, remainder_bounds)
from ..geometry import SphereCap, cap_quadrature

SCHEMA_VERSION = 1
CSV_MAGIC = "fasflux-csv"


@dataclass(frozen=True)
class RunResult:
    experiment: str
    columns: tuple
    rows: list
    summary: dict
    csv_path: Path | None = None
    json_path: Path | None = None


def _strictly_decreasing(values):
    return all(b < a for a, b in zip(values, values[1:]))


def _fas_scan(cfg, workers):
    spec = RadialSpec(angular_order=cfg.angular_order)
    target = momentum_cone_probability(cfg.packet, cfg.cone, spec).value
    rows = []
    for R in cfg.R_list:
        T = R / cfg.R_over_T if cfg.R_over_T else cfg.T
        cap = SphereCap(R, cfg.cone)
        rule = cap_quadrature(cap, cfg.angular_order)
        res = integrated_flux(cfg.packet, cap, T, cfg.tolerances.epsilon_tail, rule,
                              cfg.tolerances.time_tol)
        row = {"R": R, "T": T, "signed": res.signed, "absolute": res.absolute,
               "momentum_prob": target, "gap": abs(res.signed - target),
               "abs_minus_signed": res.absolute - res.signed, "tail_bound": res.tail_bound,
               "quad_error": res.quad_error}
        if T > 0:
            by_v = asymptotic_integrated_flux(cfg.packet, cap, T, spec)
            by_t = asymptotic_integrated_flux_by_time(cfg.packet, cap, T, rule=rule)
            row.update(asym_v=by_v, asym_time=by_t, identity_gap=abs(by_v - by_t))
        rows.append(row)
    gaps = [r["gap"] for r in rows]
    summary = {"momentum_prob": target, "gap_strictly_decreasing": _strictly_decreasing(gaps),
               "final_relative_gap": gaps[-1] / target}
    return rows, summary


def _sict(cfg, workers):
    scan = sict_convergence_scan(cfg.packet, cfg.cone, cfg.times,
                                 RadialSpec(angular_order=cfg.angular_order))
    rows = [{"t": r.t, "position_prob": r.value, "momentum_prob": r.momentum_value, "gap": r.gap}
            for r in scan]
    return rows, {"final_gap": rows[-1]["gap"]}


def _bohm(cfg, workers):
    rows = []
    ens, tol = cfg.ensemble, cfg.tolerances
    for R in cfg.R_list:
        stats = bohm.crossing_statistics(cfg.packet, R, cfg.cone, ens.n, ens.seed,
                                         ens.t_budget, tol.ode_tol, workers)
        cap = SphereCap(R, cfg.cone)
        flux = integrated_flux(cfg.packet, cap, 0.0, tol.epsilon_tail,
                               cap_quadrature(cap, cfg.angular_order), tol.time_tol)
        rows.append({
            "R": R, "half_angle_deg": cfg.cone_spec["half_angle_deg"], "n": stats.n,
            "estimate": stats.estimate, "ci95": stats.ci95,
            "multi_cross_frac": stats.multi_cross_fraction, "abort_frac": stats.abort_fraction,
            "seed": stats.seed, "mean_signed": stats.mean_signed_crossings,
            "signed_ci95": stats.signed_ci95, "mean_total": stats.mean_total_crossings,
            "total_ci95": stats.total_ci95, "signed_flux": flux.signed,
            "absolute_flux": flux.absolute})
    summary = {
        "estimate_within_3ci": [abs(r["estimate"] - r["signed_flux"]) <= 3 * r["ci95"]
                                for r in rows],
        "total_within_3ci": [abs(r["mean_total"] - r["absolute_flux"]) <= 3 * r["total_ci95"]
                             for r in rows],
    }
    return rows, summary


def _remainder(cfg, workers):
    diag = remainder_bounds(cfg.packet, cfg.R_list, cfg.T, cfg.tolerances.epsilon_tail)
    rows = [{"R": R, "fas_distance": d, "c_f": diag.c_f, "c_g": diag.c_g,
             "sup_f": diag.sup_f_sampled, "sup_g": diag.sup_g_sampled, "samples": diag.samples,
             "violations_f": diag.violations_f, "violations_g": diag.violations_g}
            for R, d in diag.cross_term_decay]
    summary = {"l1_psi": diag.l1_psi, "l1_ypsi": diag.l1_ypsi,
               "fas_strictly_decreasing": _strictly_decreasing([r["fas_distance"] for r in rows])}
    return rows, summary


def _window(cfg, workers):
    T1, T2 = cfg.window
    rows = []
    for R in cfg.R_list:
        log_w = log_finite_window_flux(cfg.packet, R, T1, T2)
        rows.append({"R": R, "T1": T1, "T2": T2, "log_flux": log_w, "flux": math.exp(log_w)})
    return rows, {"log_flux_strictly_decreasing":
                  _strictly_decreasing([r["log_flux"] for r in rows])}


_RUNNERS = {"fas-scan": _fas_scan, "sict": _sict, "bohm": _bohm, "remainder": _remainder,
            "window": _window}


def _cell(value):
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def write_csv(path, experiment, columns, rows):
    lines = [f"# {CSV_MAGIC} v{SCHEMA_VERSION} experiment={experiment}", ",".join(columns)]
    lines += [",".join(_cell(row.get(c, math.nan)) for c in columns) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def run(config, out_dir=None, workers=1):
    """Run one experiment; write ``<kind>.csv`` and ``<kind>.json`` when ``out_dir`` is given."""
    rows, summary = _RUNNERS[config.experiment](config, workers)
    columns = []
    for row in rows:
        columns += [c for c in row if c not in columns]
    csv_path = json_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{config.experiment}.csv"
        json_path = out / f"{config.experiment}.json"
        write_csv(csv_path, config.experiment, columns, rows)
        doc = {"schema": f"{CSV_MAGIC}/v{SCHEMA_VERSION}", "experiment": config.experiment,
               "config": config.as_dict(), "rows": rows, "summary": summary}
        json_path.write_text(json.dumps(_json_safe(doc), indent=2) + "\n", encoding="utf-8")
    return RunResult(config.experiment, tuple(columns), rows, summary, csv_path, json_path)
