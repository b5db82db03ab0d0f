"""Batch front end: ``dtc <task> --config file.yaml [--set key=value ...]``.

Every task writes one CSV named after the task into the output directory
plus ``manifest.json`` (config echo, package versions, seeds, wall time,
artifact checksums).  Grid cells are farmed out to a process pool; results
come back in grid order and only the parent process writes files.

Exit status: 0 on success (also when individual grid points failed; those
are listed as warnings), 2 for configuration errors, 3 when the task as a
whole hit a numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, config, floquet, meanfield, wigner
from .errors import ConfigError, IllConditioned, NumericalError, OutsideDomain
from .io import write_csv
from .model import derive_scales

log = logging.getLogger("dtcfloquet")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


@contextmanager
def _mapper(workers):
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # chunksize 1 lets idle workers pick up the next cell; map keeps order
        yield lambda fn, items: pool.map(fn, list(items), chunksize=1)


class _Run:
    """State shared by the task functions of one invocation."""

    def __init__(self, cfg: config.RunConfig, mapper):
        self.cfg = cfg
        self.map = mapper
        self.out = Path(cfg.output_dir)
        self.artifacts = []
        self.warnings = []
        self.failures = []
        self.hash = cfg.result_hash()
        self.scales = derive_scales(cfg.model)

    def csv(self, name, columns, rows, units=None, **meta):
        head = {"config_hash": self.hash, "task": self.cfg.task.slug}
        if units:
            head["units"] = units
        head.update(meta)
        path = write_csv(self.out / name, columns, rows, meta=head)
        self.artifacts.append(path)
        return path

    def fail(self, where, msg):
        self.failures.append({"where": where, "error": msg})
        self.warnings.append(f"{where}: {msg}")

    def floquet_kw(self):
        f = self.cfg.floquet
        return {"tilt": f["tilt"], "relax_periods": f["relax_periods"], "tol": f["tol"],
                "n_cut": f["n_cut"], "refine_tol": f["refine_tol"], "max_n_cut": f["max_n_cut"]}


def _omega_at(run, ratio):
    return 2.0 * ratio * run.scales.omega_res


def _seed_state(kind, n_atoms, tilt):
    if kind == "np":
        return meanfield.SpinState.normal_phase(n_atoms)
    if kind == "large":
        return meanfield.SpinState.tilted(n_atoms, floquet.LARGE_TILT)
    if kind == "tilted":
        return meanfield.SpinState.tilted(n_atoms, tilt)
    raise ConfigError(f"unknown seed kind {kind!r}")


# ---------------------------------------------------------------- tasks

def task_trace(run):
    cfg, p = run.cfg, run.cfg.model
    tr = cfg.trace
    n = p.n_atoms
    seed = _seed_state(tr["seed"], n, cfg.floquet["tilt"])
    p0 = p.replace(probe=None)
    t0, s0 = 0.0, seed.as_array()
    if tr["relax"]:
        att = meanfield.find_attractor(p0, seed, relax_periods=cfg.floquet["relax_periods"],
                                       tol=cfg.floquet["tol"])
        if not att.converged:
            run.warnings.append("trace: attractor search did not converge; tracing anyway")
        t0, s0 = att.cycle.t0, att.cycle.samples[0]
    base = meanfield.integrate_periods(p0, s0, tr["periods"], tr["n_cut"], t0=t0)
    cols = ["t", "t_over_2T", "jx", "jy", "jz"]
    x = (base.times - t0) / (2.0 * p.period)
    data = [base.times, x, *(base.samples / n).T]
    if tr["with_probe"]:
        pp = p if p.probe is not None else p.with_probe(
            cfg.probe["eta0"], 0.5 * p.omega + cfg.probe["offset"] * run.scales.omega_res,
            cfg.probe["phi"])
        pr = meanfield.integrate_periods(pp, s0, tr["periods"], tr["n_cut"], t0=t0,
                                         with_probe=True)
        cols += ["jx_pr", "jy_pr", "jz_pr", "delta_jx"]
        data += [*(pr.samples / n).T, (pr.samples[:, 0] - base.samples[:, 0]) / n]
    run.csv("trace.csv", cols, zip(*data), units="kappa=1; spin components / N")
    return {"trace": (cols, np.array(data))}


def _point_rows(run, points):
    nan = math.nan
    rows = []
    for pt in points:
        att, res = pt.attractor, pt.result
        if res is None:
            fl = [nan, nan, nan, nan, "", nan, ""]
        else:
            fl = [res.gamma_fl, res.nu_fl, res.gamma_fl / run.scales.gamma0,
                  res.nu_fl / (0.5 * pt.params.omega), res.classification.value,
                  res.trivial_defect, res.n_cut]
        rows.append([pt.omega_ratio, pt.g1_ratio, pt.seed_kind,
                     att.kind.value if att else "", *fl[:6],
                     att.order_param if att else nan, att.residual if att else nan,
                     fl[6], pt.bistable, pt.error or ""])
        if pt.error:
            run.fail(f"omega={pt.omega_ratio:g} g1={pt.g1_ratio:g} seed={pt.seed_kind}",
                     pt.error)
    return rows


_SWEEP_COLUMNS = ["omega", "g1_ratio", "seed_kind", "attractor", "gamma_fl", "nu_fl",
                  "gamma_over_gamma0", "nu_over_half_omega", "classification",
                  "trivial_defect", "order_param", "residual", "n_cut", "bistable", "error"]
_SWEEP_UNITS = ("omega in 2*omega_res; g1_ratio = g1/g0; gamma_fl, nu_fl in kappa; "
                "order_param = <Jx^2>_T / N^2")


def task_attractor(run):
    cfg = run.cfg
    p = cfg.model.replace(probe=None)
    ratio = p.omega / (2 * run.scales.omega_res)
    g1r = p.g1 / p.g0 if p.g0 > 0 else 0.0
    points = floquet.spectrum_point(p, ratio, g1r, seeds=tuple(cfg.floquet["seeds"]),
                                    **run.floquet_kw())
    if all(pt.error for pt in points):
        raise NumericalError("no seed reached a converged attractor: "
                             + "; ".join(pt.error for pt in points))
    rows = _point_rows(run, points)
    run.csv("attractor.csv", _SWEEP_COLUMNS, rows, units=_SWEEP_UNITS)
    return {"points": points}


def task_floquet_sweep(run):
    cfg = run.cfg
    p = cfg.model.replace(probe=None)
    om, g1 = cfg.axis("omega"), cfg.axis("g1_ratio")
    points = floquet.spectrum_sweep(p, om, g1, seeds=tuple(cfg.floquet["seeds"]),
                                    mapper=run.map, **run.floquet_kw())
    rows = _point_rows(run, points)
    run.csv("floquet-sweep.csv", _SWEEP_COLUMNS, rows, units=_SWEEP_UNITS,
            gamma0=run.scales.gamma0, omega_res=run.scales.omega_res)
    return {"points": points, "omega": om, "g1": g1}


class _HysteresisJob:
    def __init__(self, p, grid, kw):
        self.p, self.grid, self.kw = p, grid, kw

    def __call__(self, direction):
        return meanfield.hysteresis_scan(self.p, self.grid, direction, **self.kw)


def task_hysteresis(run):
    cfg = run.cfg
    p = cfg.model.replace(probe=None)
    ratios = cfg.axis("omega")
    grid = np.array([_omega_at(run, r) for r in ratios])
    kw = {"tilt": cfg.floquet["tilt"], "relax_periods": cfg.floquet["relax_periods"],
          "tol": cfg.floquet["tol"], "n_cut": min(cfg.floquet["n_cut"], 1024)}
    dirs = [meanfield.Direction.UP, meanfield.Direction.DOWN]
    up, down = run.map(_HysteresisJob(p, grid, kw), dirs)
    thresh = 1e-6
    rows = []
    for i, r in enumerate(ratios):
        ou, od = up[i].order_param, down[i].order_param
        split = (up[i].converged and down[i].converged
                 and (ou > thresh) != (od > thresh))
        for name, info in (("up", up[i]), ("down", down[i])):
            rows.append([r, name, info.kind.value, info.order_param, info.residual, split])
            if not info.converged:
                run.warnings.append(f"hysteresis {name} omega={r:g}: unconverged")
    run.csv("hysteresis.csv", ["omega", "direction", "attractor", "order_param", "residual",
                               "bistable"], rows, units=_SWEEP_UNITS)
    return {"up": up, "down": down, "omega": ratios}


def _ensemble(run):
    return run.cfg.ensemble


def task_probe_map(run):
    cfg = run.cfg
    om, off = cfg.axis("omega"), cfg.axis("offset")
    blocks = 1 if len(om) >= cfg.workers else cfg.workers
    pm = wigner.probe_response_map(cfg.model.replace(probe=None), om, off, _ensemble(run),
                                   eta0=cfg.probe["eta0"], phi=cfg.probe["phi"],
                                   mapper=run.map, blocks_per_cell=blocks)
    for i, msg in pm.failed.items():
        run.fail(f"omega={om[i]:g}", msg)
    pm.to_csv(run.out / "probe-map.csv",
              meta={"config_hash": run.hash, "task": cfg.task.slug,
                    "units": "omega in 2*omega_res; omega_pr_offset in omega_res; "
                             "value = <I_pr> - <I_0> photons",
                    "seed": cfg.ensemble.seed, "eta0": cfg.probe["eta0"]})
    run.artifacts.append(run.out / "probe-map.csv")
    # Floquet branches on the same axes for co-plotting
    pts = floquet.spectrum_sweep(cfg.model.replace(probe=None), om, None, seeds=("tilted",),
                                 mapper=run.map, **run.floquet_kw())
    sweep = [(pt.params, pt.result) for pt in pts if pt.result is not None]
    rows = []
    for br in (analysis.Branch.UPPER, analysis.Branch.LOWER):
        for (x, y), (_, res) in zip(analysis.overlay_in_axes(sweep, br), sweep):
            rows.append([x, br.value, y, res.classification.value])
    run.csv("probe-map-overlay.csv", ["omega", "branch", "omega_pr_offset", "classification"],
            rows, units="omega in 2*omega_res; omega_pr_offset in omega_res")
    return {"map": pm, "overlay": rows}


def task_lineshape(run):
    cfg = run.cfg
    p = cfg.model.replace(probe=None)
    w = run.scales.omega_res
    ratio = p.omega / (2 * w)
    off = cfg.axis("offset")
    pm = wigner.probe_response_map(p, [ratio], off, _ensemble(run), eta0=cfg.probe["eta0"],
                                   phi=cfg.probe["phi"], mapper=run.map,
                                   blocks_per_cell=max(1, cfg.workers))
    if pm.failed:
        raise NumericalError(pm.failed[0])
    att, res = floquet.analyse_point(p, "tilted", **run.floquet_kw())
    meta = {"omega_ratio": ratio, "seed": cfg.ensemble.seed, "n_traj": pm.n_traj}
    fit = None
    if res is None:
        run.warnings.append("lineshape: attractor unconverged; no Floquet overlay")
    else:
        meta.update(classification=res.classification.value, nu_fl=res.nu_fl,
                    gamma_fl=res.gamma_fl)
        try:
            fit = analysis.lorentzian_overlay(res, np.column_stack([off, pm.values[0]]),
                                              analysis.Branch.UPPER, scale=w)
            meta.update(center=fit.center, width=fit.width, amplitude=fit.amplitude,
                        residual_rms=fit.residual_rms)
        except IllConditioned as exc:
            run.warnings.append(f"lineshape: {exc}")
    rows = [[x, v, s, float(fit.model(x)) if fit else math.nan]
            for x, v, s in zip(off, pm.values[0], pm.stderr[0])]
    run.csv("lineshape.csv", ["omega_pr_offset", "value", "stderr", "lorentzian"], rows,
            units="omega_pr_offset, center, width in omega_res; value in photons", **meta)
    return {"map": pm, "fit": fit, "floquet": res}


def task_np_spectrum(run):
    cfg = run.cfg
    p = cfg.model.replace(probe=None)
    w, g0 = run.scales.omega_res, run.scales.gamma0
    om = cfg.axis("omega")
    pts = floquet.spectrum_sweep(p, om, None, seeds=("np",), mapper=run.map,
                                 **run.floquet_kw())
    flip = analysis.sign_flip_detuning(p)
    rows = []
    for pt in pts:
        res = pt.result
        try:
            eps = analysis.bogoliubov_epsilon(pt.params) / w
            near = abs(w - 0.5 * pt.params.omega) < flip
            note = "sign-flipped: closer to resonance than the zero of epsilon" if near else ""
        except OutsideDomain as exc:
            eps, note = math.nan, str(exc)
        if pt.error:
            run.fail(f"omega={pt.omega_ratio:g}", pt.error)
        rows.append([pt.omega_ratio, res.nu_fl / w if res else math.nan,
                     res.gamma_fl / g0 if res else math.nan,
                     res.classification.value if res else "", eps, note])
    run.csv("np-spectrum.csv", ["omega", "nu_fl", "gamma_over_gamma0", "classification",
                                "epsilon", "domain"], rows,
            units="omega in 2*omega_res; nu_fl, epsilon in omega_res")
    return {"rows": rows}


class _MeanfieldResponseJob:
    def __init__(self, p, kw):
        self.p, self.kw = p, kw

    def __call__(self, variants):
        return meanfield.probe_response(self.p, variants, **self.kw)[0]


def task_phase_scan(run):
    cfg = run.cfg
    p = cfg.model.replace(probe=None)
    phis, off = cfg.axis("phi"), cfg.axis("offset")
    eta0 = cfg.probe["eta0"]
    if cfg.method == "wigner":
        pm = wigner.phase_scan(p, off, phis, _ensemble(run), eta0=eta0, mapper=run.map,
                               blocks=max(1, cfg.workers))
    else:
        w = run.scales.omega_res
        rows = [[(eta0, 0.5 * p.omega + x * w, ph) for x in off] for ph in phis]
        vals = np.array(list(run.map(_MeanfieldResponseJob(p, {}), rows)))
        pm = wigner.ProbeResponseMap("phi", phis, "omega_pr_offset", off, vals,
                                     np.zeros_like(vals), 1, p.n_atoms)
    pm.to_csv(run.out / "phase-scan.csv",
              meta={"config_hash": run.hash, "task": cfg.task.slug, "method": cfg.method,
                    "units": "phi in rad; omega_pr_offset in omega_res; value in photons",
                    "seed": cfg.ensemble.seed, "eta0": eta0})
    run.artifacts.append(run.out / "phase-scan.csv")
    return {"map": pm}


TASKS = {
    config.Task.TRACE: task_trace,
    config.Task.ATTRACTOR: task_attractor,
    config.Task.FLOQUET_SWEEP: task_floquet_sweep,
    config.Task.PROBE_MAP: task_probe_map,
    config.Task.LINESHAPE: task_lineshape,
    config.Task.NP_SPECTRUM: task_np_spectrum,
    config.Task.PHASE_SCAN: task_phase_scan,
    config.Task.HYSTERESIS: task_hysteresis,
}


# ---------------------------------------------------------------- plumbing

def versions():
    from importlib import metadata

    out = {"python": platform.python_version()}
    for name in ("dtcfloquet", "numpy", "scipy", "numba", "pyyaml"):
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = None
    return out


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _resolve_seed(cfg):
    if cfg.raw.get("ensemble", {}).get("seed") is not None:
        return cfg
    seed = 0 if cfg.reproducible else int(np.random.SeedSequence().entropy % 2**63)
    cfg.ensemble = replace(cfg.ensemble, seed=seed)
    cfg.raw.setdefault("ensemble", {})["seed"] = seed
    return cfg


def run(cfg: config.RunConfig):
    """Execute ``cfg``; returns ``(exit_status, manifest_dict)``."""
    warnings, errors = config.validate(cfg)
    if errors:
        raise ConfigError("; ".join(errors))
    cfg = _resolve_seed(cfg)
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    manifest = {"config": cfg.echo(), "versions": versions(),
                "seeds": {"ensemble": cfg.ensemble.seed,
                          "derivation": "Philox(SeedSequence(seed, spawn_key=(cell, traj)))"}}
    status = EXIT_OK
    with _mapper(cfg.workers) as mapper:
        state = _Run(cfg, mapper)
        state.warnings.extend(warnings)
        try:
            result = TASKS[cfg.task](state)
        except NumericalError as exc:
            status = EXIT_NUMERICAL
            state.fail(cfg.task.slug, f"{type(exc).__name__}: {exc}")
            result = None
    if cfg.plot and result is not None:
        try:
            from . import plots
            state.artifacts.extend(plots.render(cfg.task, result, state))
        except ImportError as exc:
            state.warnings.append(f"plots skipped: {exc}")
    manifest.update(
        status=status,
        config_hash=state.hash,
        wall_time_s=time.perf_counter() - t_start,
        artifacts=[{"path": Path(a).name, "sha256": _sha256(a)} for a in state.artifacts],
        warnings=state.warnings,
        failures=state.failures,
    )
    path = Path(cfg.output_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return status, manifest


def build_parser():
    ap = argparse.ArgumentParser(prog="dtc", description=__doc__.splitlines()[0])
    ap.add_argument("task", help="one of " + ", ".join(t.slug for t in config.Task))
    ap.add_argument("--config", "-c", help="YAML or JSON config file (or a manifest.json)")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE", help="override a config entry, e.g. model.n_atoms=1e3")
    ap.add_argument("--workers", "-j", type=int)
    ap.add_argument("--seed", type=int, help="master seed of the stochastic ensembles")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--reproducible", action="store_true",
                    help="fixed default seed; outputs depend only on the config")
    ap.add_argument("--plot", action="store_true", help="also render PNG figures")
    ap.add_argument("--check", action="store_true",
                    help="only validate the configuration and print diagnostics")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if args.seed is not None:
        overrides.append(f"ensemble.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    if args.reproducible:
        overrides.append("reproducible=true")
    if args.plot:
        overrides.append("plot=true")
    try:
        data = config.load_file(args.config) if args.config else {}
        for item in overrides:
            data = config.merge(data, config.parse_override(item))
        if args.check:
            warnings, errors = config.validate_dict(data, task=args.task)
            for w in warnings:
                print(f"warning: {w}")
            for e in errors:
                print(f"error: {e}")
            return EXIT_CONFIG if errors else EXIT_OK
        cfg = config.RunConfig.from_dict(data, task=args.task)
        status, manifest = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in manifest["warnings"]:
        log.warning(w)
    print(json.dumps({"status": status, "output_dir": str(cfg.output_dir),
                      "artifacts": [a["path"] for a in manifest["artifacts"]],
                      "warnings": len(manifest["warnings"]),
                      "wall_time_s": round(manifest["wall_time_s"], 3)}))
    return status


if __name__ == "__main__":
    sys.exit(main())
