"""PNG renderings of task results (needs matplotlib, an optional dependency)."""

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .config import Task  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _trace(res, run):
    cols, data = res["trace"]
    idx = {c: i for i, c in enumerate(cols)}
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = data[idx["t_over_2T"]]
    for name in ("jx", "jy", "jz"):
        ax.plot(x, data[idx[name]], label=name)
    if "delta_jx" in idx:
        ax.plot(x, data[idx["delta_jx"]], "r", lw=0.8, label="delta jx (probe)")
    ax.set_xlabel("t / 2T")
    ax.set_ylabel("J / N")
    ax.legend(fontsize=8)
    return [_save(fig, run.out / "trace.png")]


def _sweep_grid(points, omega, g1, field):
    grid = np.full((len(g1), len(omega)), np.nan)
    oi = {float(w): i for i, w in enumerate(omega)}
    gi = {float(g): j for j, g in enumerate(g1)}
    for pt in points:
        if pt.seed_kind == "tilted" and pt.result is not None:
            grid[gi[pt.g1_ratio], oi[pt.omega_ratio]] = field(pt)
    return grid


def _floquet_sweep(res, run):
    pts, om, g1 = res["points"], res["omega"], res["g1"]
    g0 = run.scales.gamma0
    gam = _sweep_grid(pts, om, g1, lambda pt: pt.result.gamma_fl / g0)
    nu = _sweep_grid(pts, om, g1, lambda pt: pt.result.nu_fl / (0.5 * pt.params.omega))
    paths = []
    for name, z, label in (("gamma", gam, "gamma_Fl / gamma0"), ("nu", nu, "nu_Fl / (omega/2)")):
        fig, ax = plt.subplots(figsize=(5, 4))
        if len(g1) > 1 and len(om) > 1:
            m = ax.pcolormesh(om, g1, z, shading="nearest")
            fig.colorbar(m, ax=ax, label=label)
            if np.nanmax(gam) > 0 > np.nanmin(gam):
                ax.contour(om, g1, gam, levels=[0.0], colors="k")
            ax.set_ylabel("g1 / g0")
        else:
            ax.plot(om if len(om) > 1 else g1, z.ravel(), "o")
            ax.set_ylabel(label)
        ax.set_xlabel("omega / (2 omega_res)" if len(om) > 1 else "g1 / g0")
        paths.append(_save(fig, run.out / f"floquet-sweep-{name}.png"))
    return paths


def _map(pm, run, name, overlay=None):
    fig, ax = plt.subplots(figsize=(5, 4))
    if len(pm.axis1) > 1 and len(pm.axis2) > 1:
        lim = np.nanmax(np.abs(pm.values)) or 1.0
        m = ax.pcolormesh(pm.axis1, pm.axis2, pm.values.T, shading="nearest", cmap="RdBu_r",
                          vmin=-lim, vmax=lim)
        fig.colorbar(m, ax=ax, label="<I_pr> - <I_0>")
        if overlay:
            ax.plot([r[0] for r in overlay], [r[2] for r in overlay], "ko", mfc="none", ms=3)
            ax.set_ylim(pm.axis2[0], pm.axis2[-1])
        ax.set_xlabel(pm.axis1_name)
        ax.set_ylabel(pm.axis2_name)
    else:
        ax.errorbar(pm.axis2, pm.values.ravel(), pm.stderr.ravel(), fmt="o")
        ax.set_xlabel(pm.axis2_name)
    return [_save(fig, run.out / f"{name}.png")]


def _lineshape(res, run):
    pm, fit = res["map"], res["fit"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(pm.axis2, pm.values[0], pm.stderr[0], fmt="ko", ms=3)
    if fit is not None:
        x = np.linspace(pm.axis2[0], pm.axis2[-1], 400)
        ax.plot(x, fit.model(x), "r")
    ax.set_xlabel("(omega_pr - omega/2) / omega_res")
    ax.set_ylabel("<I_pr> - <I_0>")
    return [_save(fig, run.out / "lineshape.png")]


def _np_spectrum(res, run):
    rows = np.array([[r[0], r[1], r[4]] for r in res["rows"]], dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(rows[:, 0], rows[:, 1], "ko", mfc="none", label="nu_Fl")
    ax.plot(rows[:, 0], rows[:, 2], "rD", ms=4, label="epsilon")
    ax.set_xlabel("omega / (2 omega_res)")
    ax.set_ylabel("frequency / omega_res")
    ax.legend()
    return [_save(fig, run.out / "np-spectrum.png")]


def _hysteresis(res, run):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(res["omega"], [a.order_param for a in res["up"]], "b^-", label="up")
    ax.plot(res["omega"], [a.order_param for a in res["down"]], "rv--", label="down")
    ax.set_xlabel("omega / (2 omega_res)")
    ax.set_ylabel("<Jx^2>_T / N^2")
    ax.legend()
    return [_save(fig, run.out / "hysteresis.png")]


def render(task, result, run):
    """Write the figure(s) for ``task`` and return their paths."""
    if task is Task.TRACE:
        return _trace(result, run)
    if task is Task.FLOQUET_SWEEP:
        return _floquet_sweep(result, run)
    if task is Task.PROBE_MAP:
        return _map(result["map"], run, "probe-map", result["overlay"])
    if task is Task.PHASE_SCAN:
        return _map(result["map"], run, "phase-scan")
    if task is Task.LINESHAPE:
        return _lineshape(result, run)
    if task is Task.NP_SPECTRUM:
        return _np_spectrum(result, run)
    if task is Task.HYSTERESIS:
        return _hysteresis(result, run)
    return []
