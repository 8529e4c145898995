"""Figures for experiment results, rendered off-screen to image files."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import ExperimentResult  # noqa: E402


def _col(rows, key, cast=float):
    return np.array([cast(r[key]) for r in rows])


def _groups(rows, key):
    out = defaultdict(list)
    for r in rows:
        out[r[key]].append(r)
    return dict(out)


def _fidelity(ax, res):
    rows = res.rows
    ax.errorbar(_col(rows, "delta_ref"), _col(rows, "estimate"), yerr=_col(rows, "stderr"), fmt="o", ms=4,
                capsize=2, label="estimate")
    ax.plot(_col(rows, "delta_ref"), _col(rows, "exact"), "-", label="exact")
    ax.set_xlabel(r"$\Delta_\mathrm{ref}/\Omega$")
    ax.set_ylabel("fidelity")


def _energy(ax, res):
    for tau, rows in _groups(res.rows, "tau").items():
        line, = ax.plot(_col(rows, "site"), _col(rows, "exact"), "-")
        ax.errorbar(_col(rows, "site"), _col(rows, "estimate"), yerr=_col(rows, "stderr"), fmt="o", ms=4,
                    capsize=2, color=line.get_color(), label=rf"$\tau$={tau / (2 * np.pi):.3g}$\cdot 2\pi$")
    ax.set_xlabel("site")
    ax.set_ylabel(r"$\langle E_i\rangle$")


def _entropy(ax, res):
    for tau, rows in _groups(res.rows, "tau").items():
        line, = ax.plot(_col(rows, "l"), _col(rows, "exact"), "-")
        ax.errorbar(_col(rows, "l"), _col(rows, "estimate"), yerr=_col(rows, "stderr"), fmt="o", ms=4,
                    capsize=2, color=line.get_color(), label=rf"$\tau$={tau / (2 * np.pi):.3g}$\cdot 2\pi$")
    ax.set_xlabel("block length L")
    ax.set_ylabel(r"$S_2$")


def _bcs(ax, res):
    for k, (pairing, rows) in enumerate(_groups(res.rows, "pairing").items()):
        x = np.arange(len(rows)) + 0.35 * k
        ax.bar(x, _col(rows, "estimate"), width=0.35, yerr=_col(rows, "stderr"), capsize=2, label=pairing)
        ax.plot(x, _col(rows, "exact"), "k_", ms=12)
    labels = [f"({r['jx']},{r['jy']})" for r in _groups(res.rows, "pairing")["d-wave"]]
    ax.set_xticks(np.arange(len(labels)) + 0.175, labels)
    ax.set_xlabel("neighbour j")
    ax.set_ylabel("Re C(0, j, 1_y, 0)")


def _mbcn(ax, res):
    rows = res.rows
    re, im = _col(rows, "re_T"), _col(rows, "im_T")
    ax.errorbar(np.append(re, re[0]), np.append(im, im[0]), xerr=np.append(_col(rows, "stderr_re"), 0),
                yerr=np.append(_col(rows, "stderr_im"), 0), fmt="o-", ms=3, capsize=1, label="estimate")
    ex_re, ex_im = _col(rows, "exact_re"), _col(rows, "exact_im")
    ax.plot(np.append(ex_re, ex_re[0]), np.append(ex_im, ex_im[0]), "-", label="exact")
    ax.plot([0], [0], "k+", ms=10)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel(r"Re $\langle T(\varphi)\rangle$")
    ax.set_ylabel(r"Im $\langle T(\varphi)\rangle$")


def _currents(ax, res):
    rows = res.rows
    edge = _col(rows, "edge", bool)
    for mask, label in ((edge, "edge"), (~edge, "bulk")):
        ax.errorbar(_col(rows, "exact")[mask], _col(rows, "estimate")[mask], yerr=_col(rows, "stderr")[mask],
                    fmt="o", ms=4, capsize=2, label=label)
    lim = np.max(np.abs(_col(rows, "exact"))) * 1.2
    ax.plot([-lim, lim], [-lim, lim], "k:", lw=1)
    ax.set_xlabel("exact current")
    ax.set_ylabel("estimated current")


def _lr(ax, res):
    for key, rows in _groups(res.rows, "n_sys").items():
        for b, sub in _groups(rows, "boundaries").items():
            var = np.clip(_col(sub, "var"), None, 1e6)
            ax.semilogy(_col(sub, "t"), var, "-", label=f"N={key}, {b} boundar{'y' if b == 1 else 'ies'}")
    ax.axhline(res.summary.get("threshold", 1.5), color="k", ls=":", lw=1)
    ax.set_xlabel(r"quench time $t\Omega$")
    ax.set_ylabel(r"Var$[o_z]$")


def _noise(ax, res):
    for i, rows in _groups(res.rows, "observable").items():
        line, = ax.semilogy(_col(rows, "gamma_t"), _col(rows, "ratio"), "o-", ms=3)
        ax.semilogy(_col(rows, "gamma_t"), _col(rows, "scale_ratio"), "s--", ms=3, color=line.get_color())
    g = np.unique(_col(res.rows, "gamma_t"))
    ax.semilogy(g, np.exp(2 * g), "k-", lw=2, label=r"$e^{2\gamma t}$")
    ax.set_xlabel(r"$\gamma t$")
    ax.set_ylabel("ratio to noiseless")


def _bound(ax, res):
    rows = res.rows
    ax.loglog(_col(rows, "bound"), _col(rows, "error"), "o", ms=4)
    b = _col(rows, "bound")
    ax.plot([b.min(), b.max()], [b.min(), b.max()], "k:", lw=1)
    ax.set_xlabel("bound")
    ax.set_ylabel(r"$|\Delta_O|$")


def _generic(ax, res):
    rows = res.rows
    y = _col(rows, "estimate")
    ax.errorbar(np.arange(len(y)), y, yerr=_col(rows, "stderr"), fmt="o", capsize=2, label="estimate")
    if rows and "exact" in rows[0]:
        ax.plot(np.arange(len(y)), _col(rows, "exact"), "x", label="exact")
    ax.set_xlabel("row")
    ax.set_ylabel("value")


RENDERERS = {
    "rydberg-fidelity": _fidelity, "rydberg-energy": _energy, "rydberg-entropy": _entropy,
    "bcs-dwave": _bcs, "hbh-mbcn": _mbcn, "hbh-currents": _currents, "lr-scan": _lr,
    "noise-scan": _noise, "systematic-bound": _bound,
}


def render(result: ExperimentResult, path) -> Path:
    """Draw the figure for ``result`` and save it to ``path`` (format from the suffix)."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    RENDERERS.get(result.kind, _generic)(ax, result)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    ax.set_title(result.kind, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamps or version strings, so reruns give identical files
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
