"""Plot data (CSV) and rendered figures (PNG) for verification runs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import two_point as tp  # noqa: E402


def _write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _profile_line(field_, rotation_axis):
    """Curvatures along the generator that is not the rotation orbit."""
    if rotation_axis == 0:
        return field_.lam1[0, :], field_.lam2[0, :]
    return field_.lam1[:, 0], field_.lam2[:, 0]


def curvature_profile(out, field_, rotation_axis):
    l1, l2 = _profile_line(field_, rotation_axis)
    idx = np.arange(l1.size)
    _write_csv(out / "curvature_profile.csv", ["index", "lambda1", "lambda2", "spread"],
               zip(idx, l1, l2, l1 - l2))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(idx, l1, label="lambda1")
    ax.plot(idx, l2, label="lambda2")
    ax.plot(idx, l1 - l2, "--", label="lambda1 - lambda2")
    ax.set_xlabel("grid index along the profile")
    ax.set_ylabel("principal curvature")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "curvature_profile.png", dpi=120)
    plt.close(fig)


def z_slice(out, field_, scan):
    """Z_1(xbar, y) over every y, with xbar the scan's argmin."""
    n_t, n_th = field_.shape
    (i, j), _ = scan.argmin
    yy = np.stack(np.meshgrid(np.arange(n_t), np.arange(n_th), indexing="ij"), axis=-1).reshape(-1, 2)
    xx = np.tile([i, j], (yy.shape[0], 1))
    z = tp.evaluate_Z(field_, 1.0, xx, yy)
    _write_csv(out / "z_slice.csv", ["i", "j", "z"], ((a, b, c) for (a, b), c in zip(yy, z)))
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(z.reshape(n_t, n_th), origin="lower", aspect="auto", cmap="viridis")
    ax.set_xlabel("j (second index of y)")
    ax.set_ylabel("i (first index of y)")
    ax.set_title(f"Z_1(x, y) at x = ({i}, {j})")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(out / "z_slice.png", dpi=120)
    plt.close(fig)


def singular_values(out, fit):
    sv = np.asarray(fit.singular_values, dtype=float)
    _write_csv(out / "singular_values.csv", ["index", "sigma"], zip(range(1, sv.size + 1), sv))
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(np.arange(1, sv.size + 1), np.maximum(sv, 1e-300))
    ax.set_yscale("log")
    ax.set_xlabel("index")
    ax.set_ylabel("singular value of Q")
    fig.tight_layout()
    fig.savefig(out / "singular_values.png", dpi=120)
    plt.close(fig)


def residual_overview(out, report):
    rows = []
    for c in report.checks:
        if "max_abs" in c and "tolerance" in c:
            rows.append((c["name"], c["max_abs"], c["tolerance"], c["pass"]))
    _write_csv(out / "residuals.csv", ["name", "max_abs", "tolerance", "pass"], rows)
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(7, 0.3 * len(rows) + 1.2))
    names = [r[0] for r in rows]
    vals = [abs(r[1]) if r[1] else 1e-300 for r in rows]
    tols = [abs(r[2]) if r[2] else 1e-300 for r in rows]
    y = np.arange(len(rows))
    ax.barh(y, vals, color=["tab:green" if r[3] else "tab:red" for r in rows])
    ax.scatter(tols, y, marker="|", color="k", s=200, label="tolerance")
    ax.set_xscale("log")
    ax.set_yticks(y, names)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out / "residuals.png", dpi=120)
    plt.close(fig)


def write_plots(directory, grid, report, artifacts):
    """Emit every available plot as CSV data plus a PNG figure; returns the file names."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    field_ = artifacts.get("field")
    if field_ is not None:
        curvature_profile(out, field_, grid.rotation_axis)
        if artifacts.get("scan") is not None:
            z_slice(out, field_, artifacts["scan"])
    if artifacts.get("fit") is not None:
        singular_values(out, artifacts["fit"])
    residual_overview(out, report)
    return sorted(p.name for p in out.iterdir())
