"""Report files: JSON, CSV and figures.

Figures are drawn with the Agg backend so no display is needed.
"""

from __future__ import annotations

import csv
import io
import json
import os

import numpy as np

CSV_FIELDS = ("check", "section", "algebra", "pass", "asserted", "tolerance", "expected_from",
              "reference", "inputs_digest", "seconds", "measured", "detail")


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text).strip("_").lower()


def rows_to_csv(report) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in report.rows:
        d = r.to_dict()
        w.writerow({k: (json.dumps(d[k], separators=(",", ":")) if k == "measured" else d[k])
                    for k in CSV_FIELDS})
    return buf.getvalue()


def render(report, fmt: str = "json") -> str:
    """Text form of a report for standard output."""
    if fmt == "csv":
        return rows_to_csv(report)
    if fmt == "json":
        return json.dumps(report.to_json(), indent=1)
    raise ValueError(f"unknown format {fmt!r}")


def write_report(report, out_dir, figures: bool = True) -> list:
    """Write ``report.json``, ``report.csv`` and figures into ``out_dir``.

    Returns
    -------
    list of str
        Paths written.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    p = os.path.join(out_dir, "report.json")
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1)
    paths.append(p)
    p = os.path.join(out_dir, "report.csv")
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(report))
    paths.append(p)
    if figures:
        paths += write_figures(report, out_dir)
    return paths


# ---------------------------------------------------------------------------
# figures

def _by_check(report, check):
    return [r for r in report.rows if r.check == check and r.measured]


def write_figures(report, out_dir) -> list:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = []

    def save(fig, name):
        path = os.path.join(out_dir, name)
        fig.tight_layout()
        fig.savefig(path, dpi=110)
        plt.close(fig)
        out.append(path)

    # splitting slopes
    names = ("sup_phi1", "sup_phi2", "sup_grad_phi2")
    algebras = sorted({r.algebra for r in report.rows if r.check.startswith("splitting.slope_")})
    for alg in algebras:
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
        for ax, name in zip(axes, names):
            rows = [r for r in _by_check(report, f"splitting.slope_{name}") if r.algebra == alg]
            one = [r for r in _by_check(report, f"splitting.one_sided_{name}") if r.algebra == alg]
            if not rows:
                continue
            m = rows[0].measured
            lam = np.asarray(m["lambdas"], dtype=float)
            q = np.asarray(m["quotients"], dtype=float)
            ax.loglog(lam, q, "o", label="co-scaled")
            ax.loglog(lam, q[-1] * (lam / lam[-1]) ** m["exponent"], "-",
                      label=f"slope {m['exponent']:.2f}")
            if one:
                ax.loglog(lam, np.asarray(one[0].measured["fixed"], dtype=float), "s",
                          mfc="none", label="fixed function")
            ax.set_title(f"{name} (fit {m['slope']:.3f})")
            ax.set_xlabel("lambda")
            ax.legend(fontsize=7)
        fig.suptitle(f"splitting bounds, {alg}")
        save(fig, f"splitting_slopes_{_slug(alg)}.png")

    # pairing ratio family and running max
    for r in _by_check(report, "pairing.bb_ratio_family"):
        ratios = np.asarray(r.measured.get("ratios", []), dtype=float)
        if ratios.size == 0:
            continue
        fig, ax = plt.subplots(figsize=(6, 3.6))
        idx = np.arange(1, ratios.size + 1)
        ax.semilogy(idx, ratios, ".", alpha=0.6, label="ratio")
        ax.semilogy(idx, np.maximum.accumulate(ratios), "-", label="running max")
        ax.axvline(ratios.size / 2, color="0.6", lw=0.8, ls="--")
        ax.set_xlabel("sample")
        ax.set_title(f"pairing ratio, {r.algebra}")
        ax.legend(fontsize=8)
        save(fig, f"bb_ratio_{_slug(r.algebra)}.png")

    # codimension-one spread over directions
    for r in _by_check(report, "pairing.codim1_family"):
        ratios = np.asarray(r.measured.get("ratios", []), dtype=float)
        if ratios.size == 0:
            continue
        tags = list(r.measured.get("tags", ["?"] * ratios.size))
        kinds = sorted(set(tags))
        fig, ax = plt.subplots(figsize=(5, 3.6))
        for k, kind in enumerate(kinds):
            sel = ratios[np.array(tags) == kind]
            ax.semilogy(np.full(sel.size, k) + np.linspace(-0.15, 0.15, sel.size), sel, "o",
                        label=kind)
        ax.set_xticks(range(len(kinds)), kinds)
        ax.set_ylabel("lhs / rhs")
        ax.set_title(f"codimension-one ratio, {r.algebra}")
        save(fig, f"codim1_spread_{_slug(r.algebra)}.png")

    # Hardy ratios
    for r in _by_check(report, "hardy.line"):
        groups = r.measured.get("ratios", {})
        man = [x for x in _by_check(report, "hardy.manifold") if x.algebra == r.algebra]
        fig, axes = plt.subplots(1, 2, figsize=(10, 3.4))
        for key, vals in groups.items():
            axes[0].hist(np.asarray(vals, dtype=float), bins=30, range=(0, 1), alpha=0.5,
                         label=key)
        axes[0].axvline(1.0, color="k", lw=0.8)
        axes[0].set_title("line: lhs / rhs")
        axes[0].legend(fontsize=7)
        if man:
            for key, vals in man[0].measured.get("ratios", {}).items():
                axes[1].hist(np.asarray(vals, dtype=float), bins=15, range=(0, 1), alpha=0.5,
                             label=key)
            axes[1].axvline(1.0, color="k", lw=0.8)
            axes[1].set_title("manifold: ||phi||_p / (C_p ||grad phi||_p)")
            axes[1].legend(fontsize=7)
        fig.suptitle(f"Hardy ratios, {r.algebra}")
        save(fig, f"hardy_{_slug(r.algebra)}.png")
    return out
