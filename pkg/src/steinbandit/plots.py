"""Rendering of experiment CSVs: direct PNG output plus a standalone script.

The emitted script is plain text with only stdlib + matplotlib imports, so a
report directory stays reproducible without this package installed.
"""

import csv
from collections import defaultdict
from string import Template

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SKIP_PREFIXES = ("diff-", "smc-p", "pt-p")


def read_rows(csv_path) -> list:
    with open(csv_path, newline="") as fh:
        return list(csv.DictReader(fh))


def _median_series(rows):
    series = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r["method"].startswith(_SKIP_PREFIXES):
            continue
        series[r["method"]][int(r["n_samples"])].append(float(r["metric"]))
    return series


def render(kind: str, csv_path, png_path) -> None:
    rows = read_rows(csv_path)
    series = _median_series(rows)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    if kind == "sampler-count":
        pools = defaultdict(dict)
        for m, by_n in series.items():
            policy, count = m.rsplit("-m", 1)
            vals = [v for col in by_n.values() for v in col]
            pools[policy][int(count)] = float(np.median(vals))
        for policy in sorted(pools):
            xs = sorted(pools[policy])
            ax.semilogy(xs, [pools[policy][x] for x in xs],
                        marker="o", label=policy)
        ax.set_xlabel("number of samplers")
        ax.set_ylabel("median MSE")
    elif kind == "block-agreement":
        for m in sorted(series):
            xs = sorted(series[m])
            ax.semilogx(xs, [float(np.median(series[m][x])) for x in xs],
                        marker="o", label=m)
        ax.set_xlabel("block size")
        ax.set_ylabel("ranking agreement")
        ax.set_ylim(0.0, 1.05)
    else:
        for m in sorted(series):
            xs = sorted(series[m])
            ax.loglog(xs, [float(np.median(series[m][x])) for x in xs],
                      marker="o", label=m)
        ax.set_xlabel("samples")
        ax.set_ylabel("median error" if kind == "sensor" else "median MSE")
    if series:
        ax.legend(fontsize=8)
    ax.set_title(kind)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)


_SCRIPT = Template('''"""Plotting commands for $csv; run with python3 to redraw."""
import csv
from collections import defaultdict
from statistics import median

import matplotlib.pyplot as plt

KIND = "$kind"
with open("$csv", newline="") as fh:
    rows = list(csv.DictReader(fh))

series = defaultdict(lambda: defaultdict(list))
for r in rows:
    if r["method"].startswith(("diff-", "smc-p", "pt-p")):
        continue
    series[r["method"]][int(r["n_samples"])].append(float(r["metric"]))

fig, ax = plt.subplots(figsize=(7.0, 4.5))
if KIND == "sampler-count":
    pools = defaultdict(dict)
    for m, by_n in series.items():
        policy, count = m.rsplit("-m", 1)
        pools[policy][int(count)] = median(
            v for col in by_n.values() for v in col)
    for policy in sorted(pools):
        xs = sorted(pools[policy])
        ax.semilogy(xs, [pools[policy][x] for x in xs], marker="o", label=policy)
    ax.set_xlabel("number of samplers")
    ax.set_ylabel("median MSE")
elif KIND == "block-agreement":
    for m in sorted(series):
        xs = sorted(series[m])
        ax.semilogx(xs, [median(series[m][x]) for x in xs], marker="o", label=m)
    ax.set_xlabel("block size")
    ax.set_ylabel("ranking agreement")
    ax.set_ylim(0.0, 1.05)
else:
    for m in sorted(series):
        xs = sorted(series[m])
        ax.loglog(xs, [median(series[m][x]) for x in xs], marker="o", label=m)
    ax.set_xlabel("samples")
    ax.set_ylabel("median error" if KIND == "sensor" else "median MSE")
if series:
    ax.legend(fontsize=8)
ax.set_title(KIND)
fig.tight_layout()
fig.savefig("$png", dpi=150)
print("wrote $png")
''')


def plot_script(kind: str, csv_name: str, png_name: str) -> str:
    """The companion plot script as plain text."""
    return _SCRIPT.substitute(kind=kind, csv=csv_name, png=png_name)
