"""Deterministic SVG figures from CSV tables.

A plot spec is a JSON object::

    {"title": "...", "xlabel": "...", "ylabel": "...", "aspect": "equal",
     "layers": [
        {"type": "scatter", "x": "z1", "y": "z2"},
        {"type": "line", "x": "t", "y": "z_expect", "where": {"curve": "fit"}},
        {"type": "errorbar", "x": "T", "y": "sigma", "yerr": "se_sigma"},
        {"type": "ellipse", "delta_phi": 0.8, "c1": 0, "c2": 0, "v1": 1, "v2": 1}
     ]}

Column layers read from the CSV; ``where`` keeps only rows whose columns equal
the given string values. ``ellipse`` draws the noiseless fringe pair curve.
"""
import csv
import io
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ConfigError  # noqa: E402

LAYER_TYPES = ("scatter", "line", "errorbar", "ellipse")
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def read_table(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def load_spec(spec):
    if isinstance(spec, dict):
        return spec
    with open(spec) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{spec}: invalid plot spec JSON ({exc})") from None


def _column(rows, columns, name):
    if name not in columns:
        raise ConfigError(f"unknown column {name!r}; available columns: {columns}")
    return np.array([float(r[name]) if r[name] != "" else np.nan for r in rows])


def _filter(rows, columns, where):
    for k in where or {}:
        if k not in columns:
            raise ConfigError(f"unknown column {k!r}; available columns: {columns}")
    return [r for r in rows if all(r[k] == str(v) for k, v in (where or {}).items())]


def _check_columns(spec, columns):
    for layer in spec.get("layers", []):
        kind = layer.get("type")
        if kind not in LAYER_TYPES:
            raise ConfigError(f"unknown layer type {kind!r}; expected one of {LAYER_TYPES}")
        for key in ("x", "y", "yerr"):
            if key in layer and layer[key] not in columns:
                raise ConfigError(
                    f"unknown column {layer[key]!r}; available columns: {columns}")


def render_svg(csv_in, plot_spec, svg_out=None):
    """Render ``plot_spec`` over the table in ``csv_in``; returns the SVG text."""
    spec = load_spec(plot_spec)
    columns, rows = read_table(csv_in)
    _check_columns(spec, columns)

    plt.rcParams["svg.hashsalt"] = "dwgrad"
    plt.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=spec.get("size", (5.0, 4.0)))
    for i, layer in enumerate(spec.get("layers", [])):
        color = layer.get("color", _COLORS[i % len(_COLORS)])
        label = layer.get("label")
        kind = layer["type"]
        if kind == "ellipse":
            u = np.linspace(0, 2 * np.pi, 400)
            g = lambda k, d: float(layer.get(k, d))  # noqa: E731
            ax.plot(g("c1", 0) + g("v1", 1) * np.sin(u),
                    g("c2", 0) + g("v2", 1) * np.sin(u + g("delta_phi", 0)),
                    color=color, lw=1.2, label=label)
            continue
        sub = _filter(rows, columns, layer.get("where"))
        if not sub:
            continue
        x = _column(sub, columns, layer["x"])
        y = _column(sub, columns, layer["y"])
        if kind == "scatter":
            ax.plot(x, y, "o", ms=layer.get("size", 3), color=color, label=label)
        elif kind == "line":
            ax.plot(x, y, "-", lw=1.2, color=color, label=label)
        else:
            yerr = _column(sub, columns, layer["yerr"]) if "yerr" in layer else None
            ax.errorbar(x, y, yerr=yerr, fmt="o", ms=3, capsize=2, color=color, label=label)

    if not rows:
        ax.text(0.5, 0.5, "no data", transform=ax.transAxes, ha="center", va="center")
    ax.set_title(spec.get("title", ""))
    ax.set_xlabel(spec.get("xlabel", ""))
    ax.set_ylabel(spec.get("ylabel", ""))
    for key, setter in (("xlim", ax.set_xlim), ("ylim", ax.set_ylim)):
        if key in spec:
            setter(*spec[key])
    if spec.get("aspect") == "equal":
        ax.set_aspect("equal")
    if spec.get("logy"):
        ax.set_yscale("log")
    if ax.get_legend_handles_labels()[1]:
        ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    text = buf.getvalue()
    if svg_out is not None:
        with open(svg_out, "w") as fh:
            fh.write(text)
    return text
