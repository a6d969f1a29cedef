"""Figure presets and the artifact-bundle writer.

Every preset expands into one or more :class:`ExperimentConfig` runs, writes
its tables under names that follow the figure (``fig4_dispersion.csv``), a
``replay.yaml`` holding the preset name, the overrides and every expanded
config, and a ``manifest.json`` that lists the tables and how to plot them.

Rates are in units of J.  Where gamma is specified as 1 MHz without a J,
the presets assume J/2pi ~ 3.2 MHz (the 20 V rows of the device table), so
gamma/J = 0.05, the same ratio quoted for the concurrence figures.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .. import __version__
from ..closed import ctqw_spread
from ..errors import UsageError
from ..lindblad import BathSpec, IntegratorOptions
from ..model import ChainSpec
from ..params import DeviceParams, table1
from .config import DEFAULT_REALIZATIONS, DEFAULT_SEED, ExperimentConfig, TimeGrid, dump_config_file
from .ensemble import EnsembleStats, run_ensemble
from .io import write_table

PRESETS = ("table1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7")

GAMMA_OVER_J = 0.05
GAMMA_CONVENTION_MHZ = "gamma = 1 MHz converted with assumed J/2pi = 3.2 MHz -> gamma/J = 0.05"
GAMMA_CONVENTION_J = "gamma/J = 0.05 as stated"
FIG2_SIZES = (1, 2, 3, 5, 10, 20, 30, 50, 75, 100, 150, 200, 250, 300)
FIG2_DISORDER = (2.0, 5.0, 10.0, 15.0, 20.0)
FIG4_NBAR = (1e-4, 1e-3, 1e-2, 1e-1)
FIG7_DISORDER = 0.1
FIG7_SNAPSHOTS = (5.0, 12.0)
OPEN_N, OPEN_N_FULL = 21, 51
OPEN_R = 20

OVERRIDE_KEYS = ("realizations", "master_seed", "n_sites", "times", "integrator", "truncation", "transient")


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[list]
    plot: dict | None = None


@dataclass
class Bundle:
    kind: str
    directory: Path | None
    tables: dict[str, Table] = field(default_factory=dict)
    stats: dict[str, EnsembleStats] = field(default_factory=dict)
    configs: dict[str, ExperimentConfig] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)
    bundle_hash: str = ""


def _apply(config: ExperimentConfig, overrides: dict[str, Any]) -> ExperimentConfig:
    kw: dict[str, Any] = {}
    for key, value in overrides.items():
        if key == "n_sites":
            kw["chain"] = ChainSpec(**{**config.chain.__dict__, "n_sites": int(value)})
        elif key == "times":
            kw["times"] = TimeGrid(**{**config.times.__dict__, **value})
        elif key == "integrator":
            kw["integrator"] = IntegratorOptions(**{**config.integrator.to_dict(), **value})
        elif key == "truncation":
            kw["truncation"] = tuple(value)
        else:
            kw[key] = value
    return config.with_overrides(**kw)


def _open_config(kind, n, disorder, nbar, times, label, full, realizations=None, convention=GAMMA_CONVENTION_MHZ):
    return ExperimentConfig(
        kind=kind,
        chain=ChainSpec(n, disorder),
        bath=BathSpec(GAMMA_OVER_J, nbar),
        realizations=realizations or (DEFAULT_REALIZATIONS if full else OPEN_R),
        times=times,
        truncation=(2, 2),
        rate_convention=convention,
        label=label,
    )


def preset_configs(kind: str, full: bool = False) -> dict[str, ExperimentConfig]:
    """The runs making up a preset, keyed by a short tag."""
    n_open = OPEN_N_FULL if full else OPEN_N
    if kind == "table1":
        return {}
    if kind == "fig2":
        return {
            f"N{n}_D{d:g}": ExperimentConfig("fig2_dispersion", ChainSpec(n, d), times=TimeGrid(0, 0, 1), label=f"N={n} D/J={d:g}")
            for d in FIG2_DISORDER
            for n in FIG2_SIZES
        }
    if kind == "fig3":
        long_run = TimeGrid(0.0, 400.0, 201)
        return {
            "a": ExperimentConfig("fig3_profiles", ChainSpec(51, 15.0), times=TimeGrid(0.0, 200.0, 401), label="closed D/J=15"),
            "b": _open_config("fig3_profiles", n_open, 15.0, 1e-2, long_run, "open D/J=15", full),
            "c": _open_config("fig3_profiles", n_open, 2.0, 1e-2, long_run, "open D/J=2", full),
        }
    if kind == "fig4":
        grid = TimeGrid(0.0, 200.0, 101)
        return {
            f"D{d:g}_nbar{nb:g}": _open_config("fig4_thermal", n_open, d, nb, grid, f"D/J={d:g} nbar={nb:g}", full)
            for d in (2.0, 15.0)
            for nb in FIG4_NBAR
        }
    if kind in ("fig5", "fig6"):
        d = 0.0 if kind == "fig5" else 10.0
        grid = TimeGrid(0.0, 20.0, 201)
        closed = ExperimentConfig(
            "fig5_6_concurrence", ChainSpec(n_open, d), times=grid, realizations=1, label=f"closed D/J={d:g}"
        )
        return {
            "closed": closed,
            "open": _open_config(
                "fig5_6_concurrence", n_open, d, 1e-2, grid, f"open D/J={d:g}", full, 1, GAMMA_CONVENTION_J
            ),
        }
    if kind == "fig7":
        return {
            "walk": ExperimentConfig(
                "fig7_ctqw", ChainSpec(51, FIG7_DISORDER), times=TimeGrid(0.0, 12.0, 241), label="quantum walk"
            )
        }
    raise UsageError(f"unknown preset {kind!r}; expected one of {PRESETS}")


def _long_rows(times, values, *prefix, extra=None):
    """(time, [prefix...], site(1-based), value[, extra]) rows from a (T, N) array."""
    rows = []
    for ti, t in enumerate(times):
        for j in range(values.shape[1]):
            row = [float(t), *prefix, j + 1, float(values[ti, j])]
            if extra is not None:
                row.append(float(extra[ti, j]))
            rows.append(row)
    return rows


def _tables_fig2(stats, configs):
    rows = []
    for tag, st in stats.items():
        c = configs[tag]
        rows.append([c.chain.n_sites, c.chain.disorder, float(st.mean["ratio"]), float(st.stderr["ratio"]), st.realizations])
    plot = {"type": "lines", "x": "N", "y": "ratio_mean", "group": "delta_over_J", "xlabel": "N", "ylabel": "<<dn/n_av>>"}
    return [Table("fig2_dispersion", ["N", "delta_over_J", "ratio_mean", "ratio_stderr", "realizations"], rows, plot)]


def _tables_fig3(stats, configs):
    out = []
    for tag, st in stats.items():
        c = configs[tag]
        rows = [[j + 1, float(p), float(e)] for j, (p, e) in enumerate(zip(st.mean["profile"], st.stderr["profile"]))]
        plot = {"type": "lines", "x": "site", "y": "population", "log_y": True, "title": c.label}
        out.append(Table(f"fig3{tag}_profile", ["site", "population", "stderr"], rows, plot))
        pops = st.mean["populations"]
        heat = {"type": "heatmap", "x": "time_J", "y": "site", "z": "population", "title": c.label}
        out.append(Table(f"fig3{tag}_populations", ["time_J", "site", "population"], _long_rows(c.times.values(), pops), heat))
    return out


def _tables_fig4(stats, configs):
    rows = []
    for tag, st in stats.items():
        c = configs[tag]
        for t, dn, err in zip(c.times.values(), st.mean["delta_n"], st.stderr["delta_n"]):
            rows.append([float(t), c.chain.disorder, c.bath.nbar, float(dn), float(err)])
    plot = {"type": "lines", "x": "time_J", "y": "delta_n", "group": "nbar", "facet": "delta_over_J", "ylabel": "<<dn>>"}
    return [Table("fig4_dispersion", ["time_J", "delta_over_J", "nbar", "delta_n", "stderr"], rows, plot)]


def _tables_concurrence(prefix):
    def build(stats, configs):
        out = []
        for tag, st in stats.items():
            c = configs[tag]
            times = c.times.values()
            center = c.initial_site()
            conc = st.mean["concurrence"]
            deficit = st.mean.get("trace_deficit", np.zeros_like(conc))
            sites = [j for j in range(c.chain.n_sites) if j != center]
            rows = [
                [float(t), j + 1, float(conc[ti, k]), float(deficit[ti, k])]
                for ti, t in enumerate(times)
                for k, j in enumerate(sites)
            ]
            heat = {"type": "heatmap", "x": "time_J", "y": "site", "z": "concurrence", "title": c.label}
            out.append(Table(f"{prefix}_concurrence_{tag}", ["time_J", "site", "concurrence", "trace_deficit"], rows, heat))
            pheat = {"type": "heatmap", "x": "time_J", "y": "site", "z": "population", "title": c.label}
            out.append(
                Table(f"{prefix}_populations_{tag}", ["time_J", "site", "population"], _long_rows(times, st.mean["populations"]), pheat)
            )
        return out

    return build


def _tables_fig7(stats, configs):
    st, c = stats["walk"], configs["walk"]
    times = c.times.values()
    sp = ctqw_spread(st.mean["populations"], times, c.initial_site(), c.chain.coupling)
    sigma_rows = [[float(t), float(s)] for t, s in zip(times, st.mean["sigma"])]
    snaps = []
    for ts in FIG7_SNAPSHOTS:
        ti = int(np.argmin(np.abs(times - ts)))
        snaps += [[float(times[ti]), j + 1, float(p)] for j, p in enumerate(st.mean["populations"][ti])]
    return [
        Table("fig7_sigma", ["time_J", "sigma"], sigma_rows, {"type": "lines", "x": "time_J", "y": "sigma", "title": f"fitted slope {sp.slope:.4f} J"}),
        Table("fig7_snapshots", ["time_J", "site", "population"], snaps, {"type": "lines", "x": "site", "y": "population", "group": "time_J"}),
        Table(
            "fig7_populations",
            ["time_J", "site", "population"],
            _long_rows(times, st.mean["populations"]),
            {"type": "heatmap", "x": "time_J", "y": "site", "z": "population"},
        ),
    ]


def _tables_table1(devices=None):
    rows = [[r["omega_over_2pi_GHz"], r["dV_V"], r["lambda_over_2pi_MHz"], r["J_over_2pi_MHz"]] for r in table1(devices)]
    return [Table("table1", ["omega_over_2pi_GHz", "dV_V", "lambda_over_2pi_MHz", "J_over_2pi_MHz"], rows)]


_BUILDERS: dict[str, Callable] = {
    "fig2": _tables_fig2,
    "fig3": _tables_fig3,
    "fig4": _tables_fig4,
    "fig5": _tables_concurrence("fig5"),
    "fig6": _tables_concurrence("fig6"),
    "fig7": _tables_fig7,
}


def _hash(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=float).encode()).hexdigest()[:16]


def run_configs(kind: str, configs: dict[str, ExperimentConfig], workers: int = 1, out: str | Path | None = None) -> Bundle:
    """Run already-expanded configs and assemble the preset's tables."""
    bundle = Bundle(kind, Path(out) if out else None, configs=configs)
    for tag, cfg in configs.items():
        partial = bundle.directory / f"partial_{tag}" if bundle.directory else None
        bundle.stats[tag], _ = run_ensemble(cfg, workers=workers, partial_dir=partial)
    if kind in _BUILDERS:
        tables = _BUILDERS[kind](bundle.stats, configs)
    else:
        tables = _tables_custom(bundle.stats, configs)
    bundle.tables = {t.name: t for t in tables}
    return bundle


def _tables_custom(stats, configs):
    out = []
    for tag, st in stats.items():
        c = configs[tag]
        if c.kind == "fig2_dispersion":
            out += _tables_fig2({tag: st}, {tag: c})
            continue
        times = c.times.values()
        out.append(Table(f"{tag}_populations", ["time_J", "site", "population"], _long_rows(times, st.mean["populations"]),
                         {"type": "heatmap", "x": "time_J", "y": "site", "z": "population"}))
        rows = [[float(t), float(d), float(e)] for t, d, e in zip(times, st.mean["delta_n"], st.stderr["delta_n"])]
        out.append(Table(f"{tag}_dispersion", ["time_J", "delta_n", "stderr"], rows, {"type": "lines", "x": "time_J", "y": "delta_n"}))
    return out


def run_experiment(
    kind: str,
    overrides: dict[str, Any] | None = None,
    workers: int = 1,
    out: str | Path | None = None,
    fmt: str = "csv",
    full: bool = False,
    plots: bool = False,
    devices: list[DeviceParams] | None = None,
) -> Bundle:
    """Expand a preset, apply overrides to every run, execute, and write the bundle to ``out``."""
    overrides = dict(overrides or {})
    bad = set(overrides) - set(OVERRIDE_KEYS)
    if bad:
        raise UsageError(f"unsupported overrides {sorted(bad)}; allowed: {OVERRIDE_KEYS}")
    if kind == "table1":
        bundle = Bundle(kind, Path(out) if out else None)
        bundle.tables = {t.name: t for t in _tables_table1(devices)}
        replay = {"preset": kind, "full": full, "overrides": overrides, "configs": {}}
        if devices is not None:
            replay["devices"] = [d.__dict__ for d in devices]
    else:
        configs = {tag: _apply(c, overrides) for tag, c in preset_configs(kind, full).items()}
        bundle = run_configs(kind, configs, workers, out)
        replay = {"preset": kind, "full": full, "overrides": overrides, "configs": {t: c.to_dict() for t, c in configs.items()}}
    bundle.bundle_hash = _hash({k: v for k, v in replay.items()})
    if bundle.directory is not None:
        write_bundle(bundle, replay, fmt, seed=overrides.get("master_seed", DEFAULT_SEED if kind != "table1" else None))
        if plots:
            from .plots import emit_plots

            bundle.files += emit_plots(bundle.directory)
    return bundle


def write_bundle(bundle: Bundle, replay: dict, fmt: str, seed) -> None:
    d = bundle.directory
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for table in bundle.tables.values():
        path = write_table(d / table.name, table.columns, table.rows, fmt, bundle.bundle_hash, seed)
        bundle.files.append(path)
        entries.append({"file": path.name, "columns": table.columns, "plot": table.plot})
    bundle.files.append(dump_config_file(d / "replay.yaml", replay))
    manifest = {
        "nemchain": __version__,
        "kind": bundle.kind,
        "config_hash": bundle.bundle_hash,
        "seed": seed,
        "tables": entries,
        "replay": "replay.yaml",
    }
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    bundle.files.append(path)


def run_config_file(data: dict, workers: int = 1, out=None, fmt="csv", plots=False) -> Bundle:
    """Execute a config file: either a replay bundle (``preset`` key) or a single experiment."""
    if "preset" in data:
        if data["preset"] == "table1" and data.get("devices"):
            devices = [DeviceParams(**d) for d in data["devices"]]
            return run_experiment("table1", data.get("overrides"), workers, out, fmt, bool(data.get("full")), plots, devices)
        return run_experiment(data["preset"], data.get("overrides"), workers, out, fmt, bool(data.get("full")), plots)
    cfg = ExperimentConfig.from_dict(data)
    tag = cfg.label.replace(" ", "_") or cfg.kind
    bundle = run_configs("custom", {tag: cfg}, workers, out)
    replay = cfg.to_dict()
    bundle.bundle_hash = cfg.config_hash()
    if bundle.directory is not None:
        write_bundle(bundle, replay, fmt, cfg.master_seed)
        if plots:
            from .plots import emit_plots

            bundle.files += emit_plots(bundle.directory)
    return bundle
