"""Command line entry point: ``qptrap <group> <command> [options]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .chip import ConfigError, LayoutError, dump_layout, load_layout
from .dynamics import StepSizeError
from .fitkit import (
    FitError,
    GridMismatchError,
    fit_decaying_cosine,
    fit_double_gaussian,
    fit_exp_decay,
    fit_recovery,
)
from .transmon import ConvergenceError, ResonantABS, TransmonParams, fit_dispersion

log = logging.getLogger("qptrap")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


def _scenario(args):
    from .scenario import default_scenario, load_scenario_file

    cfg = load_scenario_file(args.config) if args.config else default_scenario()
    return cfg.with_overrides(seed=args.seed, packets=args.packets)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(table, out: Path, stem: str) -> Path:
    """CSV of record plus a short text report carrying the metadata and runtime."""
    path = table.write_csv(out / f"{stem}.csv")
    report = {"table": table.name, "rows": len(table.rows), **table.metadata}
    (out / f"{stem}.txt").write_text(yaml.safe_dump(report, sort_keys=True))
    runtime = table.metadata.get("runtime_s")
    extra = f" in {runtime} s" if runtime is not None else ""
    print(f"wrote {path} ({len(table.rows)} rows{extra})")
    return path


def _svg(args, name, draw):
    if not args.svg:
        return
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ConfigError("--svg needs matplotlib (pip install 'artifact[plot]')") from exc
    fig, ax = plt.subplots(figsize=(5, 3.5))
    draw(ax)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = _out(args) / f"{name}.svg"
    # fixed metadata keeps the file reproducible
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    print(f"wrote {path}")


def _plot_curves(table, x, y, group="qubit"):
    def draw(ax):
        names = table.column_names
        ix, iy, ig = names.index(x), names.index(y), names.index(group)
        for g in dict.fromkeys(r[ig] for r in table.rows):
            pts = [(r[ix], r[iy]) for r in table.rows if r[ig] == g]
            ax.plot(*zip(*pts), marker="o", ms=3, label=str(g))
        ax.set_xlabel(x)
        ax.set_ylabel(y)

    return draw


# ---------------------------------------------------------------------------
# simulate


def cmd_dc_sweep(args):
    from .scenario import run_dc_sweep

    cfg = _scenario(args)
    table = run_dc_sweep(cfg)
    _write(table, _out(args), "dc_sweep")
    _svg(args, "dc_sweep", _plot_curves(table, "v_bias_mV", "added_gamma1_per_us"))


def cmd_pulse(args):
    from .scenario import run_pulse_recovery

    res = run_pulse_recovery(_scenario(args))
    out = _out(args)
    _write(res.table, out, "pulse_recovery")
    _write(res.fit_table, out, "pulse_recovery_fit")
    for r in res.fit_table.rows:
        print(f"{r[0]}: {r[2]} recovery, tau = {r[4]:.2f} +/- {r[5]:.2g} us")
    _svg(args, "pulse_recovery", _plot_curves(res.table, "delay_us", "added_gamma1_per_us"))


def cmd_field_toggle(args):
    from .scenario import run_field_toggle

    res = run_field_toggle(_scenario(args))
    out = _out(args)
    _write(res.table, out, "field_toggle")
    _write(res.summary_table, out, "field_toggle_summary")
    for s in res.summaries:
        print(
            f"override {s.override} (gap {s.gap:g} ueV): mean delta = {s.mean_delta:.4g} /us, "
            f"paired SE {s.se_paired:.3g}, unpaired SE {s.se_unpaired:.3g}"
        )
    _svg(args, "field_toggle", _plot_curves(res.table, "v_bias_mV", "delta_gamma1_per_us"))


def cmd_population(args):
    from .scenario import run_population_sweep

    table = run_population_sweep(_scenario(args))
    _write(table, _out(args), "population")
    _svg(args, "population", _plot_curves(table, "v_bias_mV", "rabi_amplitude_norm"))


# ---------------------------------------------------------------------------
# fit


def _read_xy(path, xcol=None, ycol=None):
    from .scenario import read_csv_columns

    cols = read_csv_columns(Path(path).read_text())
    names = list(cols)
    x = xcol or ("x" if "x" in cols else names[0])
    y = ycol or ("y" if "y" in cols else names[1] if len(names) > 1 else None)
    if x not in cols or y not in cols:
        raise ConfigError(f"{path}: columns {x!r} and {y!r} required, found {names}")
    return np.array(cols[x], dtype=float), np.array(cols[y], dtype=float)


def _fit_table(name, res, extra=None):
    from .scenario import ResultTable

    table = ResultTable(name, [("param", "-"), ("value", "-"), ("stderr", "-")])
    for k, v in res.params.items():
        table.append(k, v, res.stderr.get(k, math.nan))
    table.append("residual_norm", res.residual_norm, math.nan)
    table.append("converged", res.converged, math.nan)
    table.append("n_iter", res.n_iter, math.nan)
    for k, v in (extra or {}).items():
        table.append(k, v, math.nan)
    return table


def _report(table):
    for r in table.rows:
        err = "" if isinstance(r[2], float) and math.isnan(r[2]) else f" +/- {r[2]:.3g}"
        val = f"{r[1]:.6g}" if isinstance(r[1], float) else str(r[1])
        print(f"  {r[0]:>16s} = {val}{err}")


def cmd_fit(args):
    kind = args.kind
    if kind == "histogram":
        from .scenario import read_csv_columns

        cols = read_csv_columns(Path(args.data).read_text())
        col = args.y or ("shots" if "shots" in cols else next(iter(cols)))
        res = fit_double_gaussian(np.array(cols[col], dtype=float))
        table = _fit_table("fit_histogram", res, {"unresolved": res.flags.get("unresolved", False)})
    elif kind == "dispersion":
        from .scenario import read_csv_columns

        cols = read_csv_columns(Path(args.data).read_text())
        need = ("ng", "f01_GHz", "f02half_GHz")
        if any(c not in cols for c in need):
            raise ConfigError(f"{args.data}: columns {need} required")
        init = TransmonParams(args.ec, ResonantABS(args.eff_gap, args.transmission), args.lead_gap)
        fit = fit_dispersion(
            np.array(cols["ng"], dtype=float),
            np.array(cols["f01_GHz"], dtype=float),
            np.array(cols["f02half_GHz"], dtype=float),
            init,
        )
        from .fitkit import FitResult

        p = fit.params
        res = FitResult(
            params={"ec": p.ec, "eff_gap": p.junction.eff_gap, "transmission": p.junction.transmission},
            stderr=fit.stderr,
            residual_norm=fit.residual_norm,
            converged=fit.converged,
            n_iter=fit.n_iter,
        )
        table = _fit_table("fit_dispersion", res)
    else:
        x, y = _read_xy(args.data, args.x, args.y)
        if kind == "t1":
            res = fit_exp_decay(x, y)
            table = _fit_table("fit_t1", res)
        elif kind == "rabi":
            res = fit_decaying_cosine(x, y)
            table = _fit_table("fit_rabi", res)
        else:
            rec = fit_recovery(x, y)
            res = rec.selected
            extra = {"model_choice": rec.model_choice}
            other = rec.recombination if rec.model_choice == "exponential" else rec.exponential
            if other is not None:
                extra["other_residual_norm"] = other.residual_norm
            table = _fit_table("fit_recovery", res, extra)
    print(f"{table.name}:")
    _report(table)
    _write(table, _out(args), table.name)


# ---------------------------------------------------------------------------
# report / layout / iv


def cmd_report_ratios(args):
    from .scenario import ResultTable, curves_from_table, read_csv_columns, run_ratio_report

    cols = read_csv_columns(Path(args.data).read_text())
    need = ("v_bias_mV", "qubit", "added_gamma1_per_us")
    if any(c not in cols for c in need):
        raise ConfigError(f"{args.data}: columns {need} required")
    table = ResultTable("curves", [("v_bias_mV", "mV"), ("qubit", "-"), ("added_gamma1_per_us", "1/us")])
    for v, q, g in zip(*(cols[c] for c in need)):
        table.append(float(v), q, float(g))
    ratios = run_ratio_report(curves_from_table(table), args.noise_floor)
    _write(ratios, _out(args), "ratios")


def cmd_layout_validate(args):
    from .chip import default_layout, distance

    if args.config:
        text = Path(args.config).read_text()
        doc = yaml.safe_load(text)
        if isinstance(doc, dict) and "chip" not in doc and "layout" in doc:
            from .scenario import load_scenario_file

            layout = load_scenario_file(args.config).layout
        else:
            layout = load_layout(text, args.config)
    else:
        layout = default_layout()
    print(f"layout ok: {layout.width} x {layout.height} mm, {len(layout.regions)} regions")
    for q in layout.qubits:
        d = distance(q.position, layout.injector_pos)
        print(f"  {q.label}: {d:.3f} mm from injector")
    if args.dump:
        print(dump_layout(layout), end="")


def cmd_iv_dump(args):
    from .scenario import iv_table

    cfg = _scenario(args)
    table = iv_table(cfg.injector, args.v_max, args.points)
    _write(table, _out(args), "iv")
    _svg(args, "iv", lambda ax: (ax.plot(table.column("v_mV"), table.column("i_nA"), label="I(V)"),
                                  ax.set_xlabel("v_mV"), ax.set_ylabel("i_nA")))


# ---------------------------------------------------------------------------


def _common(p, packets=True):
    p.add_argument("--config", help="scenario or layout YAML (default: shipped scenario)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    if packets:
        p.add_argument("--packets", type=int, help="override the number of Monte Carlo packets")
    p.add_argument("--svg", action="store_true", help="also write an SVG plot (needs matplotlib)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qptrap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    groups = parser.add_subparsers(dest="group", required=True)

    sim = groups.add_parser("simulate", help="run an injection scenario").add_subparsers(
        dest="command", required=True
    )
    for name, fn, hlp in (
        ("dc-sweep", cmd_dc_sweep, "steady-state added loss versus bias"),
        ("pulse", cmd_pulse, "recovery after a square injection pulse"),
        ("field-toggle", cmd_field_toggle, "trap gap overrides compared at equal bias"),
        ("population", cmd_population, "excited population and Rabi amplitude versus bias"),
    ):
        p = sim.add_parser(name, help=hlp)
        _common(p)
        p.set_defaults(func=fn)

    fit = groups.add_parser("fit", help="fit measured or synthetic data").add_subparsers(
        dest="kind", required=True
    )
    for kind, hlp in (
        ("t1", "exponential decay, CSV x,y"),
        ("rabi", "decaying cosine, CSV x,y"),
        ("recovery", "recovery after a pulse, CSV x,y"),
        ("histogram", "double Gaussian, CSV with a shots column"),
        ("dispersion", "resonant Andreev transmon, CSV ng,f01_GHz,f02half_GHz"),
    ):
        p = fit.add_parser(kind, help=hlp)
        p.add_argument("data", help="input CSV")
        p.add_argument("--x", help="x column name")
        p.add_argument("--y", help="y (or shots) column name")
        p.add_argument("--out", default=".")
        if kind == "dispersion":
            p.add_argument("--ec", type=float, default=0.4, help="initial Ec in GHz")
            p.add_argument("--eff-gap", type=float, default=20.0, help="initial effective gap in GHz")
            p.add_argument("--transmission", type=float, default=0.9)
            p.add_argument("--lead-gap", type=float, default=270.0, help="lead gap in ueV")
        p.set_defaults(func=cmd_fit)

    rep = groups.add_parser("report", help="tables derived from earlier runs").add_subparsers(
        dest="command", required=True
    )
    p = rep.add_parser("ratios", help="pairwise added-loss ratios from a dc-sweep CSV")
    p.add_argument("data", help="dc_sweep.csv")
    p.add_argument("--noise-floor", type=float, default=1e-3, help="denominator floor in 1/us")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_report_ratios)

    lay = groups.add_parser("layout", help="chip layouts").add_subparsers(dest="command", required=True)
    p = lay.add_parser("validate", help="parse and validate a layout")
    p.add_argument("--config", help="layout or scenario YAML (default: shipped layout)")
    p.add_argument("--dump", action="store_true", help="print the normalized layout")
    p.set_defaults(func=cmd_layout_validate)

    iv = groups.add_parser("iv", help="injector I-V curve").add_subparsers(dest="command", required=True)
    p = iv.add_parser("dump", help="write v_mV,i_nA")
    _common(p, packets=False)
    p.add_argument("--v-max", type=float, default=3.0)
    p.add_argument("--points", type=int, default=301)
    p.set_defaults(func=cmd_iv_dump, packets=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (FitError, ConvergenceError, StepSizeError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, LayoutError, GridMismatchError, ValueError, KeyError, OSError, yaml.YAMLError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
