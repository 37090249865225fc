"""Declarative experiment scenarios and their tabular results.

A scenario file names a layout, the injector and cascade settings, one rate
equation model per qubit and the parameters of each experiment type. Every
runner returns a :class:`ResultTable` whose CSV form depends only on the
inputs, so identical runs produce identical files.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .cascade import CascadeConfig, CascadeStats, run_source
from .chip import ChipLayout, ConfigError, layout_from_dict, layout_to_dict, parse_yaml
from .dynamics import (
    PER_NS_TO_PER_US,
    QpModel,
    StepGeneration,
    evolve_xqp,
    populations,
    rabi_amplitude,
    steady_state_xqp,
)
from .fitkit import RecoveryFit, fit_recovery, loss_ratios
from .injector import InjectorParams, Pulse, emission_spectrum, iv_current
from .transmon import diagonalize, qp_sensitivity_D


# ---------------------------------------------------------------------------
# result tables


@dataclass
class ResultTable:
    """Named columns with units, rows of scalars and run metadata.

    ``metadata`` entries listed in ``volatile`` (wall-clock runtime) are kept
    out of the CSV so that the file is a pure function of the inputs.
    """

    name: str
    columns: list[tuple[str, str]]
    rows: list[tuple] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)
    volatile: tuple[str, ...] = ("runtime_s",)

    def __post_init__(self):
        for name, unit in self.columns:
            if not unit:
                raise ValueError(f"column {name} has no unit ('-' marks dimensionless)")
        width = len(self.columns)
        for row in self.rows:
            if len(row) != width:
                raise ValueError(f"row {row!r} does not have {width} entries")

    @property
    def column_names(self) -> list[str]:
        return [c for c, _ in self.columns]

    def append(self, *row) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"row {row!r} does not have {len(self.columns)} entries")
        self.rows.append(tuple(row))

    def column(self, name: str) -> list:
        i = self.column_names.index(name)
        return [r[i] for r in self.rows]

    def where(self, **match) -> "ResultTable":
        idx = {k: self.column_names.index(k) for k in match}
        rows = [r for r in self.rows if all(r[i] == match[k] for k, i in idx.items())]
        return ResultTable(self.name, list(self.columns), rows, dict(self.metadata), self.volatile)

    def to_csv(self) -> str:
        lines = [f"# table: {self.name}"]
        for k in sorted(self.metadata):
            if k not in self.volatile:
                lines.append(f"# {k}: {self.metadata[k]}")
        lines.append("# units: " + ", ".join(f"{c}={u}" for c, u in self.columns))
        lines.append(",".join(self.column_names))
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def read_csv_columns(text: str) -> dict[str, list[str]]:
    """Columns of a CSV that may carry ``#`` comment lines."""
    import csv
    import io

    body = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not body:
        raise ConfigError("CSV has no header")
    reader = csv.reader(io.StringIO("\n".join(body)))
    header = [h.strip() for h in next(reader)]
    cols: dict[str, list[str]] = {h: [] for h in header}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ConfigError(f"CSV row {lineno} has {len(row)} fields, expected {len(header)}")
        for h, v in zip(header, row):
            cols[h].append(v.strip())
    return cols


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class FieldToggle:
    material: str = "Al"
    overrides: tuple[dict, ...] = ({"gap_ueV": 180.0}, {"gap_ueV": 0.0})
    qubits: tuple[str, ...] = ("Near_Al", "Far_Al")


@dataclass
class ScenarioConfig:
    layout: ChipLayout
    injector: InjectorParams
    cascade: CascadeConfig
    qp_models: dict[str, QpModel]
    dc_bias: tuple[float, ...]
    pulse: Pulse
    field_toggle: FieldToggle
    population_bias: tuple[float, ...]
    ratio_noise_floor: float = 1e-3
    ratio_input: Optional[str] = None
    source: str = "<scenario>"
    raw: dict = field(default_factory=dict, repr=False)

    def with_overrides(self, seed: int | None = None, packets: int | None = None) -> "ScenarioConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if packets is not None:
            changes["n_packets"] = int(packets)
        if not changes:
            return self
        return dataclasses.replace(self, cascade=dataclasses.replace(self.cascade, **changes))

    def with_layout(self, layout: ChipLayout) -> "ScenarioConfig":
        return dataclasses.replace(self, layout=layout)

    def config_hash(self) -> str:
        doc = {
            "layout": layout_to_dict(self.layout),
            "injector": dataclasses.asdict(self.injector),
            "cascade": {
                k: v
                for k, v in dataclasses.asdict(self.cascade).items()
                if k not in ("workers", "chunk_size", "keep_per_packet")
            },
            "qp_models": {k: dataclasses.asdict(m) for k, m in sorted(self.qp_models.items())},
            "dc_bias": list(self.dc_bias),
            "pulse": dataclasses.asdict(self.pulse),
            "field_toggle": dataclasses.asdict(self.field_toggle),
            "population_bias": list(self.population_bias),
            "ratio_noise_floor": self.ratio_noise_floor,
        }
        blob = json.dumps(doc, sort_keys=True, default=_json_default).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def metadata(self, **extra) -> dict:
        md = {
            "seed": self.cascade.seed,
            "config_hash": self.config_hash(),
            "n_packets": self.cascade.n_packets,
            "version": __version__,
        }
        md.update(extra)
        return md


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot hash {type(o)}")


def _grid(values, what) -> tuple[float, ...]:
    g = tuple(float(v) for v in values)
    if not g:
        raise ConfigError(f"{what} must not be empty")
    if any(b <= a for a, b in zip(g, g[1:])):
        raise ConfigError(f"{what} must be strictly increasing")
    return g


def _f(d, key, default=None):
    if key in d:
        v = d[key]
        return math.inf if v in ("inf", ".inf") else float(v)
    if default is None:
        raise ConfigError(f"missing key {key!r}")
    return default


def derived_D(layout: ChipLayout, label: str) -> float:
    """Quasiparticle sensitivity of a qubit from its transmon parameters at ng = 0."""
    tp = layout.qubit(label).transmon
    return qp_sensitivity_D(tp, diagonalize(tp, 0.0).f01)


def _qp_models(doc: dict, layout: ChipLayout) -> dict[str, QpModel]:
    section = doc.get("qp_models") or {}
    common = section.get("default", {}) or {}
    models = {}
    for q in layout.qubits:
        d = dict(common)
        d.update(section.get(q.label, {}) or {})
        try:
            if "D_per_ns" in d and d["D_per_ns"] != "auto":
                D = float(d["D_per_ns"])
            else:
                D = derived_D(layout, q.label)
            if "gamma_baseline_per_us" in d:
                gb = float(d["gamma_baseline_per_us"])
            else:
                gb = 1.0 / _f(d, "T1_baseline_us")
            models[q.label] = QpModel(
                tau_ss=_f(d, "tau_ss_us"),
                r=_f(d, "r_per_us", 0.0),
                kappa=_f(d, "kappa"),
                D=D,
                gamma_baseline=gb,
                upconvert_fraction=_f(d, "upconvert_fraction", 1.0),
                residual_pe=_f(d, "residual_pe", 0.0),
            )
        except ValueError as exc:
            raise ConfigError(f"qp_models.{q.label}: {exc}") from exc
    return models


def scenario_from_dict(doc: dict, source: str = "<scenario>", base_dir: Path | None = None) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: expected a mapping at top level")
    lay = doc.get("layout", "default")
    if lay == "default":
        from .chip import default_layout

        layout = default_layout()
    elif isinstance(lay, str):
        path = Path(lay)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"{source}: layout file {path} does not exist")
        from .chip import load_layout

        layout = load_layout(path.read_text(), str(path))
    elif isinstance(lay, dict):
        layout = layout_from_dict(lay)
    else:
        raise ConfigError(f"{source}: layout must be 'default', a path or a mapping")

    inj = doc.get("injector") or {}
    injector = InjectorParams(
        gap=float(inj.get("gap_ueV", 270.0)),
        normal_resistance=float(inj.get("normal_resistance_kohm", 115.0)),
        dynes=float(inj.get("dynes", 3e-5)),
        temperature=float(inj.get("temperature_mK", 20.0)),
        recombination_prob=float(inj.get("recombination_prob", 1.0)),
    )
    cas = doc.get("cascade") or {}
    cascade = CascadeConfig(
        n_packets=int(cas.get("n_packets", 100_000)),
        seed=int(doc.get("seed", cas.get("seed", 1))),
        track_floor=float(cas.get("track_floor_ueV", 500.0)),
        max_bounces=int(cas.get("max_bounces", 10_000)),
        chunk_size=int(cas.get("chunk_size", 2048)),
        workers=int(cas.get("workers", 1)),
    )
    cascade.check_against(layout)

    dc = doc.get("dc_sweep") or {}
    pl = doc.get("pulse") or {}
    ft = doc.get("field_toggle") or {}
    pop = doc.get("population") or {}
    rat = doc.get("ratios") or {}
    pulse = Pulse(
        amplitude=float(pl.get("amplitude_mV", 3.0)),
        duration=float(pl.get("duration_us", 20.0)),
        delay_grid=_grid(pl.get("delays_us", [0, 20, 40, 80, 120, 160, 240, 320, 400]), "pulse.delays_us"),
    )
    if pulse.delay_grid[0] < 0:
        raise ConfigError("pulse.delays_us must be >= 0")
    toggle = FieldToggle(
        material=str(ft.get("material", "Al")),
        overrides=tuple(dict(o) for o in ft.get("overrides", FieldToggle.overrides)),
        qubits=tuple(ft.get("qubits", FieldToggle.qubits)),
    )
    if toggle.material not in layout.materials:
        raise ConfigError(f"field_toggle.material {toggle.material!r} is not in the layout")
    if not any(float(o.get("gap_ueV", -1)) == 0.0 for o in toggle.overrides):
        raise ConfigError("field_toggle.overrides must include the normal-metal case gap_ueV: 0")
    for label in toggle.qubits:
        if label not in {q.label for q in layout.qubits}:
            raise ConfigError(f"field_toggle.qubits: unknown qubit {label!r}")
    dc_bias = _grid(dc.get("bias_mV", [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]), "dc_sweep.bias_mV")
    return ScenarioConfig(
        layout=layout,
        injector=injector,
        cascade=cascade,
        qp_models=_qp_models(doc, layout),
        dc_bias=dc_bias,
        pulse=pulse,
        field_toggle=toggle,
        population_bias=_grid(pop.get("bias_mV", dc_bias), "population.bias_mV"),
        ratio_noise_floor=float(rat.get("noise_floor_per_us", 1e-3)),
        ratio_input=rat.get("input"),
        source=source,
        raw=doc,
    )


def load_scenario(text: str, source: str = "<scenario>", base_dir: Path | None = None) -> ScenarioConfig:
    return scenario_from_dict(parse_yaml(text, source), source, base_dir)


def load_scenario_file(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return load_scenario(path.read_text(), str(path), path.parent)


def default_scenario() -> ScenarioConfig:
    text = files("qptrap.data").joinpath("default_scenario.yaml").read_text()
    return load_scenario(text, "default_scenario.yaml")


# ---------------------------------------------------------------------------
# shared cascade evaluation


@dataclass
class BiasPoint:
    v_bias: float
    current: float
    stats: CascadeStats


def cascade_at(cfg: ScenarioConfig, v_bias: float, layout: ChipLayout | None = None) -> BiasPoint:
    layout = cfg.layout if layout is None else layout
    current = iv_current(cfg.injector, v_bias)
    src = emission_spectrum(cfg.injector, v_bias, current)
    return BiasPoint(v_bias, current, run_source(layout, src, cfg.cascade))


def _gamma_and_slope(model: QpModel, power: float):
    """Added loss rate at steady state and its derivative with respect to power."""
    g = model.generation(power)
    x = steady_state_xqp(model, g)
    inv_tau = 0.0 if math.isinf(model.tau_ss) else 1.0 / model.tau_ss
    dxdg = 1.0 / (inv_tau + 2.0 * model.r * x) if (inv_tau + 2.0 * model.r * x) > 0 else math.inf
    c = model.D * PER_NS_TO_PER_US
    return x, c * x, c * dxdg * model.kappa


# ---------------------------------------------------------------------------
# runners


DC_COLUMNS = [
    ("v_bias_mV", "mV"),
    ("current_nA", "nA"),
    ("qubit", "-"),
    ("power_ueV_per_us", "ueV/us"),
    ("power_se_ueV_per_us", "ueV/us"),
    ("xqp", "-"),
    ("added_gamma1_per_us", "1/us"),
    ("added_gamma1_se_per_us", "1/us"),
]


def run_dc_sweep(cfg: ScenarioConfig, points: list[BiasPoint] | None = None) -> ResultTable:
    """Steady-state added loss per qubit at every bias of ``cfg.dc_bias``."""
    t0 = time.perf_counter()
    if points is None:
        points = [cascade_at(cfg, v) for v in cfg.dc_bias]
    table = ResultTable("dc_sweep", list(DC_COLUMNS))
    for bp in points:
        for label in bp.stats.qubit_labels:
            model = cfg.qp_models[label]
            p = bp.stats.qubit_power[label]
            se = bp.stats.qubit_power_se[label]
            x, gamma, slope = _gamma_and_slope(model, p)
            table.append(bp.v_bias, bp.current, label, p, se, x, gamma, slope * se)
    table.metadata = cfg.metadata(runtime_s=round(time.perf_counter() - t0, 3))
    table.points = points  # type: ignore[attr-defined]
    return table


def curves_from_table(table: ResultTable, value: str = "added_gamma1_per_us"):
    """``{qubit: (bias, values)}`` from a dc-sweep style table."""
    out: dict[str, tuple[list, list]] = {}
    names = table.column_names
    iv, iq, ix = names.index("v_bias_mV"), names.index("qubit"), names.index(value)
    for r in table.rows:
        b, v = out.setdefault(r[iq], ([], []))
        b.append(float(r[iv]))
        v.append(float(r[ix]))
    return {k: (np.array(b), np.array(v)) for k, (b, v) in out.items()}


@dataclass
class PulseResult:
    table: ResultTable
    fits: dict[str, RecoveryFit]
    fit_table: ResultTable
    point: BiasPoint


def run_pulse_recovery(cfg: ScenarioConfig, point: BiasPoint | None = None) -> PulseResult:
    """Added loss after a square injection pulse, sampled at the configured delays.

    The pulse runs from t = 0 to ``duration`` at the injector. Each qubit sees
    a step generation delayed by the energy-weighted mean phonon flight time
    to it. Delays are counted from the end of the pulse. The recovery fit
    uses only delays at which generation at that qubit has stopped (delay at
    least the flight lag), so it sees the free decay.
    """
    t0 = time.perf_counter()
    pulse = cfg.pulse
    if point is None:
        point = cascade_at(cfg, pulse.amplitude)
    delays = np.asarray(pulse.delay_grid, dtype=float)
    table = ResultTable(
        "pulse_recovery",
        [("qubit", "-"), ("delay_us", "us"), ("xqp", "-"), ("added_gamma1_per_us", "1/us")],
    )
    fits: dict[str, RecoveryFit] = {}
    fit_table = ResultTable(
        "pulse_recovery_fit",
        [
            ("qubit", "-"),
            ("fit_from_delay_us", "us"),
            ("model_choice", "-"),
            ("gamma0_per_us", "1/us"),
            ("tau_us", "us"),
            ("tau_se_us", "us"),
            ("exp_residual_norm", "1/us"),
            ("rec_residual_norm", "1/us"),
        ],
    )
    for label in point.stats.qubit_labels:
        model = cfg.qp_models[label]
        g = model.generation(point.stats.qubit_power[label])
        lag = point.stats.qubit_mean_delay.get(label, 0.0)
        gen = StepGeneration.pulse(g, lag, pulse.duration)
        trace = evolve_xqp(model, gen, np.concatenate([[0.0], pulse.duration + delays]))
        xs, gam = trace.xqp[1:], trace.gamma1[1:]
        for d, x, gm in zip(delays, xs, gam):
            table.append(label, float(d), float(x), float(gm))
        free = delays >= lag
        if g > 0:
            fit = fit_recovery(delays[free], gam[free])
            fits[label] = fit
            e, r = fit.exponential, fit.recombination
            fit_table.append(
                label,
                float(delays[free][0]),
                fit.model_choice,
                e["gamma0"] if e else math.nan,
                e["tau"] if e else math.nan,
                e.stderr["tau"] if e else math.nan,
                e.residual_norm if e else math.nan,
                r.residual_norm if r else math.nan,
            )
    md = cfg.metadata(
        amplitude_mV=pulse.amplitude,
        duration_us=pulse.duration,
        runtime_s=round(time.perf_counter() - t0, 3),
    )
    table.metadata = md
    fit_table.metadata = dict(md)
    return PulseResult(table, fits, fit_table, point)


@dataclass
class ToggleSummary:
    override: int
    gap: float
    mean_delta: float
    se_paired: float
    se_unpaired: float

    @property
    def z_paired(self) -> float:
        return self.mean_delta / self.se_paired if self.se_paired > 0 else math.nan

    @property
    def z_unpaired(self) -> float:
        return self.mean_delta / self.se_unpaired if self.se_unpaired > 0 else math.nan


@dataclass
class ToggleResult:
    table: ResultTable
    summary_table: ResultTable
    summaries: list[ToggleSummary]


def _override_layout(cfg: ScenarioConfig, override: dict) -> ChipLayout:
    changes = {}
    if "gap_ueV" in override:
        changes["gap"] = float(override["gap_ueV"])
    if "absorb_prob" in override:
        changes["absorb_prob"] = float(override["absorb_prob"])
    if "absorb_scale" in override:
        base = cfg.layout.materials[cfg.field_toggle.material].absorb_prob
        changes["absorb_prob"] = min(1.0, base * float(override["absorb_scale"]))
    return cfg.layout.replace_material(cfg.field_toggle.material, **changes)


def run_field_toggle(cfg: ScenarioConfig) -> ToggleResult:
    """Dc sweeps with the trap material overridden, compared at equal bias.

    Every override reuses the same seed, so packet ``i`` follows the same
    random stream in all runs. ``delta = gamma(override) - gamma(first)``.
    The mean of delta is taken over all bias points and the selected qubits;
    its standard error is reported both for the paired difference (per-packet
    differences of the linearized loss rate) and for two independent runs.
    """
    t0 = time.perf_counter()
    ft = cfg.field_toggle
    if not cfg.cascade.keep_per_packet:
        cfg = dataclasses.replace(cfg, cascade=dataclasses.replace(cfg.cascade, keep_per_packet=True))
    n = cfg.cascade.n_packets
    labels = [q.label for q in cfg.layout.qubits]
    sel = [labels.index(q) for q in ft.qubits]
    n_terms = len(cfg.dc_bias) * len(sel)

    n_bias = len(cfg.dc_bias)
    gammas = []  # per override: array (bias, qubit)
    per_packet = []  # per override: per-packet share of the linearized mean
    slopes = np.zeros((n_bias, len(labels)))  # d(gamma)/d(power) of the reference run
    for i, o in enumerate(ft.overrides):
        layout = _override_layout(cfg, o)
        g = np.zeros((n_bias, len(labels)))
        m = np.zeros(n)
        for k, v in enumerate(cfg.dc_bias):
            bp = cascade_at(cfg, v, layout)
            for j, label in enumerate(labels):
                _, g[k, j], s = _gamma_and_slope(cfg.qp_models[label], bp.stats.qubit_power[label])
                if i == 0:
                    slopes[k, j] = s
            for j in sel:
                m += slopes[k, j] * bp.stats.per_packet_qubit[:, j]
        gammas.append(g)
        per_packet.append(m / n_terms)

    table = ResultTable(
        "field_toggle",
        [
            ("override", "-"),
            ("trap_gap_ueV", "ueV"),
            ("v_bias_mV", "mV"),
            ("qubit", "-"),
            ("gamma_reference_per_us", "1/us"),
            ("gamma_per_us", "1/us"),
            ("delta_gamma1_per_us", "1/us"),
        ],
    )
    summary = ResultTable(
        "field_toggle_summary",
        [
            ("override", "-"),
            ("trap_gap_ueV", "ueV"),
            ("absorb_prob", "-"),
            ("mean_delta_gamma1_per_us", "1/us"),
            ("se_paired_per_us", "1/us"),
            ("se_unpaired_per_us", "1/us"),
            ("z_paired", "-"),
            ("z_unpaired", "-"),
        ],
    )
    ref = gammas[0]
    se_single = [math.sqrt(n) * float(np.std(m, ddof=1)) for m in per_packet]
    summaries = []
    for i, o in enumerate(ft.overrides):
        layout = _override_layout(cfg, o)
        mat = layout.materials[ft.material]
        for k, v in enumerate(cfg.dc_bias):
            for j in sel:
                table.append(i, mat.gap, v, labels[j], ref[k, j], gammas[i][k, j], gammas[i][k, j] - ref[k, j])
        if i == 0:
            continue
        mean = float(np.mean([gammas[i][k, j] - ref[k, j] for k in range(len(cfg.dc_bias)) for j in sel]))
        diff = per_packet[i] - per_packet[0]
        se_p = math.sqrt(n) * float(np.std(diff, ddof=1))
        se_u = math.hypot(se_single[0], se_single[i])
        s = ToggleSummary(i, mat.gap, mean, se_p, se_u)
        summaries.append(s)
        summary.append(i, mat.gap, mat.absorb_prob, mean, se_p, se_u, s.z_paired, s.z_unpaired)
    md = cfg.metadata(runtime_s=round(time.perf_counter() - t0, 3), qubits=" ".join(ft.qubits))
    table.metadata = md
    summary.metadata = dict(md)
    return ToggleResult(table, summary, summaries)


def run_population_sweep(cfg: ScenarioConfig, points: list[BiasPoint] | None = None) -> ResultTable:
    """Steady-state populations and normalized Rabi amplitude versus bias."""
    t0 = time.perf_counter()
    if points is None:
        points = [cascade_at(cfg, v) for v in cfg.population_bias]
    table = ResultTable(
        "population",
        [
            ("v_bias_mV", "mV"),
            ("qubit", "-"),
            ("xqp", "-"),
            ("p_ground", "-"),
            ("p_excited", "-"),
            ("rabi_amplitude_norm", "-"),
        ],
    )
    for bp in points:
        for label in bp.stats.qubit_labels:
            model = cfg.qp_models[label]
            x = steady_state_xqp(model, model.generation(bp.stats.qubit_power[label]))
            pg, pe = populations(model, x)
            ref = populations(model, 0.0)
            table.append(bp.v_bias, label, x, pg, pe, rabi_amplitude(pg, pe, ref))
    table.metadata = cfg.metadata(runtime_s=round(time.perf_counter() - t0, 3))
    return table


def run_ratio_report(curves, noise_floor: float, metadata: dict | None = None) -> ResultTable:
    """Pairwise added-loss ratios per bias for ``{qubit: (bias, gamma)}`` curves."""
    rt = loss_ratios(curves, noise_floor)
    cols = [("v_bias_mV", "mV")] + [(f"{a}/{b}", "-") for a, b in rt.ratios]
    table = ResultTable("ratios", cols)
    for row in rt.as_rows():
        table.append(*row)
    table.metadata = dict(metadata or {})
    table.metadata["noise_floor_per_us"] = noise_floor
    return table


def iv_table(params: InjectorParams, v_max: float = 3.0, n: int = 301) -> ResultTable:
    v = np.linspace(-v_max, v_max, n)
    i = iv_current(params, v)
    table = ResultTable("iv", [("v_mV", "mV"), ("i_nA", "nA")])
    for a, b in zip(v, i):
        table.append(float(a), float(b))
    table.metadata = {"normal_resistance_kohm": params.normal_resistance, "gap_ueV": params.gap}
    return table


def calibrate_kappa(cfg: ScenarioConfig, label: str, v_bias: float, target_gamma: float) -> float:
    """Generation per unit power giving ``target_gamma`` (1/µs) at ``v_bias`` (r = 0)."""
    bp = cascade_at(cfg, v_bias)
    model = cfg.qp_models[label]
    p = bp.stats.qubit_power[label]
    if p <= 0:
        raise ValueError(f"{label} receives no pair-breaking power at {v_bias} mV")
    return target_gamma / (model.D * PER_NS_TO_PER_US * model.tau_ss * p)
