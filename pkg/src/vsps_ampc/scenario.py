"""Scenario configuration, closed-loop simulation driver and result files.

A scenario is one JSON document (see ``data/scenario.schema.json``) naming
the plant, the surrounding grid, the controller, a load-step schedule and the
simulation settings.  :func:`run_scenario` turns it into a
:class:`ScenarioResult`: uniformly sampled traces plus a metrics block.
Everything is deterministic, so the config hash stored with a result
identifies it.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import time
import warnings
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from scipy.signal import find_peaks

from .ampc import AmpcConfig, AmpcController
from .baselines import FspsGovernor, GovernorConfig, VicConfig, VicController
from .errors import ConfigError, MismatchedScenarios
from .grid_model import Battery, Disturbance, GridParams, SyncUnit, nadir_metrics
from .linearize import PredictionModel
from .plant import Plant, UnitSpec
from .vsps_model import ChartCoefficients, HillChart, TunnelParams, VspsUnitParams, dfim_algebra

SCHEMA_VERSION = 1
MODES = ("fsps", "vic", "ampc")
UNIT_SIGNALS = ("omega_r", "P_e", "P_m", "G", "h", "P_star", "G_star", "I_r", "I_s", "U_r")

_DEFAULT_DT_CTRL = {"ampc": 0.1, "vic": 0.001, "fsps": 0.01}


def load_schema():
    with resources.files("vsps_ampc").joinpath("data/scenario.schema.json").open("r") as fh:
        return json.load(fh)


def shipped_config_path(name):
    """Path of a config file shipped with the package (``"ampc"``, ``"vic"``, ``"fsps"``...)."""
    fname = name if name.endswith(".json") else f"scenario_{name}.json"
    return Path(str(resources.files("vsps_ampc").joinpath("data", fname)))


# -- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class SimSettings:
    duration: float
    dt: float = 1e-3
    dt_ctrl: float = 0.1
    record_every: int = 10
    seed: int = 0
    measurement_noise: float = 0.0
    backend: str = "auto"


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario with every default filled in.

    ``document`` is the normalized JSON tree the hashes are computed from.
    """

    name: str
    units: tuple
    chart: HillChart = field(compare=False)
    tunnel: TunnelParams
    grid: GridParams
    mode: str
    ampc: AmpcConfig
    vic: VicConfig
    governor: GovernorConfig
    disturbance: Disturbance
    sim: SimSettings
    document: dict = field(compare=False, repr=False)

    @property
    def config_hash(self):
        return config_hash(self.document)

    @property
    def scenario_hash(self):
        """Hash of everything except the controller choice and its timing."""
        return config_hash(self.document, exclude_controller=True)

    def with_controller(self, mode, **overrides):
        """Same plant, grid and schedule under another controller."""
        doc = copy.deepcopy(self.document)
        doc["controller"]["mode"] = mode
        doc["sim"]["dt_ctrl"] = overrides.pop("dt_ctrl", _DEFAULT_DT_CTRL[mode])
        for section, values in overrides.items():
            doc["controller"].setdefault(section, {}).update(values)
        return parse_config(doc)


def _canonical(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(doc, exclude_controller=False):
    doc = copy.deepcopy(doc)
    if exclude_controller:
        doc.pop("controller", None)
        doc.get("sim", {}).pop("dt_ctrl", None)
        doc.pop("name", None)
    return hashlib.sha256(_canonical(doc).encode()).hexdigest()


def _issue_path(err):
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def _dataclass_dict(obj):
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _build(cls, values, path, issues):
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        issues.append((path, str(exc)))
        return None


def validate_document(doc):
    """Schema validation; returns a list of ``(field_path, message)`` issues."""
    validator = jsonschema.Draft202012Validator(load_schema())
    issues = [(_issue_path(e), e.message) for e in sorted(validator.iter_errors(doc), key=lambda e: list(e.path))]
    return issues


def parse_config(doc, base_dir=None) -> ScenarioConfig:
    """Validate a config tree and build the typed configuration.

    Raises
    ------
    ConfigError
        With ``issues`` listing every offending field.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object", [("<root>", "not an object")])
    doc = copy.deepcopy(doc)
    issues = validate_document(doc)
    if issues:
        raise ConfigError(f"{len(issues)} validation error(s)", issues)

    plant = doc["plant"]
    chart_doc = dict(plant.get("hill_chart", {}))
    if "file" in chart_doc:
        fpath = Path(chart_doc.pop("file"))
        if not fpath.is_absolute() and base_dir is not None:
            fpath = Path(base_dir) / fpath
        try:
            loaded = json.loads(fpath.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("hill chart file unreadable", [("plant/hill_chart/file", str(exc))]) from exc
        loaded.update(chart_doc)
        chart_doc = loaded
        sub = validate_document({**_minimal_doc(), "plant": {"units": [{"P_set": 0.5}], "hill_chart": chart_doc}})
        if sub:
            raise ConfigError("invalid hill chart file", [("plant/hill_chart/file:" + p, m) for p, m in sub])

    issues = []
    coeffs = _build(ChartCoefficients, chart_doc.get("coefficients", {}), "plant/hill_chart/coefficients", issues)
    chart = None
    if coeffs is not None:
        try:
            chart = HillChart(coeffs, **{k: chart_doc[k] for k in ("gate_grid", "speed_grid", "head_grid",
                                                                      "power_grid") if k in chart_doc})
        except ValueError as exc:
            issues.append(("plant/hill_chart", str(exc)))
    tunnel = _build(TunnelParams, plant.get("tunnel", {}), "plant/tunnel", issues)

    units = []
    for i, u in enumerate(plant["units"]):
        params = _build(VspsUnitParams, u.get("params", {}), f"plant/units/{i}/params", issues)
        if params is not None:
            units.append((params, float(u["P_set"])))

    g = doc["grid"]
    sync = []
    for j, s in enumerate(g.get("sync_units", [{"S": 1500.0}])):
        su = _build(SyncUnit, s, f"grid/sync_units/{j}", issues)
        sync.append(su)
    battery = _build(Battery, g.get("battery", {}), "grid/battery", issues)
    grid = None
    if battery is not None and all(s is not None for s in sync):
        gkw = {k: g[k] for k in ("H_sys", "D_sys", "F_sys", "S_base", "converter_mw") if k in g}
        grid = _build(GridParams, {**gkw, "sync_units": tuple(sync), "battery": battery}, "grid", issues)

    ctrl = doc["controller"]
    mode = ctrl["mode"]
    simd = doc["sim"]
    dt_ctrl = simd.get("dt_ctrl", _DEFAULT_DT_CTRL[mode])
    sim = _build(SimSettings, {**simd, "dt_ctrl": dt_ctrl}, "sim", issues)
    ampc_kw = dict(ctrl.get("ampc", {}))
    if "p" in ampc_kw:
        ampc_kw["p"] = tuple(ampc_kw["p"])
    ampc = _build(AmpcConfig, {**ampc_kw, "dt_ctrl": dt_ctrl if mode == "ampc" else 0.1}, "controller/ampc", issues)
    vic = _build(VicConfig, {**ctrl.get("vic", {}), "dt": dt_ctrl if mode == "vic" else 0.001},
                 "controller/vic", issues)
    gov = _build(GovernorConfig, {**ctrl.get("governor", {}), "dt": dt_ctrl if mode == "fsps" else 0.01},
                 "controller/governor", issues)
    try:
        dist = Disturbance(tuple(tuple(e) for e in doc["disturbance"]))
    except ValueError as exc:
        issues.append(("disturbance", str(exc)))
        dist = None

    if sim is not None:
        ratio = sim.dt_ctrl / sim.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            issues.append(("sim/dt_ctrl", "must be a whole multiple of sim/dt"))
        if dist is not None:
            for k, (te, _) in enumerate(dist.events):
                r = te / sim.dt
                if abs(r - round(r)) > 1e-6:
                    issues.append((f"disturbance/{k}", "event time must fall on the truth step grid"))
    if ampc is not None and len(ampc.p) not in (1, len(units)):
        issues.append(("controller/ampc/p", f"{len(ampc.p)} weights for {len(units)} units"))
    if issues:
        raise ConfigError(f"{len(issues)} validation error(s)", issues)

    norm = {
        "schema_version": SCHEMA_VERSION,
        "name": doc.get("name", ""),
        "plant": {
            "units": [{"P_set": P, "params": _dataclass_dict(p)} for p, P in units],
            "hill_chart": {
                "coefficients": _dataclass_dict(chart.coefficients),
                "gate_grid": chart.gate_grid.tolist(), "speed_grid": chart.speed_grid.tolist(),
                "head_grid": chart.head_grid.tolist(), "power_grid": chart.power_grid.tolist(),
            },
            "tunnel": _dataclass_dict(tunnel),
        },
        "grid": {
            "H_sys": grid.H_sys, "D_sys": grid.D_sys, "F_sys": grid.F_sys, "S_base": grid.S_base,
            "converter_mw": grid.converter_mw,
            "sync_units": [_dataclass_dict(s) for s in grid.sync_units],
            "battery": _dataclass_dict(grid.battery),
        },
        "controller": {"mode": mode},
        "disturbance": [list(e) for e in dist.events],
        "sim": _dataclass_dict(sim),
    }
    if mode == "ampc":
        d = _dataclass_dict(ampc)
        d.pop("dt_ctrl")
        d["p"] = list(d["p"])
        norm["controller"]["ampc"] = d
    elif mode == "vic":
        d = _dataclass_dict(vic)
        d.pop("dt")
        norm["controller"]["vic"] = d
    else:
        d = _dataclass_dict(gov)
        d.pop("dt")
        norm["controller"]["governor"] = d
    return ScenarioConfig(name=doc.get("name", ""), units=tuple(units), chart=chart, tunnel=tunnel, grid=grid,
                          mode=mode, ampc=ampc, vic=vic, governor=gov, disturbance=dist, sim=sim, document=norm)


def _minimal_doc():
    return {"schema_version": 1, "grid": {}, "controller": {"mode": "ampc"}, "disturbance": [],
            "sim": {"duration": 1.0}}


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}", [("<file>", str(exc))]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON", [(f"line {exc.lineno} col {exc.colno}", exc.msg)]) from exc
    return parse_config(doc, base_dir=path.parent)


# -- results ---------------------------------------------------------------------

@dataclass
class ScenarioResult:
    """Uniformly sampled traces of one closed-loop run.

    ``columns`` maps CSV header names (``dw_PCC`` and ``<signal>.<unit>``) to
    arrays of the same length as ``t``.
    """

    t: np.ndarray
    columns: dict
    metrics: dict
    config_hash: str
    scenario_hash: str
    mode: str
    log: list = field(default_factory=list, repr=False)

    @property
    def n_units(self):
        return sum(1 for k in self.columns if k.startswith("omega_r."))

    def signal(self, name, unit=None):
        return self.columns[name if unit is None else f"{name}.{unit}"]

    def header(self):
        return ["time"] + list(self.columns)

    def write_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            data = np.column_stack([self.t] + [self.columns[k] for k in self.columns])
            for row in data:
                w.writerow([format(float(v), ".17g") for v in row])
        return path

    def write(self, out_dir, stem=None):
        """Write ``<stem>.csv`` and ``<stem>.metrics.json``; returns both paths."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or self.mode
        csv_path = self.write_csv(out_dir / f"{stem}.csv")
        meta = {"mode": self.mode, "config_hash": self.config_hash, "scenario_hash": self.scenario_hash,
                "csv": csv_path.name, "csv_sha256": file_sha256(csv_path), "metrics": self.metrics}
        meta_path = out_dir / f"{stem}.metrics.json"
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
        return csv_path, meta_path

    @classmethod
    def read(cls, meta_path):
        """Load a result written by :meth:`write` (metrics sidecar plus CSV)."""
        meta_path = Path(meta_path)
        meta = json.loads(meta_path.read_text())
        t, cols = read_csv(meta_path.parent / meta["csv"])
        return cls(t=t, columns=cols, metrics=meta["metrics"], config_hash=meta["config_hash"],
                   scenario_hash=meta["scenario_hash"], mode=meta["mode"])


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v)}")


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(head))
    cols = {name: data[:, j].copy() for j, name in enumerate(head[1:], start=1)}
    return data[:, 0].copy(), cols


def file_sha256(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# -- simulation --------------------------------------------------------------------

def build_plant(cfg: ScenarioConfig) -> Plant:
    mode = "fs" if cfg.mode == "fsps" else "vs"
    specs = [UnitSpec(p, P, mode) for p, P in cfg.units]
    backend = None if cfg.sim.backend == "auto" else ("cython" if cfg.sim.backend == "compiled" else "python")
    return Plant(cfg.grid, specs, cfg.chart, cfg.tunnel, cfg.disturbance, dt=cfg.sim.dt,
                 record_every=cfg.sim.record_every, backend=backend)


def build_controller(cfg: ScenarioConfig, plant: Plant):
    params = [p for p, _ in cfg.units]
    P_set = [P for _, P in cfg.units]
    if cfg.mode == "fsps":
        return FspsGovernor(plant.initial["G"], P_set, cfg.governor, G_min=min(p.G_min for p in params))
    if cfg.mode == "vic":
        return VicController(params, cfg.chart, P_set, plant.initial["G"], cfg.vic)
    model = PredictionModel(cfg.grid, params, cfg.chart, cfg.tunnel, P_set)
    return AmpcController(model, P_set, cfg.ampc, plant.x.copy(), plant.u.copy())


def run_scenario(cfg: ScenarioConfig, controller=None) -> ScenarioResult:
    """Closed-loop co-simulation of ``cfg``.

    The truth model advances at ``sim.dt``; the controller is sampled every
    ``sim.dt_ctrl`` and its commands are held in between.  A rotor-speed
    abort propagates as :class:`errors.SpeedBoundViolation` carrying the time.
    """
    t_start = time.perf_counter()
    plant = build_plant(cfg)
    ctrl = build_controller(cfg, plant) if controller is None else controller
    sim = cfg.sim
    nsub = int(round(sim.dt_ctrl / sim.dt))
    ncycles = int(math.ceil(sim.duration / sim.dt_ctrl - 1e-9))
    R = sim.record_every
    nrows = ncycles * nsub // R + 1
    out = np.zeros((nrows, plant.nrec_cols))
    cmd = np.zeros((nrows, 2 * plant.n))
    out[0] = plant.record_row()
    cmd[0] = plant.u
    rng = np.random.default_rng(sim.seed)
    r = 1
    log = []
    for k in range(ncycles):
        meas = plant.measurements()
        if sim.measurement_noise > 0.0:
            for key in ("dw", "omega_r", "P_e", "G", "P_m", "h"):
                meas[key] = meas[key] + sim.measurement_noise * rng.standard_normal(np.shape(meas[key]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            P, G = ctrl.command(meas)
        plant.set_inputs(P, G)
        if cfg.mode == "ampc":
            last = ctrl.last
            log.append({"t": plant.t, "status": last.status, "G_star": last.G_star[0].tolist(),
                        "P_star": last.P_star[0].tolist(),
                        "active_first": sorted({(lab, int(u)) for lab, u, s in last.active if s == 0}),
                        "slack": float(sum(last.slack.values())) if last.slack else 0.0})
        rows = plant.advance(nsub, out, r)
        cmd[r:r + rows] = plant.u
        r += rows
    out = out[:r]
    cmd = cmd[:r]
    t = np.arange(r) * (R * sim.dt)
    columns = _trace_columns(cfg, plant, out, cmd)
    runtime = time.perf_counter() - t_start
    metrics = scenario_metrics(cfg, t, columns)
    metrics["runtime_s"] = runtime
    if cfg.mode == "ampc":
        metrics["controller_failures"] = int(ctrl.failures)
        metrics["vane_rate_cycles"] = vane_rate_cycles(cfg, log)
    return ScenarioResult(t=t, columns=columns, metrics=metrics, config_hash=cfg.config_hash,
                          scenario_hash=cfg.scenario_hash, mode=cfg.mode, log=log)


def _trace_columns(cfg, plant, out, cmd):
    n = plant.n
    base = plant.base
    nx = plant.nx
    cols = {"dw_PCC": out[:, 0].copy()}
    dw = out[:, 0]
    for i, (p, _) in enumerate(cfg.units):
        j = base + 4 * i
        pm = out[:, nx + i]
        if cfg.mode == "fsps":
            wr = 1.0 + dw
            pe = pm.copy()
        else:
            wr = out[:, j]
            pe = out[:, j + 1]
        Pst = cmd[:, 2 * i]
        Gst = cmd[:, 2 * i + 1]
        cols[f"omega_r.{i}"] = np.array(wr, dtype=float)
        cols[f"P_e.{i}"] = np.array(pe, dtype=float)
        cols[f"P_m.{i}"] = pm.copy()
        cols[f"G.{i}"] = out[:, j + 2].copy()
        cols[f"h.{i}"] = out[:, nx + n + i].copy()
        cols[f"P_star.{i}"] = Pst.copy()
        cols[f"G_star.{i}"] = Gst.copy()
        Ir = np.full(len(dw), np.nan)
        Is = np.full(len(dw), np.nan)
        Ur = np.full(len(dw), np.nan)
        if cfg.mode != "fsps":
            for k in range(len(dw)):
                q = dfim_algebra(_PointState(pe[k], wr[k]), 1.0 + dw[k], p, dP_e_dt=(Pst[k] - pe[k]) / p.T_p)
                Ir[k], Is[k], Ur[k] = q.I_r, q.I_s, q.U_r_exact
        cols[f"I_r.{i}"] = Ir
        cols[f"I_s.{i}"] = Is
        cols[f"U_r.{i}"] = Ur
    # order: grid signal, then signal-major per unit
    ordered = {"dw_PCC": cols["dw_PCC"]}
    for name in UNIT_SIGNALS:
        for i in range(n):
            ordered[f"{name}.{i}"] = cols[f"{name}.{i}"]
    return ordered


@dataclass(frozen=True)
class _PointState:
    P_e: float
    omega_r: float


# -- metrics ---------------------------------------------------------------------

def first_peak(x, prominence=0.02):
    """Value of the first positive local maximum of ``x`` with the given prominence.

    Falls back to the global maximum when no such peak exists.
    """
    x = np.asarray(x, dtype=float)
    peaks, _ = find_peaks(x, prominence=prominence)
    peaks = [k for k in peaks if x[k] > 0.0]
    if peaks:
        return float(x[peaks[0]]), int(peaks[0])
    k = int(np.argmax(x))
    return float(x[k]), k


def scenario_metrics(cfg: ScenarioConfig, t, cols):
    dw = cols["dw_PCC"]
    m = dict(nadir_metrics(t, dw))
    t0 = cfg.disturbance.events[0][0] if cfg.disturbance.events else 0.0
    pre = (t >= t0) & (t <= m["t_nadir"])
    if not np.any(pre):
        pre = t <= m["t_nadir"]
    k0 = min(int(np.searchsorted(t, t0)), len(t) - 1)
    win = (t >= t0) & (t <= t0 + 2.0)
    units = []
    for i, (p, P_set) in enumerate(cfg.units):
        wr = cols[f"omega_r.{i}"]
        pe = cols[f"P_e.{i}"]
        pm = cols[f"P_m.{i}"]
        G = cols[f"G.{i}"]
        dpe = pe - pe[k0]
        pk, kpk = first_peak(dpe)
        tw = t[win]
        u = {
            "omega_r_excursion_pre_nadir": float(wr[k0] - np.min(wr[pre])),
            "omega_r_min": float(np.min(wr)),
            "P_m_response_pre_nadir": float(np.max(pm[pre]) - pm[k0]),
            "P_e_first_peak": pk,
            "t_P_e_first_peak": float(t[kpk]),
            "mean_abs_dG_dt_2s": float(np.mean(np.abs(np.diff(G[win]) / np.diff(tw)))) if tw.size > 1 else 0.0,
            "G_max": float(np.max(G)),
        }
        if cfg.mode != "fsps":
            u["I_r_ratio_max"] = float(np.max(cols[f"I_r.{i}"]) / p.I_rN)
            u["I_s_ratio_max"] = float(np.max(cols[f"I_s.{i}"]) / p.I_sN)
            u["U_r_ratio_max"] = float(np.max(cols[f"U_r.{i}"]) / p.U_rN)
        units.append(u)
    m["units"] = units
    return m


def vane_rate_cycles(cfg: ScenarioConfig, log, tol=1e-9):
    """Consecutive control cycles, from the disturbance on, whose guide-vane
    command moved by exactly the rate limit (``G_rate_max * dt_ctrl``) on
    every unit."""
    if not cfg.disturbance.events or not log:
        return 0
    t0 = cfg.disturbance.events[0][0]
    params = [p for p, _ in cfg.units]
    prev = None
    count = 0
    for entry in log:
        G = np.array(entry["G_star"])
        if entry["t"] < t0 - 1e-12:
            prev = G
            continue
        if entry["t"] <= t0 + 1e-12:
            # the cycle at the disturbance instant has not seen it yet
            prev = G
            continue
        step = np.array([p.G_rate_max for p in params]) * cfg.sim.dt_ctrl
        if prev is not None and np.all(np.abs(np.abs(G - prev) - step) <= tol + 1e-12 * step):
            count += 1
            prev = G
        else:
            break
    return count


# -- comparison --------------------------------------------------------------------

REFERENCE_IMPROVEMENTS = {"ampc_vs_fsps": 49.07, "vic_vs_fsps": 35.28, "ampc_vs_vic": 21.3}


def improvement(nadir, reference):
    """Percent reduction of ``|nadir|`` relative to ``|reference|``."""
    if reference == 0.0:
        return 0.0
    return 100.0 * (1.0 - abs(nadir) / abs(reference))


def compare_report(results):
    """Nadir table of runs that share one scenario.

    Improvements are relative to the FSPS run when present, else to the first
    result.

    Raises
    ------
    MismatchedScenarios
        When the scenario hashes (config without the controller) differ.
    """
    if not results:
        raise ValueError("nothing to compare")
    hashes = {r.scenario_hash for r in results}
    if len(hashes) != 1:
        raise MismatchedScenarios(f"results come from {len(hashes)} different scenarios")
    ref = next((r for r in results if r.mode == "fsps"), results[0])
    rows = []
    for r in results:
        m = r.metrics
        rows.append({
            "mode": r.mode,
            "nadir": m["nadir"],
            "t_nadir": m["t_nadir"],
            "rocof_max": m["rocof_max"],
            "improvement_pct": improvement(m["nadir"], ref.metrics["nadir"]),
            "config_hash": r.config_hash[:12],
        })
    head = f"{'mode':<6} {'nadir [pu]':>12} {'t_nadir [s]':>11} {'ROCOF [pu/s]':>13} {'vs ' + ref.mode + ' [%]':>12}"
    lines = [head, "-" * len(head)]
    for row in rows:
        lines.append(f"{row['mode']:<6} {row['nadir']:>12.6f} {row['t_nadir']:>11.3f} "
                     f"{row['rocof_max']:>13.6f} {row['improvement_pct']:>12.2f}")
    by_mode = {r.mode: r.metrics["nadir"] for r in results}
    pairs = {}
    for a, b in (("ampc", "fsps"), ("vic", "fsps"), ("ampc", "vic")):
        if a in by_mode and b in by_mode:
            pairs[f"{a}_vs_{b}"] = improvement(by_mode[a], by_mode[b])
    return {"reference": ref.mode, "rows": rows, "pairs": pairs, "text": "\n".join(lines)}


def write_report_csv(report, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(report["rows"][0]))
        w.writeheader()
        for row in report["rows"]:
            w.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in row.items()})
