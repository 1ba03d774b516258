"""Configuration, the coupled plasma/fluid time loop, epsilon sweeps and reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import euler, initdata, modulated, pic
from .errors import ConfigurationError, DataError, ParameterError, QNLabError
from .harmonic import NormReport, cz_bound_check, duality_check, wiener_check
from .constants import FROZEN
from .torus import ScalarField, TorusGrid, _atomic_write, h_minus1_norm, weak_gap

EPS_FLOOR = 1e-4
WIENER_ETAS = (1e-1, 1e-2, 1e-3)

STEP_COLUMNS = (
    "t", "E_total", "E_kin", "E_field", "I1", "I2", "I3", "dE_dt_fd",
    "rho_inf", "rho_l2", "m2_inf", "Qstar", "Gamma",
    "Hm1_rho", "Hm1_J", "weak_gap_rho", "weak_gap_J",
)
AUDIT_COLUMNS = (
    "t", "E_total", "dE_dt_fd", "E_vp", "pressure_work", "rho_inf", "rho_l2", "m2_inf", "Qstar",
    "M2", "M3", "M4", "rho_interp_k2", "rho_interp_k3", "rho_interp_k4",
    "grad_phi_inf", "grad_phi_l4", "grad_phi_l5", "momentum_1", "momentum_2",
)
EULER_COLUMNS = euler.DIAGNOSTIC_COLUMNS
TABLE_COLUMNS = (
    "eps", "E_initial", "sup_E", "sup_Hm1_rho", "sup_Hm1_J", "sup_weak_gap_rho", "sup_weak_gap_J", "runtime",
)


# --- configuration --------------------------------------------------------------


@dataclass
class RunConfig:
    n: int = 64
    ppc: int = 16
    eps: float = 0.1
    beta: float = 1.0
    alpha: float = 1.0
    k0: float = 5.0
    omega0: str = "shear"
    omega0_params: dict = field(default_factory=dict)
    t_end: float = 0.5
    dt_factor: float = 0.2  # plasma-period rule dt <= dt_factor * sqrt(eps)
    dt_offset: float = 1.0  # advective rule dt <= h / (2 max|u0| + dt_offset)
    dt_refine: int = 1  # divide the rule-based step by this factor
    thermal: bool = True  # False gives cold (monokinetic) data
    jitter: float = 0.05
    kmax: int = 4
    seed: int = 0
    out: str = "qnlab_out"
    checkpoint_every: int = 0

    def validate(self) -> "RunConfig":
        try:
            grid = TorusGrid(self.n)
        except ParameterError as exc:
            raise ConfigurationError(str(exc)) from None
        q = math.isqrt(max(self.ppc, 0))
        if self.ppc < pic.MIN_PPC or q * q != self.ppc:
            raise ConfigurationError(f"ppc must be a perfect square >= {pic.MIN_PPC}, got {self.ppc}")
        if not self.eps >= EPS_FLOOR:
            raise ConfigurationError(f"eps must be >= {EPS_FLOOR}, got {self.eps}")
        if not self.beta > 0 or not self.alpha > 0:
            raise ConfigurationError("alpha and beta must be positive")
        if not self.k0 > 4:
            raise ConfigurationError(f"moment order k0 must exceed 4, got {self.k0}")
        if self.omega0 not in initdata.VORTICITY_FAMILIES:
            raise ConfigurationError(f"unknown omega0 family {self.omega0!r}")
        if not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if not 0 < self.dt_factor <= pic.DT_FACTOR:
            raise ConfigurationError(f"dt_factor must lie in (0, {pic.DT_FACTOR}]")
        if not self.dt_offset > 0 or self.dt_refine < 1:
            raise ConfigurationError("dt_offset must be positive and dt_refine >= 1")
        if not 0 <= self.jitter <= 1:
            raise ConfigurationError("jitter must lie in [0, 1]")
        if self.kmax < 0 or 3 * self.kmax > grid.n:
            raise ConfigurationError("kmax must lie in [0, n/3]")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must fit in 64 unsigned bits")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every must be >= 0")
        return self

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes).validate()


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _coerce(name: str, kind: str, text: str):
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        return text
    except ValueError:
        raise ConfigurationError(f"{name}: cannot read {text!r} as {kind}") from None


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    kinds = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    values: dict[str, Any] = {}
    params: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key.startswith("omega0."):
            params[key[len("omega0."):]] = _parse_scalar(val)
        elif key in kinds and key != "omega0_params":
            values[key] = _coerce(key, kinds[key], val)
        else:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
    return RunConfig(**values, omega0_params=params).validate()


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        if f.name == "omega0_params":
            continue
        lines.append(f"{f.name} = {_fmt(getattr(cfg, f.name))}")
        if f.name == "omega0":
            lines += [f"omega0.{k} = {_fmt(v)}" for k, v in sorted(cfg.omega0_params.items())]
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def save_config(cfg: RunConfig, path) -> None:
    _atomic_write(Path(path), format_config(cfg).encode())


# --- output helpers ----------------------------------------------------------------


def _csv_bytes(columns, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue().encode()


def write_csv(path, columns, rows) -> None:
    _atomic_write(Path(path), _csv_bytes(columns, rows))


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty table")
    head, body = rows[0], rows[1:]
    try:
        data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(head))
    except ValueError as exc:
        raise DataError(f"{path}: malformed table ({exc})") from None
    return {name: data[:, i] for i, name in enumerate(head)}


def write_json(path, obj) -> None:
    _atomic_write(Path(path), (json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n").encode())


def _json_default(obj):
    if isinstance(obj, NormReport):
        return obj.to_dict()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# --- single run -------------------------------------------------------------------


@dataclass
class RunReport:
    config: RunConfig
    out_dir: Path
    steps: dict[str, np.ndarray]
    audit: dict[str, np.ndarray]
    audits: dict[str, NormReport]
    hypotheses: initdata.HypothesisReport
    drifts: dict[str, float]
    runtime: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.audits.values()) and self.hypotheses.all_pass

    def failures(self) -> list[str]:
        bad = [k for k, r in self.audits.items() if not r.passed]
        if not self.hypotheses.all_pass:
            bad.append("hypotheses")
        return bad


def time_step(cfg: RunConfig, u0_sup: float) -> tuple[float, int]:
    """Shared step and step count: ``min(dt_factor sqrt(eps), h / (2 max|u0| + offset)) / refine``.

    The base step is shortened to land on ``t_end``; refinement then divides
    it exactly, so refined time grids contain the coarse ones.
    """
    h = 1.0 / cfg.n
    dt = min(cfg.dt_factor * math.sqrt(cfg.eps), h / (2.0 * u0_sup + cfg.dt_offset))
    steps = max(1, math.ceil(cfg.t_end / dt - 1e-9)) * cfg.dt_refine
    return cfg.t_end / steps, steps


def prepare(cfg: RunConfig):
    """Initial flow, well-prepared spec and sampled ensemble for a config."""
    grid = TorusGrid(cfg.n)
    vort = initdata.vorticity_library(cfg.omega0, cfg.omega0_params, grid)
    flow = euler.EulerState.from_vorticity(vort.field)
    vort = initdata.Vorticity(flow.omega, vort.sup)
    spec = initdata.WellPreparedSpec.from_vorticity(
        cfg.eps, cfg.beta, vort, cfg.n * cfg.n * cfg.ppc, cfg.seed, cfg.jitter
    )
    ens = initdata.sample_well_prepared(spec)
    if not cfg.thermal:
        u = pic.CICStencil.build(grid, ens.positions).gather(flow.u.values).T
        ens = pic.ParticleEnsemble.from_arrays(ens.positions, u)
    return flow, spec, ens


def _vector_hm1(values: np.ndarray, grid: TorusGrid) -> float:
    return math.hypot(*(h_minus1_norm(ScalarField(grid, c)) for c in values))


def _vector_gap(values: np.ndarray, grid: TorusGrid, kmax: int) -> float:
    return max(weak_gap(ScalarField(grid, c), kmax) for c in values)


def _lp(values: np.ndarray, p: float) -> float:
    return float(np.mean(np.abs(values) ** p) ** (1.0 / p))


def _diagnostics(vp: pic.VlasovState, eu: euler.EulerState, cfg: RunConfig, inputs, workers: int):
    grid = vp.grid
    ens = vp.ensemble
    en = modulated.modulated_energy(vp, eu)
    it = modulated.i_terms(vp, eu, workers)
    rho = pic.deposit_density(ens, grid, workers).values
    cur = pic.deposit_current(ens, grid, workers).values
    m2 = pic.deposit_moment(ens, grid, 2, workers).values
    gphi = np.sqrt(np.sum(vp.efield.values**2, axis=0))
    q = pic.q_star(vp)
    step_row = (
        vp.time, en.total, en.kinetic, en.field, it.I1, it.I2, it.I3, math.nan,
        float(np.abs(rho).max()), _lp(rho, 2), float(m2.max()), q,
        modulated.gamma_bound(vp.time, inputs),
        h_minus1_norm(ScalarField(grid, rho - 1.0)),
        _vector_hm1(cur - eu.u.values, grid),
        weak_gap(ScalarField(grid, rho - 1.0), cfg.kmax),
        _vector_gap(cur - eu.u.values, grid, cfg.kmax),
    )
    mom = pic.total_momentum(vp)
    audit_row = (
        vp.time, en.total, math.nan, pic.total_energy(vp).total, it.pressure_work,
        step_row[8], step_row[9], step_row[10], q,
        pic.velocity_moment(vp, 2), pic.velocity_moment(vp, 3), pic.velocity_moment(vp, 4),
        _lp(rho, 2.0), _lp(rho, 2.5), _lp(rho, 3.0),
        float(gphi.max()), _lp(gphi, 4), _lp(gphi, 5), mom[0], mom[1],
    )
    return step_row, audit_row


def _central_difference(t: np.ndarray, e: np.ndarray) -> np.ndarray:
    d = np.full_like(e, math.nan)
    if e.size >= 3:
        d[1:-1] = (e[2:] - e[:-2]) / (t[2:] - t[:-2])
    return d


def _columns(names, rows) -> dict[str, np.ndarray]:
    arr = np.array(rows, dtype=float)
    return {name: arr[:, i] for i, name in enumerate(names)}


def run_single(cfg: RunConfig, out_dir=None, workers: int = 1, write: bool = True) -> RunReport:
    """Evolve plasma and flow together, record diagnostics, and audit the bounds."""
    cfg.validate()
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else cfg.out)
    flow, spec, ens = prepare(cfg)
    grid = flow.grid
    hyp = initdata.verify_hypotheses(ens, spec, cfg.k0, cfg.alpha)
    inputs = modulated.BoundInputs(cfg.eps, cfg.alpha, cfg.beta, hyp.Mbar)
    dt, nsteps = time_step(cfg, flow.u.max_norm())
    omega0_sup = spec.omega0_sup

    vp = pic.initial_state(ens, grid, cfg.eps, workers)
    eu = flow
    steps, audit, flows, u_max = [], [], [], []
    if write:
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.cfg")
    for k in range(nsteps + 1):
        if k:
            vp = pic.step(vp, dt, workers)
            eu = euler.advance(eu, dt)
            eu = dataclasses.replace(eu, time=vp.time)
        s_row, a_row = _diagnostics(vp, eu, cfg, inputs, workers)
        steps.append(s_row)
        audit.append(a_row)
        flows.append(euler.diagnostics_row(eu))
        u_max.append(eu.u.max_norm())
        if write and cfg.checkpoint_every and k and k % cfg.checkpoint_every == 0:
            ckpt = out / "checkpoints"
            ckpt.mkdir(exist_ok=True)
            pic.write_ensemble(ckpt / f"ensemble_{k:06d}.qnp", vp.ensemble)
    step_cols = _columns(STEP_COLUMNS, steps)
    step_cols["dE_dt_fd"] = _central_difference(step_cols["t"], step_cols["E_total"])
    audit_cols = _columns(AUDIT_COLUMNS, audit)
    audit_cols["dE_dt_fd"] = step_cols["dE_dt_fd"]
    euler_cols = _columns(EULER_COLUMNS, flows)

    final_f = modulated.f_tensor(vp, eu, workers)
    final_d = euler.strain(eu.u)
    audits = run_audits(cfg, inputs, audit_cols, flow, u_max, omega0_sup, final_f, final_d)
    e_vp = audit_cols["E_vp"]
    drifts = {
        "vp_energy_rel": float(np.max(np.abs(e_vp - e_vp[0])) / e_vp[0]) if e_vp[0] > 0 else float(np.max(np.abs(e_vp))),
        "enstrophy_rel": float(np.max(np.abs(euler_cols["enstrophy"] / euler_cols["enstrophy"][0] - 1)))
        if euler_cols["enstrophy"][0] > 0 else 0.0,
        "momentum_abs": float(np.max(np.hypot(audit_cols["momentum_1"] - audit_cols["momentum_1"][0],
                                              audit_cols["momentum_2"] - audit_cols["momentum_2"][0]))),
    }
    runtime = time.perf_counter() - start
    report = RunReport(cfg, out, step_cols, audit_cols, audits, hyp, drifts, runtime)
    if write:
        write_csv(out / "steps.csv", STEP_COLUMNS, np.column_stack([step_cols[c] for c in STEP_COLUMNS]))
        write_csv(out / "audit_series.csv", AUDIT_COLUMNS, np.column_stack([audit_cols[c] for c in AUDIT_COLUMNS]))
        write_csv(out / "euler.csv", EULER_COLUMNS, np.column_stack([euler_cols[c] for c in EULER_COLUMNS]))
        write_json(out / "summary.json", summary_dict(report, dt, nsteps))
    return report


def run_audits(cfg, inputs, hist, flow0, u_max, omega0_sup, f_final, d_final) -> dict[str, NormReport]:
    audits: dict[str, NormReport] = {}
    audits.update(modulated.density_bound_audit(hist, inputs))
    audits["force"] = modulated.force_bound_audit(hist, cfg.eps)
    f_sup = 1.0 / (2.0 * math.pi * inputs.eps**inputs.beta) if cfg.thermal else math.inf
    if math.isfinite(f_sup):
        audits.update(modulated.moment_interpolation_audit(hist, f_sup))
    if hist["t"].size >= 3 and np.all(hist["M2"] > 0):
        audits.update(modulated.moment_growth_audit(hist))
        audits["gronwall"] = modulated.gronwall_audit(hist, inputs)
    audits["cz"] = cz_bound_check(flow0.omega)
    audits["yudovich"] = NormReport.evaluate(max(u_max), omega0_sup, FROZEN["yudovich"])
    grid = f_final.grid
    d12 = ScalarField(grid, d_final.values[0, 1])
    f12 = ScalarField(grid, f_final.values[0, 1])
    dual = duality_check(f12, d12)
    audits["duality_local"] = dual["bmo_local"]
    if dual["BMO_torus"] is not None:
        audits["duality_torus"] = dual["BMO_torus"]
    f11 = ScalarField(grid, f_final.values[0, 0])
    for eta in WIENER_ETAS:
        audits[f"wiener_eta{eta:g}"] = wiener_check(f11, eta)
    return audits


def summary_dict(report: RunReport, dt: float, nsteps: int) -> dict:
    s = report.steps
    return {
        "config": {k: v for k, v in dataclasses.asdict(report.config).items()},
        "dt": dt,
        "steps": nsteps,
        "sup_E": float(np.max(s["E_total"])),
        "E_initial": float(s["E_total"][0]),
        "sup_Hm1_rho": float(np.max(s["Hm1_rho"])),
        "sup_Hm1_J": float(np.max(s["Hm1_J"])),
        "sup_weak_gap_rho": float(np.max(s["weak_gap_rho"])),
        "sup_weak_gap_J": float(np.max(s["weak_gap_J"])),
        "audits": {k: v.to_dict() for k, v in report.audits.items()},
        "hypotheses": report.hypotheses.to_dict(),
        "drifts": report.drifts,
        "passed": report.passed,
        "failures": report.failures(),
    }


# --- sweeps --------------------------------------------------------------------------


@dataclass
class ConvergenceTable:
    rows: list[tuple[float, ...]]
    complete: bool = True
    errors: dict[float, str] = field(default_factory=dict)
    horizon: float = math.nan  # largest T with sup_[0,T] E strictly decreasing in eps

    def column(self, name: str) -> np.ndarray:
        i = TABLE_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_csv(self) -> bytes:
        return _csv_bytes(TABLE_COLUMNS, self.rows)


def check_eps_list(eps_list) -> list[float]:
    eps = [float(e) for e in eps_list]
    if not eps:
        raise ConfigurationError("eps list is empty")
    if any(not e >= EPS_FLOOR for e in eps):
        raise ConfigurationError(f"every eps must be >= {EPS_FLOOR}")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigurationError("eps list must be strictly decreasing")
    return eps


def monotone_horizon(series: list[tuple[np.ndarray, np.ndarray]]) -> float:
    """Largest T such that ``sup_[0,T] E`` strictly decreases along the rows.

    ``series`` holds ``(t, E)`` per row, ordered by decreasing eps.
    """
    if len(series) < 2:
        return float(min(t[-1] for t, _ in series)) if series else math.nan
    times = np.unique(np.concatenate([t for t, _ in series]))
    horizon = math.nan
    for T in times:
        sups = [np.max(e[t <= T + 1e-12]) for t, e in series]
        if all(b < a for a, b in zip(sups, sups[1:])):
            horizon = float(T)
        else:
            break
    return horizon


def sweep_epsilon(cfg: RunConfig, eps_list, out_dir=None, workers: int = 1, write: bool = True) -> ConvergenceTable:
    """One run per eps; the time step follows the rule with each row's eps."""
    eps_values = check_eps_list(eps_list)
    root = Path(out_dir if out_dir is not None else cfg.out)
    rows, series, errors = [], [], {}
    for eps in eps_values:
        row_cfg = cfg.replace(eps=eps)
        try:
            rep = run_single(row_cfg, root / f"eps_{eps!r}", workers, write)
        except QNLabError as exc:
            errors[eps] = f"{type(exc).__name__}: {exc}"
            continue
        s = rep.steps
        rows.append((
            eps, s["E_total"][0], np.max(s["E_total"]), np.max(s["Hm1_rho"]), np.max(s["Hm1_J"]),
            np.max(s["weak_gap_rho"]), np.max(s["weak_gap_J"]), rep.runtime,
        ))
        series.append((s["t"], s["E_total"]))
    table = ConvergenceTable(rows, complete=not errors, errors=errors, horizon=monotone_horizon(series))
    if write:
        root.mkdir(parents=True, exist_ok=True)
        _atomic_write(root / "convergence.csv", table.to_csv())
        write_json(root / "sweep_summary.json", {
            "complete": table.complete,
            "errors": {repr(k): v for k, v in errors.items()},
            "monotone_horizon": table.horizon,
            "t_end": cfg.t_end,
        })
    return table


def fit_rate(table, column: str) -> float:
    """Least-squares slope of ``log(value)`` against ``log(eps)``."""
    if isinstance(table, ConvergenceTable):
        eps, val = table.column("eps"), table.column(column)
    else:
        eps, val = np.asarray(table["eps"], dtype=float), np.asarray(table[column], dtype=float)
    if eps.size < 3:
        raise DataError("rate fit needs at least three rows")
    if np.any(~(val > 0)) or np.any(~(eps > 0)):
        raise DataError(f"column {column!r} has nonpositive entries")
    return float(np.polyfit(np.log(eps), np.log(val), 1)[0])


# --- reports ----------------------------------------------------------------------------


def report(directory) -> str:
    """Plain-text digest of a run or sweep directory."""
    root = Path(directory)
    lines = []
    summaries = sorted(root.glob("**/summary.json"))
    if (root / "convergence.csv").exists():
        tab = read_csv(root / "convergence.csv")
        lines.append("eps sweep")
        lines.append("  " + "  ".join(f"{c:>16}" for c in TABLE_COLUMNS))
        for i in range(tab["eps"].size):
            lines.append("  " + "  ".join(f"{tab[c][i]:16.6g}" for c in TABLE_COLUMNS))
        if tab["eps"].size >= 3:
            for c in ("E_initial", "sup_E", "sup_Hm1_rho", "sup_Hm1_J"):
                try:
                    lines.append(f"  rate {c}: {fit_rate(tab, c):.3f}")
                except DataError as exc:
                    lines.append(f"  rate {c}: n/a ({exc})")
        side = root / "sweep_summary.json"
        if side.exists():
            meta = json.loads(side.read_text())
            lines.append(f"  monotone horizon: {meta['monotone_horizon']} (t_end {meta['t_end']})")
    if not summaries and not lines:
        raise FileNotFoundError(f"no run outputs under {root}")
    for path in summaries:
        s = json.loads(path.read_text())
        status = "PASS" if s["passed"] else "FAIL " + ",".join(s["failures"])
        lines.append(f"{path.parent}: eps={s['config']['eps']} sup_E={s['sup_E']:.6g} {status}")
        for k, v in sorted(s["drifts"].items()):
            lines.append(f"    drift {k}: {v:.3e}")
    return "\n".join(lines) + "\n"
