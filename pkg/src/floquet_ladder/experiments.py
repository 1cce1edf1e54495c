"""Run specifications, experiment orchestration and deterministic result files.

A run is described by an INI document with sections ``[model]``, ``[run]``
and ``[krylov]``; unknown keys are rejected.  Results are written as a
trajectory CSV and a JSON report whose bytes depend only on the spec.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .ladder import (
    ConfigError,
    LadderConfig,
    build_protocol,
    closed_form_d0,
    mirror_transform,
    o_odd,
    o_odd2,
    x_pauli_string,
)
from .observables import (
    TrajectoryRecord,
    energy_density,
    entanglement_entropy,
    expectation,
    odd_observable_series,
    page_value,
    plateau_detect,
)
from .pauli import OperatorSum, StateVector, commutator, to_dense
from .propagator import KrylovSettings, evolve_protocol

MODES = ("evolve", "symmetry-check", "vanvleck-verify", "sweep")
STATE_KINDS = ("neel", "random-product", "d0-eigenstate", "basis")
CSV_COLUMNS = (
    "m",
    "t",
    "o_odd_at_mT",
    "o_odd_at_mT_half",
    "o_odd2_at_mT",
    "o_odd2_at_mT_half",
    "o_s",
    "o_s_norm",
    "s_ent_over_page",
    "energy_density",
)
DENSE_EIGEN_MAX_QUBITS = 12
DENSE_CHECK_MAX_QUBITS = 8


class ValidationError(ValueError):
    """Invalid run specification; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class InitialState:
    kind: str = "random-product"
    seed: int = 0
    index: int = 0
    bitstring: str = ""

    def __post_init__(self):
        if self.kind not in STATE_KINDS:
            raise ValidationError("run.initial_state", f"must be one of {', '.join(STATE_KINDS)}")


@dataclass(frozen=True)
class RunSpec:
    mode: str
    config: LadderConfig
    n_periods: int = 2000
    initial_state: InitialState = field(default_factory=InitialState)
    output_path: str = ""
    sample_offsets: tuple = (0.0, 0.5)  # fractions of the period
    krylov: KrylovSettings = field(default_factory=KrylovSettings)
    method: str = "krylov"
    memory_budget_mb: float = 2048.0
    plateau_window: int = 100
    plateau_slope_tol: float = 5e-4
    vv_order: int = 2
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError("mode", f"must be one of {', '.join(MODES)}")
        if self.n_periods < 1:
            raise ValidationError("run.n_periods", "must be >= 1")
        if self.method not in ("krylov", "dense"):
            raise ValidationError("krylov.method", "must be 'krylov' or 'dense'")
        if self.plateau_window < 2:
            raise ValidationError("run.plateau_window", "must be >= 2")
        if not self.plateau_slope_tol > 0:
            raise ValidationError("run.plateau_slope_tol", "must be positive")
        if self.vv_order not in (0, 1, 2):
            raise ValidationError("run.vv_order", "must be 0, 1 or 2")
        offs = tuple(float(s) for s in self.sample_offsets)
        if not offs or any(not 0 <= s < 1 for s in offs) or list(offs) != sorted(set(offs)):
            raise ValidationError("run.sample_offsets", "must be sorted distinct fractions in [0, 1)")
        object.__setattr__(self, "sample_offsets", offs)

    def with_lambdas(self, la: float, lb: float) -> "RunSpec":
        return replace(self, config=self.config.replace(lambda_a=la, lambda_b=lb))

    def state_bytes(self) -> int:
        """Peak amplitude storage: the Krylov basis plus a few work vectors."""
        return (1 << self.config.n_qubits) * 16 * (self.krylov.max_subspace + 8)


# -- parsing ---------------------------------------------------------------

_MODEL_KEYS = {f: float for f in LadderConfig.field_names()} | {"L": int, "j_over_omega": float}
_RUN_KEYS = {
    "n_periods": int,
    "initial_state": str,
    "seed": int,
    "eigen_index": int,
    "bitstring": str,
    "output_path": str,
    "sample_offsets": str,
    "memory_budget_mb": float,
    "plateau_window": int,
    "plateau_slope_tol": float,
    "vv_order": int,
    "workers": int,
}
_KRYLOV_KEYS = {
    "max_subspace": int,
    "tolerance": float,
    "max_substep": float,
    "min_substep": float,
    "method": str,
}
_SECTIONS = {"model": _MODEL_KEYS, "run": _RUN_KEYS, "krylov": _KRYLOV_KEYS}


def _convert(section: str, key: str, raw: str, kind):
    path = f"{section}.{key}"
    try:
        if kind is int:
            val = float(raw)
            if not val.is_integer():
                raise ValueError
            return int(val)
        if kind is float:
            val = float(raw)
            if math.isnan(val):
                raise ValueError
            return val
        return raw.strip()
    except ValueError:
        raise ValidationError(path, f"expected {kind.__name__}, got {raw!r}") from None


def _read(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case (L)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError("document", str(exc).splitlines()[0]) from None
    out = {}
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ValidationError(sec, "unknown section")
        for key, raw in cp.items(sec):
            if key not in _SECTIONS[sec]:
                raise ValidationError(f"{sec}.{key}", "unknown key")
            out[sec, key] = _convert(sec, key, raw, _SECTIONS[sec][key])
    return out


def parse_config(text: str, mode: str = "evolve") -> RunSpec:
    """Validated :class:`RunSpec` from an INI document."""
    vals = _read(text)
    model = {k: v for (s, k), v in vals.items() if s == "model"}
    if "j_over_omega" in model:
        if "omega" in model:
            raise ValidationError("model.j_over_omega", "give either omega or j_over_omega, not both")
        ratio = model.pop("j_over_omega")
        if not ratio > 0:
            raise ValidationError("model.j_over_omega", "must be positive")
        model["omega"] = model.get("j", 1.0) / ratio
    try:
        cfg = LadderConfig(**model)
    except ConfigError as exc:
        key = str(exc).split()[0]
        raise ValidationError(f"model.{key}", str(exc)) from None

    run = {k: v for (s, k), v in vals.items() if s == "run"}
    kry = {k: v for (s, k), v in vals.items() if s == "krylov"}
    state = InitialState(
        run.pop("initial_state", "random-product"),
        run.pop("seed", 0),
        run.pop("eigen_index", 0),
        run.pop("bitstring", ""),
    )
    if state.kind == "basis" and (len(state.bitstring) != cfg.n_qubits or set(state.bitstring) - {"0", "1"}):
        raise ValidationError("run.bitstring", f"must be {cfg.n_qubits} characters from '01'")
    if state.kind == "d0-eigenstate":
        if not 0 <= state.index < 1 << cfg.n_qubits:
            raise ValidationError("run.eigen_index", "out of range")
        if cfg.n_qubits > DENSE_EIGEN_MAX_QUBITS:
            raise ValidationError("run.initial_state", f"d0-eigenstate needs 2L <= {DENSE_EIGEN_MAX_QUBITS}")
    if "sample_offsets" in run:
        try:
            run["sample_offsets"] = tuple(float(s) for s in run["sample_offsets"].split(","))
        except ValueError:
            raise ValidationError("run.sample_offsets", "expected a comma-separated list of reals") from None
    method = kry.pop("method", "krylov")
    try:
        settings = KrylovSettings(**kry)
    except ValueError as exc:
        raise ValidationError("krylov", str(exc)) from None
    spec = RunSpec(mode=mode, config=cfg, initial_state=state, krylov=settings, method=method, **run)
    if spec.workers < 1:
        raise ValidationError("run.workers", "must be >= 1")
    if spec.state_bytes() > spec.memory_budget_mb * 2**20:
        raise ValidationError(
            "model.L", f"state storage {spec.state_bytes() / 2**20:.0f} MB exceeds budget {spec.memory_budget_mb} MB"
        )
    return spec


def emit_config(spec: RunSpec) -> str:
    """INI text that parses back to ``spec`` (mode excepted, which is a CLI choice)."""
    c, s = spec.config, spec.initial_state
    lines = ["[model]"]
    lines += [f"{f} = {getattr(c, f)!r}" for f in LadderConfig.field_names()]
    lines += [
        "",
        "[run]",
        f"n_periods = {spec.n_periods}",
        f"initial_state = {s.kind}",
        f"seed = {s.seed}",
        f"eigen_index = {s.index}",
    ]
    if s.bitstring:
        lines.append(f"bitstring = {s.bitstring}")
    if spec.output_path:
        lines.append(f"output_path = {spec.output_path}")
    lines += [
        "sample_offsets = " + ", ".join(repr(x) for x in spec.sample_offsets),
        f"memory_budget_mb = {spec.memory_budget_mb!r}",
        f"plateau_window = {spec.plateau_window}",
        f"plateau_slope_tol = {spec.plateau_slope_tol!r}",
        f"vv_order = {spec.vv_order}",
        f"workers = {spec.workers}",
        "",
        "[krylov]",
    ]
    lines += [f"{f.name} = {getattr(spec.krylov, f.name)!r}" for f in fields(KrylovSettings)]
    lines.append(f"method = {spec.method}")
    return "\n".join(lines) + "\n"


# -- initial states --------------------------------------------------------


def random_product_state(n: int, seed: int) -> np.ndarray:
    """Product of Haar-random single-qubit states; qubit 0 is the lowest bit."""
    rng = np.random.default_rng(seed)
    v = np.ones(1, dtype=np.complex128)
    for _ in range(n):
        th = np.arccos(rng.uniform(-1, 1))
        ph = rng.uniform(0, 2 * np.pi)
        v = np.kron(np.array([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)]), v)
    return v


def neel_bitstring(L: int) -> str:
    """Staggered z pattern along both legs with antiparallel rungs."""
    return "".join(f"{i % 2}{(i + 1) % 2}" for i in range(L))


def prepare_state(spec: RunSpec) -> StateVector:
    cfg, s = spec.config, spec.initial_state
    n = cfg.n_qubits
    if s.kind == "neel":
        return StateVector.basis(neel_bitstring(cfg.L), n)
    if s.kind == "basis":
        return StateVector.basis(s.bitstring, n)
    if s.kind == "random-product":
        return StateVector(random_product_state(n, s.seed), n)
    _, vecs = np.linalg.eigh(to_dense(closed_form_d0(cfg)))
    v = vecs[:, s.index]
    # fix the arbitrary eigenvector phase for reproducible output
    k = int(np.argmax(np.abs(v) > 1e-8))
    return StateVector(v * (abs(v[k]) / v[k]), n)


# -- experiments -----------------------------------------------------------


@dataclass
class ResultBundle:
    spec: RunSpec
    records: list = field(default_factory=list)
    report: dict = field(default_factory=dict)
    children: list = field(default_factory=list)


def _observables(cfg: LadderConfig):
    return o_odd(cfg), o_odd2(cfg), closed_form_d0(cfg)


def run_trajectory(spec: RunSpec) -> list:
    cfg = spec.config
    T = cfg.period
    proto = build_protocol(cfg)
    oo, oo2, d0 = _observables(cfg)
    psi0 = prepare_state(spec)
    offsets = [f * T for f in spec.sample_offsets]
    out = []
    for snap in evolve_protocol(psi0, proto, spec.n_periods, offsets, spec.krylov, spec.method):
        frac = spec.sample_offsets[offsets.index(snap.offset)]
        out.append(
            TrajectoryRecord(
                m=snap.m,
                t=snap.t,
                o_odd=expectation(oo, snap.psi),
                o_odd2=expectation(oo2, snap.psi),
                s_ent=entanglement_entropy(snap.psi, cfg.L),
                energy_density=energy_density(snap.psi, d0, cfg.n_qubits),
                offset=frac,
            )
        )
    return out


def _half_offset_present(spec: RunSpec) -> bool:
    return 0.0 in spec.sample_offsets and 0.5 in spec.sample_offsets


def trajectory_rows(spec: RunSpec, records: list) -> list:
    """CSV rows, one per period, from records sampled at offsets 0 and 1/2."""
    if not records:
        return []
    full = {r.m: r for r in records if r.offset == 0.0}
    half = {r.m: r for r in records if r.offset == 0.5}
    page = page_value(spec.config.L)
    rows = []
    for m in sorted(full):
        a, b = full[m], half.get(m)
        o_half = b.o_odd if b else None
        o2_half = b.o_odd2 if b else None
        o_s = a.o_odd + o_half if b else None
        norm = o_s / abs(a.o_odd) if b and abs(a.o_odd) >= 1e-6 else None
        rows.append([m, a.t, a.o_odd, o_half, a.o_odd2, o2_half, o_s, norm, a.s_ent / page, a.energy_density])
    return rows


def trajectory_summary(spec: RunSpec, records: list) -> dict:
    cfg = spec.config
    summary = {"n_records": len(records)}
    strobe = [r for r in records if r.offset == 0.0]
    if len(strobe) < 3 * spec.plateau_window or not _half_offset_present(spec):
        summary["plateau"] = None
        return summary
    energy = np.array([r.energy_density for r in strobe])
    entropy = np.array([r.s_ent for r in strobe]) / page_value(cfg.L)
    pe = plateau_detect(energy, spec.plateau_window, spec.plateau_slope_tol)
    ps = plateau_detect(entropy, spec.plateau_window, spec.plateau_slope_tol)
    series = odd_observable_series(records)
    series2 = odd_observable_series(records, "o_odd2")
    summary["plateau"] = {
        "energy": {"t_rel": pe.t_rel, "t_star": pe.t_star, "length": pe.length},
        "entropy": {"t_rel": ps.t_rel, "t_star": ps.t_star, "length": ps.length},
    }
    summary["max_abs_o_odd_at_mT"] = float(np.max(np.abs(series.at_mT)))
    summary["max_abs_o_odd2_at_mT"] = float(np.max(np.abs(series2.at_mT)))
    if ps.found:
        win = slice(ps.t_rel, ps.t_star + 1)
        summary["plateau_mean_o_s"] = float(np.mean(series.o_s[win]))
        summary["plateau_max_abs_o_s"] = float(np.max(np.abs(series.o_s[win])))
        summary["plateau_mean_o_s2"] = float(np.mean(series2.o_s[win]))
        summary["plateau_max_abs_o_s2"] = float(np.max(np.abs(series2.o_s[win])))
    return summary


def _string_level_reports(cfg: LadderConfig) -> list:
    """Symmetry relations checked exactly on Pauli strings (any L)."""
    proto = build_protocol(cfg)
    L = cfg.L
    segs = proto.segments
    reports = []

    def residual(a: OperatorSum, b: OperatorSum) -> float:
        return (a - b).norm1()

    res = max(residual(mirror_transform(segs[k].hamiltonian, L), segs[(k + 2) % 4].hamiltonian) for k in range(4))
    reports.append({"relation": "mirror H(t) mirror = H(t+T/2) [strings]", "max_residual": res, "tolerance": 0.0})
    x = OperatorSum((x_pauli_string(L),), cfg.n_qubits)
    d0 = closed_form_d0(cfg)
    reports.append({"relation": "[X_string, D_0] = 0 [strings]", "max_residual": commutator(x, d0).norm1(), "tolerance": 0.0})
    for name, op in (("O_odd", o_odd(cfg)), ("O_odd2", o_odd2(cfg))):
        reports.append(
            {
                "relation": f"mirror {name} mirror = -{name} [strings]",
                "max_residual": residual(mirror_transform(op, L), op * -1.0),
                "tolerance": 0.0,
            }
        )
        reports.append(
            {"relation": f"||[D_0, {name}]|| (recorded)", "max_residual": commutator(d0, op).norm1(), "tolerance": None}
        )
    for r in reports:
        r["passed"] = None if r["tolerance"] is None else bool(r["max_residual"] <= r["tolerance"])
    return reports


def run_symmetry_check(spec: RunSpec) -> dict:
    from .symmetry import check_unitary_dynamical_symmetry, group_algebra_report, mirror_element

    cfg = spec.config
    reports = _string_level_reports(cfg)
    dense = cfg.n_qubits <= DENSE_CHECK_MAX_QUBITS
    if dense:
        reports.append(check_unitary_dynamical_symmetry(build_protocol(cfg), mirror_element(cfg.L)).as_dict())
        if cfg.symmetric:
            reports += [r.as_dict() for r in group_algebra_report(cfg)]
    checked = [r for r in reports if r["passed"] is not None]
    return {"reports": reports, "dense_checks": dense, "all_passed": all(r["passed"] for r in checked)}


def run_vanvleck_verify(spec: RunSpec) -> dict:
    from scipy.linalg import expm

    from .symmetry import effective_commutators, opnorm
    from .vanvleck import build_dn, fourier_table, interaction_propagator, kick_operator, vv_effective_term

    cfg = spec.config
    n = spec.vv_order
    table = fourier_table(cfg)
    P = table.base_period
    rows = [{"quantity": "||V_0 - closed_form_d0||", "value": opnorm(table.component(0) - to_dense(closed_form_d0(cfg)))}]
    terms = [vv_effective_term(table, i) for i in range(n + 1)]
    for i, v in enumerate(terms):
        rows.append({"quantity": f"||V^[{i}]||", "value": opnorm(v)})
        rows.append({"quantity": f"||V^[{i}] - V^[{i}]^dag||", "value": opnorm(v - v.conj().T)})
    d = sum(terms)
    comm = effective_commutators(cfg, n, table) if cfg.symmetric else {}
    for k, v in comm.items():
        rows.append({"quantity": f"||[{k}, D_{n}]||", "value": v})
    ts = np.linspace(0.0, P, 513)
    for i in range(1, n + 1):
        ks = np.array([kick_operator(table, t, i) for t in ts])
        integral = trapezoid(ks, ts, axis=0)
        rows.append({"quantity": f"||int_0^P K^[{i}] dt||", "value": opnorm(integral)})
        rows.append({"quantity": f"||K^[{i}](0) - K^[{i}](P)||", "value": opnorm(ks[0] - ks[-1])})
    k0 = sum((kick_operator(table, 0.0, i) for i in range(1, n + 1)), np.zeros_like(d))
    u = interaction_propagator(table)
    approx = expm(-1j * k0) @ expm(-1j * P * d) @ expm(1j * k0)
    rows.append({"quantity": f"||U_int(P) - e^(-iK) e^(-i D_{n} P) e^(iK)||", "value": opnorm(u - approx)})
    rows.append({"quantity": "kick tail bound", "value": table.kick_tail_bound()})
    return {"order": n, "omega": cfg.omega, "rows": rows}


def _evolve_bundle(spec: RunSpec) -> ResultBundle:
    if not _half_offset_present(spec):
        raise ValidationError("run.sample_offsets", "evolve needs offsets 0 and 0.5")
    records = run_trajectory(spec)
    return ResultBundle(spec, records, {"summary": trajectory_summary(spec, records)})


def run_experiment(spec: RunSpec, lambda_grid: list | None = None) -> ResultBundle:
    if spec.mode == "evolve":
        return _evolve_bundle(spec)
    if spec.mode == "symmetry-check":
        return ResultBundle(spec, report=run_symmetry_check(spec))
    if spec.mode == "vanvleck-verify":
        return ResultBundle(spec, report=run_vanvleck_verify(spec))
    grid = lambda_grid or [(spec.config.lambda_a, spec.config.lambda_b)]
    specs = [replace(spec.with_lambdas(a, b), mode="evolve") for a, b in grid]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            children = list(pool.map(_evolve_bundle, specs))
    else:
        children = [_evolve_bundle(s) for s in specs]
    summary = [
        {
            "lambda_a": c.spec.config.lambda_a,
            "lambda_b": c.spec.config.lambda_b,
            "plateau_mean_o_s": c.report["summary"].get("plateau_mean_o_s"),
        }
        for c in children
    ]
    return ResultBundle(spec, report={"sweep": summary}, children=children)


def parse_lambda_grid(text: str) -> list:
    """``"1:1, 0.8:1.2"`` -> ``[(1.0, 1.0), (0.8, 1.2)]``."""
    out = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            out.append((float(a), float(b)))
        except ValueError:
            raise ValidationError("lambda-grid", f"bad entry {item!r}; expected lambda_a:lambda_b") from None
    if not out:
        raise ValidationError("lambda-grid", "empty grid")
    return out


# -- emission --------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def trajectory_csv(spec: RunSpec, records: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in trajectory_rows(spec, records):
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report_json(bundle: ResultBundle) -> str:
    spec = bundle.spec
    doc = {
        "mode": spec.mode,
        "config": asdict(spec.config),
        "derived": spec.config.derived(),
        "initial_state": asdict(spec.initial_state),
        "n_periods": spec.n_periods,
        "sample_offsets": list(spec.sample_offsets),
        "krylov": asdict(spec.krylov),
        "method": spec.method,
        **bundle.report,
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _child_dir(spec: RunSpec) -> str:
    return f"lambda_a={spec.config.lambda_a!r}_lambda_b={spec.config.lambda_b!r}"


def emit_results(bundle: ResultBundle, path) -> list:
    """Write the bundle under directory ``path``; returns the files written."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if bundle.spec.mode == "evolve":
        p = out / "trajectory.csv"
        p.write_text(trajectory_csv(bundle.spec, bundle.records))
        written.append(p)
    for child in bundle.children:
        written += emit_results(child, out / _child_dir(child.spec))
    p = out / "report.json"
    p.write_text(report_json(bundle))
    written.append(p)
    return written


def load_spec(path, mode: str) -> RunSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError("config", f"cannot read {os.fspath(path)}: {exc.strerror}") from None
    return parse_config(text, mode)
