"""Experiment drivers behind the command line.

Each ``run_*`` function takes a validated :class:`ExperimentConfig` and an
output directory, writes its CSV and ``summary.json`` there, and returns a
:class:`RunResult` with the exit code.  Output text depends only on the
config and seed, never on the thread count.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import oracles
from .config import ConfigError, ExperimentConfig, Fixture
from .dynamics import (LeakageWarning, cesaro, drift_window, energy_profile, growth_exponents,
                       laplace_cutoff, log_slope, sparse_square_sequence, time_averages)
from .green import QuadratureGrid, green_average, green_integrals, green_vector
from .io import read_series, tool_version, write_csv, write_json
from .models import (AutonomousSpec, RankOneKickedSpec, RotorSpec, SampledPotential, FourierPotential,
                     build_autonomous, build_rank_one_kicked, build_rotor, exponential_phi,
                     index_probe, min_grid_size, oscillator_levels, random_unitary_operator,
                     rotor_probe)
from .operators import BasisWindow, FloquetOperator, ProbeOperator, StateVector

OK, FAILED, USAGE = 0, 1, 2


@dataclass
class RunResult:
    exit_code: int
    summary: dict
    files: list = field(default_factory=list)
    messages: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class Built:
    op: FloquetOperator
    probe: ProbeOperator
    xi: StateVector
    info: dict


def _rotor_potential(pot, G):
    if pot.kind == "linear":
        return SampledPotential.linear(pot.k, pot.theta, G)
    if pot.kind == "cosine":
        return SampledPotential.from_function(lambda x: pot.K * np.cos(x), G)
    return FourierPotential({k: complex(*v) for k, v in pot.coeffs.items()})


def _rotor_reach(pot) -> int:
    if pot.kind == "linear":
        return abs(pot.k)
    if pot.kind == "fourier":
        return max(abs(k) for k in pot.coeffs)
    return 0


def build(model, probe_cfg, state_cfg, seed: int, band_tol: float, T_max: float,
          tail_eps: float = 1e-12) -> Built:
    """Operator, probe and initial state described by the config sections."""
    q = probe_cfg.q
    conv = probe_cfg.convention
    phi = None
    if model.kind in ("autonomous", "rank_one_kicked"):
        chi = np.asarray(model.chi, float) if model.chi is not None else oscillator_levels(model.dim)
        if model.kind == "autonomous":
            spec = AutonomousSpec(chi, model.time_step)
            op, _ = build_autonomous(spec)
        else:
            base = AutonomousSpec(chi, 2 * math.pi)
            phi = exponential_phi(model.dim, model.phi_scale)
            spec = RankOneKickedSpec(base, model.kappa, phi)
            op = build_rank_one_kicked(spec)
        window = op.window
        conv = conv or "spectrum"
        levels = chi
    elif model.kind == "rotor":
        if model.half_width == "auto":
            reach = _rotor_reach(model.potential)
            if reach == 0:
                raise ConfigError("model.half_width: 'auto' needs a linear or fourier potential")
            window = drift_window(reach, T_max, 2 * q, tail_eps)
        else:
            window = BasisWindow.symmetric(model.half_width)
        G = model.grid_size or min_grid_size(window.dim)
        op = build_rotor(RotorSpec(model.omega, model.f_exponent, _rotor_potential(model.potential, G)),
                         window, band_tol)
        conv = conv or "momentum"
        levels = window.labels.astype(float)
    else:
        s = model.seed if model.seed is not None else seed
        op = random_unitary_operator(model.dim, s)
        window = op.window
        conv = conv or "index"
        levels = window.labels.astype(float)

    if conv == "spectrum":
        probe = ProbeOperator.powers(window, levels, q)
    elif conv == "momentum":
        probe = rotor_probe(window, q)
    else:
        probe = index_probe(window, q)

    if state_cfg.kind == "basis":
        label = state_cfg.label
        if label is None:
            label = 0 if 0 in window else window.lo
        if label not in window:
            raise ConfigError(f"initial_state.label: {label} outside window [{window.lo}, {window.hi}]")
        xi = StateVector.basis(window, label)
    elif state_cfg.kind == "random":
        xi = StateVector.random(window, np.random.default_rng(seed))
    else:
        if phi is None:
            raise ConfigError("initial_state.kind: 'phi' only applies to rank_one_kicked models")
        xi = StateVector(window, phi)
    info = {"model": model.kind, "window": [window.lo, window.hi], "probe": conv, "q": q}
    return Built(op, probe, xi, info)


def _meta(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "config_hash": cfg.digest(), "tool_version": tool_version(),
            "seed": cfg.seed}


def _finish(cfg, out: Path, command, exit_code, summary, files, messages=()):
    summary = {"command": command, "config_hash": cfg.digest(), "tool_version": tool_version(),
               "exit_code": exit_code, **summary,
               "files": sorted(p.name for p in files)}
    files = list(files) + [write_json(out / "summary.json", summary)]
    return RunResult(exit_code, summary, files, list(messages))


def _build_main(cfg: ExperimentConfig, T_max: float) -> Built:
    tol = cfg.tolerances
    return build(cfg.model, cfg.probe, cfg.initial_state, cfg.seed, tol.band_tol, T_max, tol.tail_eps)


def _quiet_time_averages(*a, **k):
    # leakage is reported in the table; the warning would only duplicate it
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LeakageWarning)
        return time_averages(*a, **k)


def run_verify_identity(cfg: ExperimentConfig, out) -> RunResult:
    out = Path(out)
    Ts = cfg.T_values
    b = _build_main(cfg, max(Ts))
    tol = cfg.tolerances
    grid = QuadratureGrid(cfg.n_e)
    times = _quiet_time_averages(b.op, b.probe, b.xi, Ts, tol.tail_eps, leak_tol=tol.leak_tol)
    rows, failures, diagnostics = [], [], []
    for ta in times:
        ga = green_average(b.op, b.probe, b.xi, ta.T, grid, cfg.threads)
        rel = abs(ga.value - ta.value) / abs(ta.value) if ta.value else abs(ga.value)
        leak = max(ta.leakage, ga.leakage)
        rows.append([ta.T, ta.value, ga.value, rel, leak, ta.m_max, grid.n_nodes])
        if rel > tol.identity:
            failures.append(ta.T)
            if ga.aliasing_estimate > tol.identity:
                need = QuadratureGrid.for_accuracy(ta.T, tol.identity, grid.n_nodes).n_nodes
                diagnostics.append(
                    f"quadrature-suspect at T={ta.T:g}: N_E={grid.n_nodes} has aliasing estimate "
                    f"{ga.aliasing_estimate:.2e} > tolerance {tol.identity:g}; try --n-e {need}")
            if leak > tol.leak_tol:
                diagnostics.append(f"leakage-suspect at T={ta.T:g}: edge weight {leak:.2e}")
            if ta.tail_bound > tol.identity * abs(ta.value):
                diagnostics.append(f"tail-suspect at T={ta.T:g}: tail bound {ta.tail_bound:.2e}")
    f = write_csv(out / "verify_identity.csv",
                  ["T", "L_time", "L_green", "rel_err", "leakage", "m_max", "N_E"], rows,
                  _meta(cfg, "verify-identity"))
    code = FAILED if failures else OK
    return _finish(cfg, out, "verify-identity", code,
                   {"passed": not failures, "failed_T": failures, "diagnostics": diagnostics,
                    "tolerance": tol.identity, **b.info}, [f], diagnostics)


def run_sweep(cfg: ExperimentConfig, out) -> RunResult:
    out = Path(out)
    Ts = cfg.T_values
    b = _build_main(cfg, max(Ts))
    tol = cfg.tolerances
    grid = QuadratureGrid(cfg.n_e)
    prof = []
    times = _quiet_time_averages(b.op, b.probe, b.xi, Ts, tol.tail_eps, leak_tol=tol.leak_tol,
                                 min_steps=int(math.floor(max(Ts))), profile_out=prof)
    E, leak_prefix = prof
    rows, suspect = [], []
    for ta in times:
        ga = green_average(b.op, b.probe, b.xi, ta.T, grid, cfg.threads)
        n = int(math.floor(ta.T))
        C = cesaro(E, n) if n >= 1 else math.nan
        leak = max(ta.leakage, ga.leakage, float(leak_prefix[n]))
        rows.append([ta.T, ga.value, ta.value, C, leak])
        if ga.aliasing_estimate > tol.identity:
            suspect.append(ta.T)
    f = write_csv(out / "sweep.csv", ["T", "L_green", "L_time", "C", "leakage"], rows,
                  _meta(cfg, "sweep"))
    summary = {"n_points": len(rows), **b.info,
               "quadrature_suspect_T": suspect,
               "leakage_max": max(r[4] for r in rows)}
    if len(rows) >= 2:
        summary["slope_L_time"] = log_slope([r[0] for r in rows], [r[2] for r in rows])
        summary["slope_L_green"] = log_slope([r[0] for r in rows], [r[1] for r in rows])
    return _finish(cfg, out, "sweep", OK, summary, [f])


_SEQUENCES = {
    "ones": lambda n: np.ones(np.shape(n)),
    "linear": lambda n: np.asarray(n, float),
    "square": lambda n: np.asarray(n, float) ** 2,
    "cube": lambda n: np.asarray(n, float) ** 3,
    "sparse_squares": sparse_square_sequence,
}


def exponent_report(source, Ts) -> dict:
    """Growth exponents plus the bounded-average / unbounded-sequence flags."""
    g = growth_exponents(source, Ts)
    top = int(math.floor(Ts[-1]))
    h = np.asarray(source(np.arange(top + 1)) if callable(source) else source[:top + 1], float)
    running_max = np.maximum.accumulate(h)
    lo, hi = g.fit_window
    sel = [i for i, t in enumerate(g.T_grid) if lo <= t <= hi]
    Tf = [g.T_grid[i] for i in sel]
    avg_slope = log_slope(Tf, [g.averaged_d[i] for i in sel])
    sup = [running_max[int(math.floor(t))] for t in Tf]
    sup_slope = log_slope(Tf, sup) if min(sup) > 0 else 0.0
    d = g.as_dict()
    d.update({
        # exponents of the averages (1/T) sum and (2/T) sum e^{-2m/T}: one less
        "beta_e_plus_normalized": g.beta_e_plus - 1,
        "beta_e_minus_normalized": g.beta_e_minus - 1,
        "beta_d_plus_normalized": g.beta_d_plus - 1,
        "beta_d_minus_normalized": g.beta_d_minus - 1,
        "normalized_average_slope": avg_slope,
        "normalized_average_bounded": abs(avg_slope) <= 0.05,
        "sequence_sup_slope": sup_slope,
        "sequence_unbounded": sup_slope > 0.05,
    })
    d["bounded_average_unbounded_sequence"] = d["normalized_average_bounded"] and d["sequence_unbounded"]
    return d


def run_exponents(cfg: ExperimentConfig, out, series_csv=None) -> RunResult:
    out = Path(out)
    Ts = cfg.T_values
    ex = cfg.exponents
    series_csv = series_csv or ex.series_csv
    if series_csv:
        source, origin = read_series(series_csv), f"csv:{Path(series_csv).name}"
    elif ex.sequence:
        source, origin = _SEQUENCES[ex.sequence], f"sequence:{ex.sequence}"
    else:
        b = _build_main(cfg, max(Ts))
        bound = float(np.max(b.probe.lambdas)) * b.xi.norm() ** 2
        steps = max(laplace_cutoff(max(Ts), bound, cfg.tolerances.tail_eps), int(max(Ts)))
        source, leak = energy_profile(b.op, b.probe, b.xi, steps)
        origin = f"model:{cfg.model.kind}"
    rep = exponent_report(source, Ts)
    rep["source"] = origin
    rows = [[t, se, sd, ae, ad] for t, se, sd, ae, ad in
            zip(rep["T_grid"], rep["sums_e"], rep["sums_d"], rep["averaged_e"], rep["averaged_d"])]
    f = write_csv(out / "exponents.csv", ["T", "sum_e", "sum_d", "avg_e", "avg_d"], rows,
                  _meta(cfg, "exponents"))
    return _finish(cfg, out, "exponents", OK, {"exponents": rep}, [f])


def _fixture_rows(fx: Fixture, cfg: ExperimentConfig):
    """``[(T, label, pipeline, oracle, err)]`` with ``err`` on the fixture's scale."""
    tol = cfg.tolerances
    b = build(fx.model, fx.probe, fx.initial_state, cfg.seed, tol.band_tol, max(fx.T_grid),
              tol.tail_eps)
    grid = QuadratureGrid(cfg.n_e)
    rows = []
    kind = fx.model.kind

    def need(*kinds):
        if kind not in kinds:
            raise ConfigError(f"fixture {fx.name!r}: oracle {fx.oracle!r} needs a {' or '.join(kinds)} model")

    if fx.oracle == "autonomous":
        need("autonomous")
        for T in fx.T_grid:
            p = green_average(b.op, b.probe, b.xi, T, grid, cfg.threads).value
            o = oracles.autonomous_closed_form(b.probe, b.xi, T)
            rows.append((T, "L", p, o, abs(p - o) / abs(o)))
    elif fx.oracle == "residue":
        need("autonomous")
        labels = b.op.window.labels[:8]
        for T in fx.T_grid:
            o = oracles.residue_integral(T)
            for j in labels:
                xi = StateVector.basis(b.op.window, int(j))
                p = float(green_integrals(b.op, xi, T, grid, cfg.threads)[b.op.window.position(int(j))])
                rows.append((T, f"I_{j}", p, o, abs(p - o)))
    elif fx.oracle == "kicked_ho":
        need("rank_one_kicked")
        m = fx.model
        chi = np.asarray(m.chi, float) if m.chi is not None else oscillator_levels(m.dim)
        spec = RankOneKickedSpec(AutonomousSpec(chi, 2 * math.pi), m.kappa,
                                 exponential_phi(m.dim, m.phi_scale))
        cf = oracles.KickedHOClosedForm.from_spec(spec, fx.probe.q)
        xi = StateVector.basis(b.op.window, b.op.window.lo)
        times = _quiet_time_averages(b.op, b.probe, xi, fx.T_grid, tol.tail_eps)
        for ta in times:
            o = oracles.kicked_ho_laplace(cf, ta.T)
            rows.append((ta.T, "L_time", ta.value, o, abs(ta.value - o) / abs(o)))
    elif fx.oracle == "kicked_green":
        need("rank_one_kicked")
        m = fx.model
        b_vec = exponential_phi(m.dim, m.phi_scale)
        xi = StateVector.basis(b.op.window, b.op.window.lo)
        for T in fx.T_grid:
            for E in (0.3, 1.7, 4.0):
                g = green_vector(b.op, xi, T, E)
                o = oracles.kicked_ho_green_coeffs(b_vec, m.kappa, g.z)
                err = float(np.max(np.abs(g.values - o)))
                rows.append((T, f"E={E}", float(np.max(np.abs(g.values))), float(np.max(np.abs(o))), err))
    elif fx.oracle == "rotor_Ij":
        need("rotor")
        pot = fx.model.potential
        if pot.kind != "linear":
            raise ConfigError(f"fixture {fx.name!r}: rotor_Ij needs a linear potential")
        w = b.op.window
        xi = StateVector.basis(w, 0)
        for T in fx.T_grid:
            I = green_integrals(b.op, xi, T, grid, cfg.threads)
            errs = []
            for j in w.labels[8:-8]:
                o = oracles.rotor_linear_Ij(pot.k, int(j), T)
                p = float(I[w.position(int(j))])
                errs.append(abs(p - o) / (2 * math.pi) if o == 0 else abs(p - o) / o)
            j0 = 0
            rows.append((T, "max_j", float(I[w.position(j0)]), oracles.rotor_linear_Ij(pot.k, j0, T),
                         max(errs)))
    elif fx.oracle == "shift":
        need("rotor")
        m = fx.model
        sc = oracles.shift_equivalence_check(b.op, m.omega, m.f_exponent, tol.band_tol)
        rows.append((math.nan, f"offset={sc.offset}", sc.defect, 0.0, sc.defect))
    return rows


def run_oracle_compare(cfg: ExperimentConfig, out) -> RunResult:
    out = Path(out)
    table, failing = [], []
    for fx in cfg.fixtures:
        try:
            rows = _fixture_rows(fx, cfg)
            ok = all(r[4] <= fx.tol for r in rows)
        except (ValueError, ArithmeticError) as e:
            if isinstance(e, ConfigError):
                raise
            rows, ok = [(math.nan, f"error: {e}", math.nan, math.nan, math.nan)], False
        for T, label, p, o, err in rows:
            table.append([fx.name, fx.oracle, T, label, p, o, err, fx.tol, err <= fx.tol])
        if not ok:
            failing.append(f"{fx.name} ({fx.oracle})")
    f = write_csv(out / "oracle_compare.csv",
                  ["fixture", "oracle", "T", "quantity", "pipeline", "oracle_value", "error", "tol", "pass"],
                  table, _meta(cfg, "oracle-compare"))
    msgs = [f"FAIL {name}" for name in failing]
    return _finish(cfg, out, "oracle-compare", FAILED if failing else OK,
                   {"n_fixtures": len(cfg.fixtures), "failing": failing}, [f], msgs)


def run_shift_check(cfg: ExperimentConfig, out) -> RunResult:
    out = Path(out)
    sc_cfg = cfg.shift
    tol = cfg.tolerances
    w = BasisWindow.symmetric(sc_cfg.half_width)
    G = min_grid_size(w.dim)
    rows, bad = [], []
    for N in sc_cfg.N:
        for om in sc_cfg.omega:
            for th in sc_cfg.theta:
                op = build_rotor(RotorSpec(om, N, SampledPotential.linear(N, th, G)), w, tol.band_tol)
                try:
                    r = oracles.shift_equivalence_check(op, om, N, tol.band_tol)
                    offset, defect = r.offset, r.defect
                except oracles.BandStructureError:
                    offset, defect = 0, math.inf
                ok = defect <= tol.shift
                rows.append([N, om, th, offset, defect, ok])
                if not ok:
                    bad.append([N, om, th])
    f = write_csv(out / "shift_check.csv", ["N", "omega", "theta", "offset", "defect", "pass"], rows,
                  _meta(cfg, "shift-check"))
    return _finish(cfg, out, "shift-check", FAILED if bad else OK,
                   {"max_defect": max(r[4] for r in rows), "failing": bad, "tolerance": tol.shift},
                   [f])


def run_certificate(cfg: ExperimentConfig, out) -> RunResult:
    out = Path(out)
    if cfg.certificate is None:
        raise ConfigError("certificate: section required for the certificate command")
    c = cfg.certificate
    Ts = cfg.T_values
    b = _build_main(cfg, max(Ts))
    cert = oracles.CertificateSpec(c.K, c.alpha, c.delta, c.gamma, tuple(map(tuple, c.intervals)),
                                   samples=c.samples)
    grid = QuadratureGrid(cfg.n_e)
    rows = oracles.instability_certificate(
        b.op, b.xi, b.probe, cert, Ts, grid,
        measure=lambda T: green_average(b.op, b.probe, b.xi, T, grid, cfg.threads).value)
    unsound = [r.T for r in rows if r.hypothesis_ok and r.bound > r.measured_L]
    meta = _meta(cfg, "certificate")
    txt = out / "certificate.txt"
    txt.parent.mkdir(parents=True, exist_ok=True)
    txt.write_text("".join(f"# {k}: {v}\n" for k, v in meta.items())
                   + "".join(r.record() + "\n" for r in rows))
    f = write_csv(out / "certificate.csv",
                  ["T", "N", "hypothesis_ok", "min_ratio", "J_T_measure", "bound", "measured_L",
                   "predicted_exponent"],
                  [[r.T, r.N, r.hypothesis_ok, r.min_ratio, r.measure, r.bound, r.measured_L,
                    r.predicted_exponent] for r in rows], meta)
    held = [r.T for r in rows if r.hypothesis_ok]
    return _finish(cfg, out, "certificate", FAILED if unsound else OK,
                   {"hypothesis_held_T": held, "hypothesis_failed_T": [r.T for r in rows if not r.hypothesis_ok],
                    "unsound_T": unsound, "predicted_exponent": rows[0].predicted_exponent if rows else None},
                   [txt, f])


COMMANDS = {
    "verify-identity": run_verify_identity,
    "sweep": run_sweep,
    "exponents": run_exponents,
    "oracle-compare": run_oracle_compare,
    "shift-check": run_shift_check,
    "certificate": run_certificate,
}
