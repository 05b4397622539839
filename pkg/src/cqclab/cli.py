"""Command-line front end.

    cqclab collapse --config born.toml --out runs/born
    cqclab verify --threads 4

Exit codes: 0 all checks pass, 2 configuration error, 3 a check failed,
4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, acceptance, csl, density, energy, fields, noise, spins, timeop
from .config import KINDS, ConfigError, ExperimentConfig, load_config
from .linalg import DensityMatrix, HermitianOperator, NumericalError, StateVector, ValidationError

log = logging.getLogger("cqclab")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_NUMERIC = 0, 2, 3, 4


@dataclass
class RunRecord:
    kind: str
    resolved_config: dict
    artifact_version: str = __version__
    wall_clock_s: float = 0.0
    checks: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)  # file name -> sha256
    out_dir: str = ""

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "artifact_version": self.artifact_version,
                "wall_clock_s": self.wall_clock_s,
                "passed": self.passed,
                "checks": self.checks,
                "outputs": self.outputs,
                "resolved_config": self.resolved_config,
            },
            indent=2,
            sort_keys=True,
        )


def _r(x) -> str:
    return repr(float(x))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([_r(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


class _Writer:
    def __init__(self, out: Path):
        self.out = out
        self.outputs: dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str):
        self.bytes(name, content.encode())

    def bytes(self, name: str, blob: bytes):
        (self.out / name).write_bytes(blob)
        self.outputs[name] = hashlib.sha256(blob).hexdigest()


def _check(value, limit, passed=None, below=True) -> dict:
    ok = (value < limit if below else value > limit) if passed is None else passed
    return {"passed": bool(ok), "value": float(value), "limit": float(limit)}


# --- experiments ----------------------------------------------------------------------


def _collapse(cfg: ExperimentConfig, w: _Writer) -> dict:
    p, sc = cfg.collapse, cfg.tolerance_scale
    h = p.hamiltonian()
    st = csl.run_collapse_ensemble(
        p.amplitudes(), p.a, p.lam, p.t, p.dt, p.n_traj, cfg.master_seed, p.sampler,
        h_a=HermitianOperator(h), bins=p.bins, threads=cfg.threads,
    )
    widths = np.diff(st.bin_edges)
    centers = 0.5 * (st.bin_edges[1:] + st.bin_edges[:-1])
    emp = st.counts / (st.n_traj * widths)
    w.text("collapse_histogram.csv", _csv(
        ["bin_lo", "bin_hi", "count", "empirical_density", "mixture_density"],
        zip(st.bin_edges[:-1], st.bin_edges[1:], st.counts.tolist(), emp, st.mixture_pdf(centers)),
    ))
    sig = st.binomial_sigma()
    w.text("collapse_outcomes.csv", _csv(
        ["eigenvalue", "born_weight", "frequency", "binomial_sigma"],
        zip(st.eigenvalues, st.weights, st.frequencies, sig),
    ))
    if p.dump_trajectories:
        grid = noise.TimeGrid.from_horizon(p.t, p.dt)
        phi = StateVector.from_amplitudes(p.amplitudes())
        a = HermitianOperator.diagonal(p.a)
        for i in range(min(p.dump_trajectories, p.n_traj)):
            if p.sampler == noise.PHYSICAL:
                traj, _ = noise.sample_physical_sequential(phi, a, HermitianOperator(h), grid, p.lam, cfg.master_seed, i)
            else:
                traj = noise.sample_raw_white(grid, p.lam, cfg.master_seed, i)
            w.bytes(f"trajectory_{i:05d}.bin", noise.to_binary(traj))
    z = float(np.max(np.abs(st.frequencies - st.weights) / np.maximum(sig, 1e-300)))
    checks = {"born_within_3sigma": _check(z, 3 * sc)}
    if p.sampler == noise.PHYSICAL and np.any(np.diff(np.sort(st.eigenvalues)) > 0):
        checks["ks_mixture_1pct"] = _check(st.ks_pvalue, 0.01 / sc, below=False)
    return checks


def _density(cfg: ExperimentConfig, w: _Writer) -> dict:
    p, sc = cfg.density, cfg.tolerance_scale
    phi = StateVector.from_amplitudes(p.amplitudes())
    a = HermitianOperator.diagonal(p.a)
    h = HermitianOperator(p.hamiltonian())
    spec = density.MasterEvolutionSpec(a, h, p.lam, p.t, p.dt_ode)
    master = density.density_master(DensityMatrix.pure(phi), spec)
    grid = noise.TimeGrid.from_horizon(p.t, p.dt)
    ens = csl.simulate_ensemble(phi, a, h, p.lam, grid, p.n_traj, cfg.master_seed, p.sampler, threads=cfg.threads)
    mc = density.density_monte_carlo(ens)
    w.text("rho_master.csv", density.to_csv(master))
    w.text("rho_monte_carlo.csv", density.to_csv(mc))
    w.text("rho_monte_carlo.json", json.dumps(density.to_json(mc, measure=p.sampler), sort_keys=True))
    se = density.aggregate_stderr(mc)
    checks = {"mc_vs_master_in_se": _check(density.frobenius(master, mc) / se, 5 * sc)}
    if not np.any(p.hamiltonian()):
        closed = density.density_closed_form(p.amplitudes(), p.a, p.lam, p.t)
        w.text("rho_closed.csv", density.to_csv(closed))
        checks["closed_vs_master"] = _check(density.frobenius(closed, master), 1e-8 * sc)
    return checks


def _energy(cfg: ExperimentConfig, w: _Writer) -> dict:
    sc = cfg.tolerance_scale
    checks = {}
    if cfg.energy.lattice is not None:
        lat = cfg.energy.lattice
        x = (np.arange(lat.sites) - (lat.sites - 1) / 2) * lat.spacing
        phi = StateVector(np.exp(-(x**2) / (4 * lat.sigma0**2)).astype(complex)).normalize()
        hk = HermitianOperator(csl.lattice_kinetic(lat.sites, lat.spacing, lat.mass))
        sm = csl.build_smeared_A(x, lat.smearing, lat.mass_ratio)
        path = energy.energy_paths(phi, sm, hk, lat.lam, lat.t, lat.dt_ode)
        target = energy.heating_rate(lat.lam, lat.mass, sm.effective_rate_factor())
        w.text("energy_heating.csv", _csv(
            ["t", "mean_HA", "mean_Hw", "total", "oracle_mean_HA"],
            zip(path["t"], path["mean_HA"], path["mean_Hw"], path["total"], path["mean_HA"][0] + target * path["t"]),
        ))
        slope = float(np.polyfit(path["t"], path["mean_HA"], 1)[0])
        checks["heating_slope_rel_err"] = _check(abs(slope / target - 1), 0.10 * sc)
        checks["conservation"] = _check(float(np.max(np.abs(path["total"] - path["total"][0]))), 1e-6 * sc)
        return checks

    p = cfg.energy.diag
    alpha, a, lam = p.amplitudes(), np.asarray(p.a), p.lam
    e = np.linspace(-p.e_max, p.e_max, p.n_e)
    tot = energy.dist_total_diag(alpha, a, lam, e)
    inv = energy.invert_charfn(lambda b: energy.charfn_total_diag(alpha, a, lam, b).values, e, p.beta_max, p.n_beta)
    w.text("energy_total.csv", _csv(["E", "inverted", "cauchy_oracle"], zip(e, inv.density, tot.density)))
    w.text("energy_total.json", json.dumps(energy.to_json(tot, lam=lam), sort_keys=True))
    fw = energy.dist_w_diag(alpha, a, lam, p.t, e)
    large = energy.dist_w_large_t_diag(alpha, a, lam, p.t, e)
    w.text("energy_field.csv", _csv(["E", "density", "large_t_lorentzian"], zip(e, fw.density, large.density)))
    w.text("energy_field.json", json.dumps(energy.to_json(fw, lam=lam, t=p.t), sort_keys=True))
    it = energy.dist_interaction_diag(alpha, a, lam, p.dt, e)
    w.text("energy_interaction.csv", _csv(["E", "density"], zip(e, it.density)))
    checks["total_inversion_err"] = _check(float(np.max(np.abs(inv.density - tot.density))), 1e-3 * sc)
    for name, d in (("total", tot), ("field", fw), ("interaction", it)):
        checks[f"{name}_mass"] = _check(abs(d.total_mass() - 1.0), 0.01 * sc)
    h = p.hamiltonian()
    if np.any(h):
        phi = StateVector.from_amplitudes(alpha)
        path = energy.energy_paths(phi, HermitianOperator.diagonal(a), HermitianOperator(h), lam, p.t, p.dt_ode)
        w.text("energy_conservation.csv", _csv(["t", "mean_HA", "mean_Hw", "total"],
                                               zip(path["t"], path["mean_HA"], path["mean_Hw"], path["total"])))
        checks["conservation"] = _check(float(np.max(np.abs(path["total"] - path["total"][0]))), 1e-6 * sc)
    return checks


def _timeop(cfg: ExperimentConfig, w: _Writer) -> dict:
    p, sc = cfg.timeop, cfg.tolerance_scale
    rows, worst_deriv, min_var = [], 0.0, np.inf
    for t in p.t_values:
        spec = timeop.TimeOpSpec(p.alpha, p.a, p.lam, t, p.s, p.A_scale)
        m, m2, var = timeop.mean_T(spec), timeop.second_moment_T(spec), timeop.variance_T(spec)
        rows.append((t, m, m2, var, spec.r1()))
        min_var = min(min_var, var)
        if p.s == 0:
            d = energy.charfn_moment(lambda b, spec=spec: timeop.charfn_T_diag(spec, b, p.series_tol).values, 1)
            worst_deriv = max(worst_deriv, abs(d - m))
    w.text("timeop_moments.csv", _csv(["t", "mean_T", "second_moment_T", "variance_T", "center_of_time"], rows))
    checks = {"variance_nonnegative": _check(min_var, -1e-12, below=False)}
    if p.s == 0:
        checks["charfn_derivative_vs_mean"] = _check(worst_deriv, 1e-6 * sc)
    return checks


def _spins(cfg: ExperimentConfig, w: _Writer) -> dict:
    p, sc = cfg.spins, cfg.tolerance_scale
    x = spins.sample_spin_blocks(p.N, p.betaC, cfg.master_seed, p.n_samples)
    s = spins.support(p.N)
    counts = np.bincount((x + p.N) // 2, minlength=p.N + 1)
    exact = spins.spin_block_pmf(p.N, p.betaC, s)
    gauss = spins.spin_block_pmf(p.N, p.betaC, s, "gauss")
    w.text("spins_pmf.csv", _csv(["s", "exact", "gaussian", "empirical"], zip(s.tolist(), exact, gauss, counts / p.n_samples)))
    ks = spins.ks_discrete(x, p.N, p.betaC)
    return {
        "ks_1pct": _check(ks["D"], ks["critical_1pct"] * sc),
        "pmf_normalization": _check(abs(exact.sum() - 1.0), 1e-12 * sc),
    }


def _fields(cfg: ExperimentConfig, w: _Writer) -> dict:
    p, sc = cfg.fields, cfg.tolerance_scale
    mapping = fields.field_mapping_constants(p.M, p.lam)
    w.text("fields_mapping.json", json.dumps(mapping, sort_keys=True))
    base = fields.discrete_mode_commutator_check(p.n_times, p.n_freqs, p.tau)
    ref = fields.refinement_study(p.n_times, p.n_freqs, p.tau, p.levels)
    w.text("fields_refinement.csv", _csv(
        ["n_times", "continuum_deviation"], [(p.n_times * 2**i, d) for i, d in enumerate(ref["deviations"])]
    ))
    worst_ratio = max(abs(r - 2.0) for r in ref["ratios"])
    return {
        "dft_identity": _check(base["dft_deviation"], 1e-12 * sc),
        "halving_ratio_within_20pct": _check(worst_ratio, 0.4 * sc),
        "mapping_identity": _check(mapping["identity_residual"], 1e-12 * sc),
    }


def _audit(cfg: ExperimentConfig, w: _Writer) -> dict:
    p = cfg.audit
    k = spins.default_constants()
    if p.constants_file:
        try:
            text = Path(p.constants_file).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read constants file: {exc}") from None
        k = spins.parse_constants(text, base=k)
    if p.constants:
        k = spins.parse_constants("".join(f"{a} = {b!r}\n" for a, b in p.constants.items()), base=k)
    rep = spins.audit_parameters(k, p.temperatures_ev, p.rho)
    w.text("audit.csv", rep.to_csv())
    w.text("audit.txt", rep.to_text())
    w.text("constants.txt", k.to_text())
    cons = max(rep.consistency.values())
    return {
        "planck_units_consistent": _check(cons, 1e-3 * cfg.tolerance_scale),
        "small_coupling_all": {"passed": all(rep.small_coupling), "value": float(max(rep.log10_betaC)), "limit": -1.0},
    }


RUNNERS = {
    "collapse": _collapse,
    "density": _density,
    "energy": _energy,
    "timeop": _timeop,
    "spins": _spins,
    "fields": _fields,
    "audit": _audit,
}


def run_experiment(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> RunRecord:
    """Run one configured experiment; writes outputs, resolved config and run record."""
    out_dir = Path(out if out is not None else cfg.out)
    w = _Writer(out_dir)
    t0 = time.perf_counter()
    checks = RUNNERS[cfg.kind](cfg, w)
    resolved = cfg.resolved()
    w.text("resolved_config.json", json.dumps(resolved, indent=2, sort_keys=True))
    rec = RunRecord(cfg.kind, resolved, wall_clock_s=time.perf_counter() - t0, checks=checks, outputs=dict(w.outputs), out_dir=str(out_dir))
    (out_dir / "run_record.json").write_text(rec.to_json())
    return rec


# --- plot data ------------------------------------------------------------------------

PLOT_OUTPUTS = {
    "collapse_histogram": "collapse_histogram.csv",
    "collapse_outcomes": "collapse_outcomes.csv",
    "energy_total": "energy_total.csv",
    "energy_field": "energy_field.csv",
    "energy_interaction": "energy_interaction.csv",
    "energy_heating": "energy_heating.csv",
    "energy_conservation": "energy_conservation.csv",
    "timeop_moments": "timeop_moments.csv",
    "spins_pmf": "spins_pmf.csv",
    "fields_refinement": "fields_refinement.csv",
    "audit": "audit.csv",
}


def emit_plot_data(record: RunRecord | str | os.PathLike, which: str, dest: str | os.PathLike) -> Path:
    """Copy a recorded tabular output (data plus oracle columns) to ``dest``.

    A referenced output with no rows yields a header-only file.
    """
    if which not in PLOT_OUTPUTS:
        raise KeyError(f"unknown output id {which!r}; known: {sorted(PLOT_OUTPUTS)}")
    if isinstance(record, RunRecord):
        out_dir, outputs = Path(record.out_dir), record.outputs
    else:
        rp = Path(record)
        data = json.loads(rp.read_text())
        out_dir, outputs = rp.parent, data["outputs"]
    name = PLOT_OUTPUTS[which]
    if name not in outputs:
        raise KeyError(f"output {which!r} was not produced by this run")
    src = out_dir / name
    blob = src.read_bytes()
    if hashlib.sha256(blob).hexdigest() != outputs[name]:
        raise ValidationError(f"{name} does not match its recorded digest")
    lines = blob.decode().splitlines()
    dest = Path(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text("\n".join(lines) + "\n" if lines else "")
    return dest


# --- entry point ----------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cqclab", description="Collapse-model simulations and checks")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="TOML config (or resolved_config.json)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--threads", type=int, help="worker threads (default: config, else all cores; results do not depend on it)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--tolerance-scale", type=float, dest="tolerance_scale", help="multiply check tolerances")
        p.add_argument("-v", "--verbose", action="store_true")

    for kind in KINDS:
        common(sub.add_parser(kind, help=f"run a {kind} experiment"), True)
    vp = sub.add_parser("verify", help="run the acceptance suite")
    common(vp, False)
    vp.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    pp = sub.add_parser("plot-data", help="export a recorded output as plot-ready CSV")
    pp.add_argument("--record", required=True)
    pp.add_argument("--which", required=True)
    pp.add_argument("--dest", required=True)
    return ap


def _verify(args) -> int:
    seed = acceptance.DEFAULT_SEED if args.seed is None else args.seed
    threads = args.threads or os.cpu_count() or 1
    scale = args.tolerance_scale or 1.0
    results = acceptance.run_all(seed, threads, scale, only=args.only)
    for r in results:
        print(r.line())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [(r.number, r.name, "pass" if r.passed else "fail", r.seconds) for r in results]
        (out / "acceptance.csv").write_text(_csv(["criterion", "name", "result", "seconds"], rows))
        (out / "acceptance.json").write_text(json.dumps(
            [{"number": r.number, "name": r.name, "passed": r.passed, "metrics": r.metrics} for r in results],
            indent=2, sort_keys=True, default=float,
        ))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot-data":
            print(emit_plot_data(args.record, args.which, args.dest))
            return EXIT_OK
        if args.command == "verify":
            return _verify(args)
        cfg = load_config(args.config, {"master_seed": args.seed, "threads": args.threads,
                                        "tolerance_scale": args.tolerance_scale, "out": args.out})
        if cfg.kind != args.command:
            raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
        rec = run_experiment(cfg)
    except (ConfigError, ValidationError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, OverflowError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name, c in rec.checks.items():
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {name}: {c['value']:.6g} (limit {c['limit']:.6g})")
    print(f"record: {Path(rec.out_dir) / 'run_record.json'}")
    return EXIT_OK if rec.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
