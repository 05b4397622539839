"""The ten acceptance checks, shared by the test suite and ``cqclab verify``.

Each check returns a CheckResult; nothing here asserts.  Tolerances are the
stated criterion limits multiplied by ``tolerance_scale`` (1 for the real run).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import csl, density, energy, fields, spins, timeop
from .linalg import DensityMatrix, HermitianOperator, StateVector, pauli, random_hermitian
from .noise import PHYSICAL, RAW, TimeGrid, sample_raw_white

DEFAULT_SEED = 20240607


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        brief = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items() if not isinstance(v, (list, dict)))
        return f"[{tag}] {self.number:2d} {self.name}: {brief} ({self.seconds:.1f}s)"


def _fmt(v):
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(number, name, fn, *args, **kw) -> CheckResult:
    t0 = time.perf_counter()
    passed, metrics = fn(*args, **kw)
    return CheckResult(number, name, bool(passed), metrics, time.perf_counter() - t0)


# 1 ---------------------------------------------------------------------------------


def born_statistics(seed=DEFAULT_SEED, threads=1, scale=1.0, n_traj=20000):
    t0 = time.perf_counter()
    st = csl.run_collapse_ensemble(np.sqrt([0.3, 0.7]), [0.0, 1.0], 1.0, 10.0, 0.01, n_traj, seed, PHYSICAL, threads=threads)
    elapsed = time.perf_counter() - t0
    z = np.abs(st.frequencies - st.weights) / st.binomial_sigma()
    ok = bool(np.all(z < 3 * scale) and st.ks_pvalue > 0.01 / scale and elapsed < 60)
    return ok, {
        "freq0": float(st.frequencies[0]),
        "freq1": float(st.frequencies[1]),
        "max_z": float(z.max()),
        "ks_p": st.ks_pvalue,
        "runtime_s": elapsed,
    }


# 2 ---------------------------------------------------------------------------------

EQUIV_TIMES = (1.0, 5.0, 10.0)


def _equiv_system():
    sx, _, _ = pauli()
    a = HermitianOperator.diagonal([-0.15, 0.15])
    h = HermitianOperator(0.5 * sx)
    phi = StateVector.from_amplitudes([np.sqrt(0.4), np.sqrt(0.6) * np.exp(0.3j)])
    return phi, a, h


def sampler_equivalence(seed=DEFAULT_SEED, threads=1, scale=1.0, n_traj=20000):
    phi, a, h = _equiv_system()
    grid = TimeGrid.from_horizon(10.0, 0.01)
    raw = csl.simulate_ensemble(phi, a, h, 1.0, grid, n_traj, seed, RAW, EQUIV_TIMES, threads)
    phys = csl.simulate_ensemble(phi, a, h, 1.0, grid, n_traj, seed + 1, PHYSICAL, EQUIV_TIMES, threads)
    worst_rho, worst_mart = 0.0, 0.0
    per_time = {}
    for t in EQUIV_TIMES:
        r_states, _, r_lw = raw.checkpoints[t]
        p_states, _, _ = phys.checkpoints[t]
        mr, ser = density.weighted_outer_mean(r_states, np.exp(r_lw))
        mp, sep = density.weighted_outer_mean(p_states)
        comb_re = np.sqrt(ser.real**2 + sep.real**2)
        comb_im = np.sqrt(ser.imag**2 + sep.imag**2)
        dev = np.concatenate([(np.abs((mr - mp).real) / np.maximum(comb_re, 1e-300)).ravel(),
                              (np.abs((mr - mp).imag) / np.maximum(comb_im, 1e-300)).ravel()])
        # entries that are identically equal in both (zero error) do not count
        dev = dev[np.isfinite(dev) & (np.concatenate([comb_re.ravel(), comb_im.ravel()]) > 0)]
        wts = np.exp(r_lw)
        mart = abs(wts.mean() - 1.0) / (wts.std(ddof=1) / math.sqrt(wts.size))
        worst_rho, worst_mart = max(worst_rho, float(dev.max())), max(worst_mart, float(mart))
        per_time[t] = {"rho_dev_sigma": float(dev.max()), "norm_mean": float(wts.mean()), "norm_dev_sigma": float(mart)}
    ok = worst_rho < 5 * scale and worst_mart < 4 * scale
    return ok, {"max_rho_dev_sigma": worst_rho, "max_norm_dev_sigma": worst_mart, "per_time": per_time}


# 3 ---------------------------------------------------------------------------------


def three_route_density(seed=DEFAULT_SEED, threads=1, scale=1.0, n_traj=4000):
    cases = [
        (np.sqrt([0.3, 0.7]).astype(complex), np.array([0.0, 1.0]), 1.0, 1.0),
        (np.array([0.5, 0.5j, np.sqrt(0.5)]), np.array([-1.0, 0.0, 0.5]), 0.7, 1.5),
    ]
    det_worst, mc_worst = 0.0, 0.0
    for i, (alpha, a_vals, lam, t) in enumerate(cases):
        closed = density.density_closed_form(alpha, a_vals, lam, t)
        a = HermitianOperator.diagonal(a_vals)
        h = HermitianOperator.zeros(a.dim)
        spec = density.MasterEvolutionSpec(a, h, lam, t, dt_ode=1e-3)
        master = density.density_master(DensityMatrix.pure(StateVector(alpha)), spec)
        grid = TimeGrid.from_horizon(t, 0.01)
        ens = csl.simulate_ensemble(StateVector(alpha), a, h, lam, grid, n_traj, seed + 10 + i, PHYSICAL, threads=threads)
        mc = density.density_monte_carlo(ens)
        det_worst = max(det_worst, density.frobenius(closed, master))
        mc_worst = max(mc_worst, density.frobenius(closed, mc) / density.aggregate_stderr(mc))
    ok = det_worst < 1e-8 * scale and mc_worst < 5 * scale
    return ok, {"closed_vs_master": det_worst, "closed_vs_mc_in_se": mc_worst}


# 4 ---------------------------------------------------------------------------------


def energy_distributions(seed=DEFAULT_SEED, threads=1, scale=1.0):
    alpha = np.sqrt([0.3, 0.7])
    a = np.array([0.5, 1.0])
    lam = 1.0
    scale_e = lam * np.max(a) ** 2
    e = np.linspace(-10 * scale_e, 10 * scale_e, 201)
    closed = energy.dist_total_diag(alpha, a, lam, e)
    inv = energy.invert_charfn(lambda b: energy.charfn_total_diag(alpha, a, lam, b).values, e, beta_max=4000.0, n=400001)
    inv_err = float(np.max(np.abs(inv.density - closed.density)))

    t = 3.0
    eps = 1e-14 * t
    f = energy.charfn_w_diag(alpha, a, lam, t, [t - eps, t, -(t - eps), -t]).values
    branch = float(max(abs(f[0] - f[1]), abs(f[2] - f[3])))
    vac = energy.charfn_w_diag(alpha, a, lam, 0.0, np.linspace(-5, 5, 101)).values
    vac_dist = energy.dist_w_diag(alpha, a, lam, 0.0, e)
    vacuum_exact = bool(np.all(vac == 1.0) and vac_dist.point_masses == [(0.0, 1.0)] and np.all(vac_dist.density == 0.0))

    dt = 0.01
    ratio = energy.interaction_sd(1.0, lam, dt / 2) / energy.interaction_sd(1.0, lam, dt)
    width_err = abs(ratio - math.sqrt(2.0))
    ok = inv_err < 1e-3 * scale and branch < 1e-12 * scale and vacuum_exact and width_err < 1e-12 * scale
    return ok, {"inversion_max_err": inv_err, "branch_jump": branch, "vacuum_exact": vacuum_exact, "width_ratio_err": width_err}


# 5 ---------------------------------------------------------------------------------


def conservation(seed=DEFAULT_SEED, threads=1, scale=1.0, systems=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(systems):
        h = HermitianOperator(random_hermitian(3, rng))
        a = HermitianOperator(random_hermitian(3, rng))
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        phi = StateVector(v).normalize()
        lam = float(rng.uniform(0.2, 1.5))
        p = energy.energy_paths(phi, a, h, lam, 5.0, dt_ode=1e-3)
        worst = max(worst, float(np.max(np.abs(p["total"] - p["total"][0]))))
    return worst < 1e-6 * scale, {"max_violation": worst, "systems": systems}


# 6 ---------------------------------------------------------------------------------

HEATING = dict(sites=128, spacing=0.2, mass=1.0, lam=0.1, horizon=2.0, sigma0=1.0, smearing=1.0, dt_ode=0.004)


def free_particle_heating(seed=DEFAULT_SEED, threads=1, scale=1.0, **over):
    p = {**HEATING, **over}
    n, hsp, m, lam, t = p["sites"], p["spacing"], p["mass"], p["lam"], p["horizon"]
    x = (np.arange(n) - (n - 1) / 2) * hsp
    phi = StateVector(np.exp(-(x**2) / (4 * p["sigma0"] ** 2)).astype(complex)).normalize()
    h = HermitianOperator(csl.lattice_kinetic(n, hsp, m))
    # (m/m0)^2 / (2 a^2) = 1 makes the smeared heating rate lam/2m, same as A = x
    smeared = csl.build_smeared_A(x, p["smearing"], math.sqrt(2.0) * p["smearing"])
    target = energy.heating_rate(lam, m, smeared.effective_rate_factor())
    out = {}
    ok = True
    for name, a in (("smeared", smeared), ("position", HermitianOperator(csl.lattice_position(x)))):
        path = energy.energy_paths(phi, a, h, lam, t, p["dt_ode"])
        slope = float(np.polyfit(path["t"], path["mean_HA"], 1)[0])
        gain = path["mean_HA"] - path["mean_HA"][0]
        hw_err = float(np.max(np.abs(path["mean_Hw"] + gain)))
        out[f"{name}_slope_ratio"] = slope / target
        out[f"{name}_Hw_err"] = hw_err
        ok &= abs(slope / target - 1) < 0.10 * scale and hw_err < 1e-6 * scale
    # packet clearance at the horizon under the unitary part (the widest it gets is
    # bounded by the master-equation position variance, checked below)
    spec = density.MasterEvolutionSpec(smeared, h, lam, t, p["dt_ode"], check_halving=False)
    _, rho = density.master_path(DensityMatrix.pure(phi), spec, record=False)
    pops = np.real(np.diag(rho[-1]))
    mu = float(np.sum(pops * x))
    sd = float(np.sqrt(np.sum(pops * (x - mu) ** 2)))
    clearance = min(mu - x[0], x[-1] - mu) / sd
    out["clearance_sigma"] = clearance
    ok &= clearance >= 5
    return ok, out


# 7 ---------------------------------------------------------------------------------


def time_operator(seed=DEFAULT_SEED, threads=1, scale=1.0):
    alpha = np.sqrt([0.25, 0.35, 0.4])
    a = np.array([0.0, 0.6, 1.2])
    lam, t = 0.8, 2.5
    spec = timeop.TimeOpSpec(alpha, a, lam, t)
    direct = (t / 2) * (1 - np.sum(np.abs(alpha) ** 2 * np.exp(-lam * t * a**2)))
    formula_err = abs(timeop.mean_T(spec) - direct)
    deriv = energy.charfn_moment(lambda b: timeop.charfn_T_diag(spec, b).values, 1, h=1e-3)
    deriv_err = abs(deriv - timeop.mean_T(spec))

    asym_gaps = {}
    for s in (0, 1, 2):
        tt = 10.0
        A = math.sqrt(1e3 / (lam * tt ** (2 * s + 1)))
        asym_gaps[s] = timeop.mean_T_power_law(s, lam, A, tt)["relative_gap"]

    slopes = {}
    for s in (0, 1):
        ts = np.logspace(0, 1, 11)
        A = math.sqrt(1e3 / lam)  # lam A^2 t^{2s+1} >= 1e3 across the decade
        fd = [timeop.fractional_deviation(timeop.TimeOpSpec([1.0], [1.0], lam, float(tv), s, A)) for tv in ts]
        slopes[s] = float(np.polyfit(np.log(ts), np.log(fd), 1)[0])
    slope_err = max(abs(slopes[s] + (2 * s + 1)) for s in slopes)
    ok = (
        formula_err < 1e-14
        and deriv_err < 1e-6 * scale
        and max(asym_gaps.values()) < 0.01 * scale
        and slope_err < 0.05 * scale
    )
    return ok, {
        "mean_formula_err": formula_err,
        "derivative_err": float(abs(deriv_err)),
        "max_asymptote_gap": max(asym_gaps.values()),
        "slope_s0": slopes[0],
        "slope_s1": slopes[1],
    }


# 8 ---------------------------------------------------------------------------------


def spin_model(seed=DEFAULT_SEED, threads=1, scale=1.0, n_samples=20000):
    ks = {}
    for i, n in enumerate((100, 10_000)):
        x = spins.sample_spin_blocks(n, 1e-3, seed, n_samples, index=i)
        ks[n] = spins.ks_discrete(x, n, 1e-3)
    tv = spins.tv_distance(10_000, 1e-3)
    k = spins.default_constants()
    beta = spins.beta_from_ev(2e-4)
    rho = 1000.0
    blocks = spins.sample_spin_blocks(10_000, spins.coupling(k, beta, rho), seed, 2000, index=5)
    eq = spins.spin_model_to_csl_equivalence(blocks, [rho], k, beta, 10_000)
    ks_ok = all(r["D"] < r["critical_1pct"] * scale for r in ks.values())
    ok = ks_ok and tv < 0.01 * scale and eq["max_rel_exact_csl"] < 0.01 * scale and eq["max_rel_gauss_csl"] < 0.01 * scale
    return ok, {
        "ks_D_N100": ks[100]["D"],
        "ks_D_N10000": ks[10_000]["D"],
        "ks_crit": ks[100]["critical_1pct"],
        "tv_gauss": tv,
        "rel_exact_vs_csl": eq["max_rel_exact_csl"],
        "rel_gauss_vs_csl": eq["max_rel_gauss_csl"],
    }


# 9 ---------------------------------------------------------------------------------


def parameter_audit(seed=DEFAULT_SEED, threads=1, scale=1.0):
    rep = spins.audit_parameters(spins.default_constants(), [2e-4, 1e28], 1000.0)
    targets_bc, targets_p = (-6, -38), (-112, -49)
    dev = [abs(v - tgt) for v, tgt in zip(rep.log10_betaC + rep.log10_p, targets_bc + targets_p)]
    ok = max(dev) <= 1.0 * scale and all(rep.small_coupling)
    return ok, {
        "log10_betaC_cosmic": rep.log10_betaC[0],
        "log10_betaC_planck": rep.log10_betaC[1],
        "log10_p_cosmic": rep.log10_p[0],
        "log10_p_planck": rep.log10_p[1],
    }


# 10 --------------------------------------------------------------------------------


def cqc_equivalence(seed=DEFAULT_SEED, threads=1, scale=1.0):
    a = HermitianOperator.diagonal([-1.0, 0.3, 0.8])
    h = HermitianOperator.zeros(3)
    phi = StateVector.from_amplitudes([0.6, 0.48j, 0.64])
    grid = TimeGrid.from_horizon(1.0, 0.01)
    worst = 0.0
    for i in range(5):
        traj = sample_raw_white(grid, 0.9, seed, index=i)
        run = csl.evolve_csl(phi, a, h, traj, 0.9)
        k = csl.kernel_product(a, h, traj, 0.9) @ phi.amplitudes
        worst = max(worst, float(np.max(np.abs(k - run.final_state.amplitudes)) / np.max(np.abs(k))))
    dft = fields.discrete_mode_commutator_check(64, 64, 0.5)["dft_deviation"]
    ref = fields.refinement_study(1000, 101, 0.1, levels=3)
    ratios_ok = all(abs(r - 2.0) <= 0.4 * scale for r in ref["ratios"])
    ok = worst < 1e-12 * scale and dft < 1e-12 * scale and ratios_ok
    return ok, {"kernel_vs_evolve": worst, "dft_deviation": dft, "halving_ratio_1": ref["ratios"][0], "halving_ratio_2": ref["ratios"][1]}


CHECKS = [
    (1, "Born statistics", born_statistics),
    (2, "Sampler equivalence", sampler_equivalence),
    (3, "Three-route density", three_route_density),
    (4, "Energy distributions", energy_distributions),
    (5, "Energy conservation", conservation),
    (6, "Free-particle heating", free_particle_heating),
    (7, "Time operator", time_operator),
    (8, "Spin model", spin_model),
    (9, "Parameter audit", parameter_audit),
    (10, "CQC equivalence", cqc_equivalence),
]


def run_check(number: int, seed=DEFAULT_SEED, threads=1, tolerance_scale=1.0) -> CheckResult:
    for num, name, fn in CHECKS:
        if num == number:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                return _timed(num, name, fn, seed=seed, threads=threads, scale=tolerance_scale)
    raise KeyError(number)


def run_all(seed=DEFAULT_SEED, threads=1, tolerance_scale=1.0, only=None) -> list[CheckResult]:
    nums = [n for n, _, _ in CHECKS if only is None or n in only]
    return [run_check(n, seed, threads, tolerance_scale) for n in nums]
