"""Many-spins thermal-bath model of collapse noise, and its parameter audit.

Each space-time block holds N freed spins in equilibrium with a bath, coupled
to the local mass density through betaC = beta G rho mu a^2.  The block
magnetisation S = sum s_i is binomial on {-N, -N+2, ..., N}; on that lattice
(spacing 2) its Gaussian approximation is

    P(s) ~ 2/sqrt(2 pi N) exp(-(s - N betaC)^2 / 2N).

Mapping S/N to the white noise w reproduces the CSL amplitude exactly when
the cell activation probability is p = 4 lam tau (l/a) / (beta m0 c^2)^2.

All quantities that under/overflow (p, partition functions) are kept in
natural-log or log10 form.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import special

from . import rng as _rng
from .linalg import ValidationError

SPIN_PURPOSE = 7
SMALL_COUPLING = 0.1  # |betaC| above this is not "<< 1"
MIN_GAUSS_N = 100

EV = 1.602176634e-19  # J

DEFAULT_CONSTANTS = """\
# SI units; energies in joules unless suffixed _eV
version = 1
G = 6.67430e-11
mu = 2.176434e-8
ell = 1.616255e-35
tau = 5.391247e-44
c = 299792458.0
a = 1e-7
lam = 1e-16
m0 = 1.67262192369e-27
"""


@dataclass(frozen=True)
class PhysicalConstants:
    G: float
    mu: float
    ell: float
    tau: float
    c: float
    a: float
    lam: float
    m0: float
    version: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "version" and not (np.isfinite(v) and v > 0):
                raise ValidationError(f"constant {f.name} must be positive and finite, got {v!r}")

    @property
    def m0c2(self) -> float:
        return self.m0 * self.c**2

    def consistency(self) -> dict:
        """Relative defects of l = c tau and G mu = l c^2."""
        return {
            "ell_vs_c_tau": abs(self.ell / (self.c * self.tau) - 1.0),
            "G_mu_vs_ell_c2": abs(self.G * self.mu / (self.ell * self.c**2) - 1.0),
        }

    def check(self, tol: float = 1e-3) -> None:
        bad = {k: v for k, v in self.consistency().items() if v > tol}
        if bad:
            raise ValidationError(f"Planck constants inconsistent: {bad}")

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))


def parse_constants(text: str, base: PhysicalConstants | None = None) -> PhysicalConstants:
    """Read a key = value table ('#' comments); keys override ``base``."""
    vals = {}
    known = {f.name for f in fields(PhysicalConstants)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in known:
            raise ValidationError(f"line {lineno}: unknown constant {key!r}")
        try:
            vals[key] = int(val) if key == "version" else float(val)
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: bad number for {key}: {val!r}") from exc
    if base is not None:
        return replace(base, **vals)
    missing = known - set(vals) - {"version"}
    if missing:
        raise ValidationError(f"missing constants: {sorted(missing)}")
    return PhysicalConstants(**vals)


def default_constants() -> PhysicalConstants:
    return parse_constants(DEFAULT_CONSTANTS)


def beta_from_ev(kT_ev: float) -> float:
    """Inverse temperature in 1/J from a bath energy beta^{-1} in eV."""
    if not kT_ev > 0:
        raise ValidationError("bath energy must be positive")
    return 1.0 / (kT_ev * EV)


def coupling(constants: PhysicalConstants, beta: float, rho: float) -> float:
    """betaC = beta G rho mu a^2 (dimensionless)."""
    k = constants
    return beta * k.G * rho * k.mu * k.a**2


# --- block configuration ----------------------------------------------------------


@dataclass(frozen=True)
class SpinBlockConfig:
    N: float
    betaC: float
    p: float = float("nan")
    cells: float = float("nan")  # Delta V / l^3
    ticks: float = float("nan")  # Delta t / tau

    def __post_init__(self):
        if not self.N >= 1:
            raise ValidationError(f"N must be >= 1, got {self.N}")
        if not np.isnan(self.p):
            n = self.p * self.cells * self.ticks
            if not math.isclose(n, self.N, rel_tol=1e-12):
                raise ValidationError(f"N={self.N} disagrees with p*dV/l^3*dt/tau = {n}")

    @classmethod
    def from_geometry(cls, p: float, cells: float, ticks: float, betaC: float) -> "SpinBlockConfig":
        return cls(p * cells * ticks, betaC, p, cells, ticks)

    @property
    def small_coupling(self) -> bool:
        return abs(self.betaC) < SMALL_COUPLING


# --- exact and approximate statistics ------------------------------------------------


def _check_n(N) -> int:
    if int(N) != N or N < 1:
        raise ValidationError(f"N must be a positive integer, got {N}")
    return int(N)


def spin_partition(N: int, betaC: float) -> float:
    """log Tr e^{betaC S} = N log(2 cosh betaC), overflow free."""
    N = _check_n(N)
    x = abs(betaC)
    return N * (x + math.log1p(math.exp(-2 * x)))


def spin_partition_bruteforce(N: int, betaC: float) -> float:
    """log of the explicit sum over all 2^N configurations (N <= 30)."""
    N = _check_n(N)
    if N > 30:
        raise ValidationError("brute force limited to N <= 30")
    k = np.arange(N + 1)
    s = N - 2 * k
    logs = betaC * s + special.gammaln(N + 1) - special.gammaln(k + 1) - special.gammaln(N - k + 1)
    return float(special.logsumexp(logs))


def support(N: int) -> np.ndarray:
    N = _check_n(N)
    return np.arange(-N, N + 1, 2)


def log_pmf_exact(N: int, betaC: float, s) -> np.ndarray:
    N = _check_n(N)
    s = np.asarray(s)
    if np.any((s + N) % 2) or np.any(np.abs(s) > N):
        raise ValidationError(f"s must lie in {{-N, -N+2, ..., N}} for N={N}")
    up = (N + s) // 2
    return (
        betaC * s
        + special.gammaln(N + 1)
        - special.gammaln(up + 1)
        - special.gammaln(N - up + 1)
        - spin_partition(N, betaC)
    )


def log_pmf_gauss(N: int, betaC: float, s, exact_moments: bool = False) -> np.ndarray:
    """Gaussian on the spacing-2 lattice: mean N betaC, variance N (or the exact
    N tanh betaC and N sech^2 betaC when ``exact_moments``)."""
    N = _check_n(N)
    s = np.asarray(s, dtype=float)
    if exact_moments:
        mean, var = N * math.tanh(betaC), N / math.cosh(betaC) ** 2
    else:
        mean, var = N * betaC, float(N)
    return math.log(2.0) - 0.5 * math.log(2 * math.pi * var) - (s - mean) ** 2 / (2 * var)


def spin_block_pmf(N: int, betaC: float, s, approx: str = "exact"):
    """P(S = s); approx in {'exact', 'gauss', 'gauss_exact_moments'}."""
    if approx == "exact":
        return np.exp(log_pmf_exact(N, betaC, s))
    log_pmf_exact(N, 0.0, s)  # parity / range check
    if approx == "gauss":
        return np.exp(log_pmf_gauss(N, betaC, s))
    if approx == "gauss_exact_moments":
        return np.exp(log_pmf_gauss(N, betaC, s, exact_moments=True))
    raise ValidationError(f"unknown approximation {approx!r}")


def tv_distance(N: int, betaC: float, approx: str = "gauss") -> float:
    """Total variation between the exact pmf and a Gaussian on the support."""
    s = support(N)
    exact = spin_block_pmf(N, betaC, s)
    g = spin_block_pmf(N, betaC, s, approx)
    # Gaussian mass off the support is counted in full
    return 0.5 * float(np.sum(np.abs(exact - g)) + max(0.0, 1.0 - g.sum()))


def spin_mean(N: int, betaC: float) -> float:
    return N * math.tanh(betaC)


def spin_cdf(N: int, betaC: float, s) -> np.ndarray:
    """Exact CDF on arbitrary points (binomial in the number of up spins)."""
    N = _check_n(N)
    k = np.floor((np.asarray(s, dtype=float) + N) / 2.0)
    return special.bdtr(k, N, p_up(betaC))


def p_up(betaC: float) -> float:
    return float(special.expit(2.0 * betaC))


# --- sampling ----------------------------------------------------------------------


def sample_spin_block(N: int, betaC: float, seed: int, index: int = 0) -> int:
    """S for one block; the number of up spins is Binomial(N, e^{bC}/2cosh bC)."""
    N = _check_n(N)
    k = _rng.stream(seed, index, SPIN_PURPOSE).binomial(N, p_up(betaC))
    return int(2 * k - N)


def sample_spin_blocks(N: int, betaC: float, seed: int, n_blocks: int, index: int = 0) -> np.ndarray:
    """S for many independent blocks from one counter stream."""
    N = _check_n(N)
    k = _rng.stream(seed, index, SPIN_PURPOSE).binomial(N, p_up(betaC), size=int(n_blocks))
    return 2 * k - N


def ks_discrete(samples, N: int, betaC: float) -> dict:
    """Kolmogorov distance of the sample ECDF from the exact CDF over the support,
    with the asymptotic 1% critical value 1.628/sqrt(n) (conservative for discrete laws)."""
    x = np.asarray(samples)
    n = x.size
    pts = support(N)
    ecdf = np.searchsorted(np.sort(x), pts, side="right") / n
    d = float(np.max(np.abs(ecdf - spin_cdf(N, betaC, pts))))
    crit = 1.628 / math.sqrt(n)
    return {"D": d, "critical_1pct": crit, "passed": d < crit, "n": n}


# --- mapping to the white noise ---------------------------------------------------------


def spins_to_noise(s, N, constants: PhysicalConstants, beta: float) -> dict:
    """w = 2 lam / (beta m0 c^2 l a^{1/2}) * s/N and s' = s/(N beta G mu a^2)."""
    if not N > 0 or not beta > 0:
        raise ValidationError("need N > 0 and beta > 0")
    k = constants
    s = np.asarray(s, dtype=float)
    w = 2.0 * k.lam / (beta * k.m0c2 * k.ell * math.sqrt(k.a)) * (s / N)
    s_prime = s / (N * beta * k.G * k.mu * k.a**2)
    return {"w": w, "s_prime": s_prime}


def activation_probability_log10(constants: PhysicalConstants, beta: float) -> float:
    """log10 p with p = 4 lam tau (l/a) / (beta m0 c^2)^2."""
    k = constants
    return (
        math.log10(4.0 * k.lam * k.tau)
        + math.log10(k.ell / k.a)
        - 2.0 * math.log10(beta * k.m0c2)
    )


def log_amplitude_gauss(s, N: int, betaC: float) -> np.ndarray:
    """Per-block log <s|chi> without normalization: -(s - N betaC)^2 / 4N."""
    s = np.asarray(s, dtype=float)
    return -((s - N * betaC) ** 2) / (4.0 * N)


def log_amplitude_exact(s, N: int, betaC: float) -> np.ndarray:
    """Half the exact log pmf, with the lattice Gaussian normalization removed."""
    return 0.5 * (log_pmf_exact(N, betaC, s) - (math.log(2.0) - 0.5 * math.log(2 * math.pi * N)))


def log_amplitude_csl(w, rho: float, N: int, constants: PhysicalConstants, beta: float) -> np.ndarray:
    """-(dV dt / 4 lam) (w - 2 lam a^{3/2} rho / m0)^2 per block, dV dt = N l^3 tau / p."""
    k = constants
    w = np.asarray(w, dtype=float)
    p = 10.0 ** activation_probability_log10(k, beta)
    vol = N * k.ell**3 * k.tau / p
    center = 2.0 * k.lam * k.a**1.5 * rho / k.m0
    return -(vol / (4.0 * k.lam)) * (w - center) ** 2


def spin_model_to_csl_equivalence(blocks, rho_values, constants: PhysicalConstants, beta: float, N: int) -> dict:
    """Compare spin-model and CSL log-amplitudes for sampled block magnetisations.

    For each candidate density rho (a collapse eigenvalue) returns the summed
    Gaussian spin log-amplitude, the exact-pmf one and the CSL one, their
    relative differences, and amplitude ratios relative to the first rho.
    """
    N = _check_n(N)
    if N < MIN_GAUSS_N:
        raise ValidationError(f"Gaussian block approximation needs N >= {MIN_GAUSS_N}, got {N}")
    blocks = np.asarray(blocks)
    rho_values = np.atleast_1d(np.asarray(rho_values, dtype=float))
    w = spins_to_noise(blocks, N, constants, beta)["w"]
    rows = []
    for rho in rho_values:
        bc = coupling(constants, beta, rho)
        if abs(bc) >= SMALL_COUPLING:
            warnings.warn(f"betaC = {bc:.3g} is not small; the Gaussian block law is unreliable", stacklevel=2)
        lg = float(np.sum(log_amplitude_gauss(blocks, N, bc)))
        le = float(np.sum(log_amplitude_exact(blocks, N, bc)))
        lc = float(np.sum(log_amplitude_csl(w, rho, N, constants, beta)))
        rows.append({"rho": float(rho), "betaC": bc, "log_gauss": lg, "log_exact": le, "log_csl": lc})
    for r in rows:
        r["rel_gauss_csl"] = abs(r["log_gauss"] - r["log_csl"]) / max(abs(r["log_csl"]), 1e-300)
        r["rel_exact_csl"] = abs(r["log_exact"] - r["log_csl"]) / max(abs(r["log_csl"]), 1e-300)
        r["log_ratio_exact"] = r["log_exact"] - rows[0]["log_exact"]
        r["log_ratio_csl"] = r["log_csl"] - rows[0]["log_csl"]
    return {
        "N": N,
        "n_blocks": int(blocks.size),
        "rows": rows,
        "max_rel_gauss_csl": max(r["rel_gauss_csl"] for r in rows),
        "max_rel_exact_csl": max(r["rel_exact_csl"] for r in rows),
        "tv_bound": tv_distance(N, rows[0]["betaC"]),
    }


# --- audit -------------------------------------------------------------------------------


@dataclass
class AuditReport:
    rho: float
    bath_ev: list
    log10_betaC: list
    log10_p: list
    log10_mean_s_over_N: list
    log10_w_center: float
    small_coupling: list
    consistency: dict = field(default_factory=dict)

    def rows(self):
        for i, t in enumerate(self.bath_ev):
            yield {
                "bath_eV": t,
                "log10_betaC": self.log10_betaC[i],
                "log10_p": self.log10_p[i],
                "log10_mean_S_over_N": self.log10_mean_s_over_N[i],
                "small_coupling": self.small_coupling[i],
            }

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["bath_eV", "log10_betaC", "log10_p", "log10_mean_S_over_N", "small_coupling"]
        buf.write(",".join(cols) + "\n")
        for r in self.rows():
            buf.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) + "\n")
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"mass density rho = {self.rho:g} kg/m^3; log10 w center = {self.log10_w_center:.2f}"]
        lines.append(f"{'bath (eV)':>12} {'log10 bGrmua2':>14} {'log10 p':>9} {'small?':>7}")
        for r in self.rows():
            lines.append(
                f"{r['bath_eV']:>12.3g} {r['log10_betaC']:>14.2f} {r['log10_p']:>9.2f} {str(r['small_coupling']):>7}"
            )
        return "\n".join(lines) + "\n"


def audit_parameters(constants: PhysicalConstants, temperatures_ev, rho: float) -> AuditReport:
    """betaC, activation probability p and thermal S/N per bath temperature (log10)."""
    if not rho > 0:
        raise ValidationError("rho must be positive")
    k = constants
    lbc, lp, lsn, small = [], [], [], []
    for t_ev in temperatures_ev:
        beta = beta_from_ev(t_ev)
        bc = coupling(k, beta, rho)
        lbc.append(math.log10(bc))
        lp.append(activation_probability_log10(k, beta))
        lsn.append(math.log10(math.tanh(bc)))
        small.append(bc < SMALL_COUPLING)
    w_center = math.log10(2.0 * k.lam * k.a**1.5 * rho / k.m0)
    return AuditReport(float(rho), [float(t) for t in temperatures_ev], lbc, lp, lsn, w_center, small, k.consistency())
