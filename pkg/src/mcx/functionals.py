"""Quadratic functionals of a reversible chain and the bounds built on them.

For a kernel P with stationary law pi and a function f on the state space:

    V_pi(f)   = 1/2 sum_{x,y} |f(x)-f(y)|^2 pi(x) pi(y)
    E_P(f,f)  = 1/2 sum_{x,y} |f(x)-f(y)|^2 P(x,y) pi(x)
    L_pi(f)   = sum_x f(x)^2 log(f(x)^2 / ||f||_{2,pi}^2) pi(x)

The spectral gap is the infimum of E/V over nonconstant f, the log-Sobolev
constant the infimum of E/L.  Two mixing-time bounds are provided: the
entropy-assisted one

    t = 1 + c/gap + (1/(4 alpha)) log log(1/pi(x))     ->  TV <= 2 e^{-c}

and the plain spectral one t = (c/gap) log(1/pi(x)) with the same guarantee.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .chain_core import Kernel, StateSpace, spectrum
from .errors import DimensionError, ExtensionMismatchError, ParameterError, UnsupportedOperatorError

GAP_MATCH_TOL = 1e-8
WITNESS_TOL = 1e-9


@dataclass(frozen=True)
class FunctionOnSpace:
    """Real-valued function, one value per state."""

    space: StateSpace
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.space),):
            raise DimensionError("value vector does not match the space")
        if not np.all(np.isfinite(vals)):
            raise DimensionError("function values must be finite")
        object.__setattr__(self, "values", vals)


def _values(f, n: int) -> np.ndarray:
    vals = f.values if isinstance(f, FunctionOnSpace) else np.asarray(f, dtype=float)
    if vals.shape != (n,):
        raise DimensionError(f"expected {n} values, got shape {vals.shape}")
    return vals


def variance(f, pi: np.ndarray) -> float:
    """V_pi(f); equals the second moment minus the squared mean."""
    vals = _values(f, len(pi))
    mean = float(vals @ pi)
    return float((vals - mean) ** 2 @ pi)


def dirichlet(f, kernel: Kernel) -> float:
    """E_P(f,f) evaluated over the off-diagonal edge list."""
    vals = _values(f, kernel.n)
    r, c, v = kernel.edges()
    diff = vals[r] - vals[c]
    return 0.5 * float((diff * diff) @ (v * kernel.pi[r]))


def f_sum_form(f, kernel: Kernel) -> float:
    """<(I+P)f, f>_pi, i.e. 1/2 sum |f(x)+f(y)|^2 P(x,y) pi(x).

    Unlike the Dirichlet form the diagonal contributes, so the full sum
    (not just the edge list) is used.
    """
    vals = _values(f, kernel.n)
    pf = kernel.matrix @ vals
    return float(vals @ (kernel.pi * (vals + pf)))


def norm2_sq(f, pi: np.ndarray) -> float:
    vals = _values(f, len(pi))
    return float((vals * vals) @ pi)


def entropy_functional(f, pi: np.ndarray) -> float:
    """L_pi(f) = sum f^2 log(f^2/||f||^2) pi; zero iff |f| is a.s. constant."""
    vals = _values(f, len(pi))
    sq = vals * vals
    total = float(sq @ pi)
    if total <= 0.0:
        raise ParameterError("entropy functional undefined for the zero function")
    mask = sq > 0
    return float((sq[mask] * np.log(sq[mask] / total)) @ pi[mask])


def spectral_gap(kernel: Kernel) -> float:
    """1 - beta_1 from a dense eigensolve."""
    spec = spectrum(kernel)
    return 1.0 - spec.beta(1)


def rayleigh_quotient(f, kernel: Kernel) -> float:
    vals = _values(f, kernel.n)
    v = variance(vals, kernel.pi)
    if v <= 0:
        raise ParameterError("Rayleigh quotient undefined for constant f")
    return dirichlet(vals, kernel) / v


@dataclass
class LogSobolevCertificate:
    value: float
    witness: np.ndarray
    restart_values: list
    converged: bool
    source: str = "multi-start projected descent"

    def dispersion(self) -> float:
        vals = [v for v in self.restart_values if math.isfinite(v)]
        return max(vals) - min(vals) if vals else float("nan")


def _ls_quotient(vals, pi, kernel):
    e = dirichlet(vals, kernel)
    try:
        l = entropy_functional(vals, pi)
    except ParameterError:
        return float("inf")
    if l <= 1e-300:
        return float("inf")
    return e / l


def log_sobolev_constant(kernel: Kernel, restarts: int = 64, seed: int = 0,
                         iters: int = 400, tol: float = 1e-10) -> LogSobolevCertificate:
    """Numerical infimum of E(f,f)/L_pi(f) over nonconstant f.

    Projected gradient descent on the pi-sphere from `restarts` seeded
    starting points.  The returned value is an upper bound on the true
    constant, certified by the witness function.  The quotient degenerates
    to gap/2 along the constant direction, so runs that drift toward a
    constant report that limit value.
    """
    if not (kernel.reversible and kernel.half_lazy):
        raise UnsupportedOperatorError("needs a reversible half-lazy kernel")
    if kernel.n > 5100:
        raise UnsupportedOperatorError("minimization capped at 5100 states")
    pi = kernel.pi
    n = kernel.n
    r, c, v = kernel.edges()
    wts = v * pi[r]
    gap = spectral_gap(kernel)

    if len(v) == 0:  # identity-like kernel: E == 0
        w = np.zeros(n)
        w[0] = 1.0
        return LogSobolevCertificate(0.0, w, [0.0], True)

    def energy_grad(f):
        diff = f[r] - f[c]
        e = 0.5 * float((diff * diff) @ wts)
        g = np.zeros(n)
        np.add.at(g, r, wts * diff)
        np.add.at(g, c, -wts * diff)
        return e, g

    def ent_grad(f):
        sq = f * f
        total = float(sq @ pi)
        safe = np.maximum(sq / total, 1e-300)
        logs = np.log(safe)
        l = float((sq * logs) @ pi)
        g = 2.0 * pi * f * logs
        return l, g

    rng = np.random.default_rng(seed)
    best_val = gap / 2.0  # limit of the quotient at the constant function
    best_wit = np.ones(n)
    restart_values = []
    converged = True
    for _ in range(restarts):
        f = rng.standard_normal(n)
        f /= math.sqrt(norm2_sq(f, pi))
        prev = float("inf")
        val = float("inf")
        ok = False
        for _ in range(iters):
            e, ge = energy_grad(f)
            l, gl = ent_grad(f)
            if l <= 1e-14:
                val = gap / 2.0
                ok = True
                break
            val = e / l
            grad = (ge * l - e * gl) / (l * l)
            grad -= (grad @ (pi * f)) * f  # tangent to the pi-sphere
            gn = float(np.linalg.norm(grad))
            if gn < 1e-14 or abs(prev - val) < tol * max(1.0, val):
                ok = True
                break
            step = 0.5 / max(gn, 1.0)
            for _ in range(40):
                cand = f - step * grad
                cand /= math.sqrt(norm2_sq(cand, pi))
                cval = _ls_quotient(cand, pi, kernel)
                if cval < val:
                    f = cand
                    break
                step *= 0.5
            else:
                ok = True
                break
            prev = val
        restart_values.append(val)
        converged = converged and ok
        if val < best_val:
            best_val = val
            best_wit = f.copy()
    return LogSobolevCertificate(float(best_val), best_wit, restart_values, converged)


@dataclass(frozen=True)
class MixingBound:
    """Step count with its total-variation guarantee 2 e^{-c}."""

    t: float
    c: float
    guarantee: float
    source: str

    def __post_init__(self):
        if not 0 < self.guarantee <= 2:
            raise ParameterError("guarantee must lie in (0, 2]")


def mixing_bound_ls(gap: float, alpha: float, pi_x: float, c: float) -> MixingBound:
    """Entropy-assisted bound t = 1 + c/gap + (1/(4 alpha)) log log(1/pi_x).

    The loglog term is clamped to zero when 1/pi_x <= e, where it would be
    nonpositive or undefined.
    """
    if gap <= 0 or alpha <= 0 or not (0 < pi_x < 1) or c <= 0:
        raise ParameterError("need gap>0, alpha>0, 0<pi_x<1, c>0")
    inv = 1.0 / pi_x
    loglog = math.log(math.log(inv)) if inv > math.e else 0.0
    t = 1.0 + c / gap + loglog / (4.0 * alpha)
    return MixingBound(t, c, 2.0 * math.exp(-c), "gap+log-sobolev")


def mixing_bound_gap(gap: float, pi_x: float, c: float) -> MixingBound:
    """Plain spectral bound t = (c/gap) log(1/pi_x)."""
    if gap <= 0 or not (0 < pi_x < 1) or c <= 0:
        raise ParameterError("need gap>0, 0<pi_x<1, c>0")
    t = (c / gap) * math.log(1.0 / pi_x)
    return MixingBound(t, c, 2.0 * math.exp(-c), "gap-only")


@dataclass
class VarianceEntropyReport:
    """Slack record for the cross-space variance / entropy inequalities."""

    c: float
    variance_slack: float
    entropy_slack: float

    def holds(self, tol: float = 1e-10) -> bool:
        return self.variance_slack >= -tol and self.entropy_slack >= -tol


def compare_variance_entropy(f, fhat, nu: np.ndarray, mu: np.ndarray,
                             inner_to_outer: np.ndarray) -> VarianceEntropyReport:
    """Check V_nu(f) <= C V_mu(fhat) and L_nu(f) <= C L_mu(fhat) with
    C = sup_{y in inner} nu(y)/mu(y).

    `inner_to_outer` maps inner state ids to outer ids; fhat must agree
    with f there.
    """
    f = np.asarray(f, dtype=float)
    fhat = np.asarray(fhat, dtype=float)
    if np.max(np.abs(fhat[inner_to_outer] - f)) > 1e-12:
        raise ExtensionMismatchError("fhat does not extend f")
    c = float(np.max(nu / mu[inner_to_outer]))
    v_slack = c * variance(fhat, mu) - variance(f, nu)
    if np.all(f == 0) or np.all(fhat == 0):
        e_slack = 0.0
    else:
        e_slack = c * entropy_functional(fhat, mu) - entropy_functional(f, nu)
    return VarianceEntropyReport(c, float(v_slack), float(e_slack))


def report_record(quantity: str, value: float, source: str,
                  witness=None, slack=None) -> str:
    """One JSON report line: {quantity, value, witness?, slack, source}."""
    rec = {"quantity": quantity, "value": value, "source": source}
    if witness is not None:
        rec["witness"] = list(np.asarray(witness, dtype=float))
    if slack is not None:
        rec["slack"] = slack
    return json.dumps(rec, sort_keys=True)
