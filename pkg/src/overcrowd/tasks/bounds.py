from __future__ import annotations

import math
import numpy as np
import pandas as pd

from dataclasses import dataclass, field
from fractions import Fraction
from scipy import special

from overcrowd.tasks.spectral import MomentTable, SpectralMeasure1D, check_assumption_a1
from overcrowd.utils.errors import DivergentMoment, PreconditionFailed, UnknownRow

A_1D = 192 * math.sqrt(math.pi)
A_2D = 384 * math.sqrt(math.pi)
LOG_2 = math.log(2)
LOG_6 = math.log(6)
LOG_MIN_FLOAT = -745.0  # smallest log that still exponentiates to a nonzero float


# Constants

@dataclass
class BoundConstants:
    """
    Constants of the overcrowding bounds. The bounds only assert their existence,
    so they come from configuration or from a calibration run (provenance 'fitted').
    """
    b: float = None
    B: float = None
    c: float = None
    c_lower: float = None
    C: float = None
    A: float = A_1D
    turan_A: float = 14.0
    provenance: str = "config"

    @classmethod
    def for_dimension(cls, dimension: int, **kwargs) -> BoundConstants:
        return cls(A=A_1D if dimension == 1 else A_2D, **kwargs)

    @classmethod
    def from_config(cls, section, dimension: int = 1, assumption=None) -> BoundConstants:
        """
        Constants from the config section; zeros are derived: b from the assumption check, B = (4eAC)^-1.
        :param section: config.Constants
        :param assumption: spectral.AssumptionReport (or AssumptionReport2D) of the measure
        """
        b = section.b or None
        if b is None and assumption is not None:
            b = getattr(assumption, "b", None)
            if b is None and hasattr(assumption, "marginal_1"):
                b = min(assumption.marginal_1.b, assumption.marginal_2.b) or None
        k = cls.for_dimension(dimension, b=b, B=section.B or None, c=section.c or None,
                              c_lower=section.c_lower or None, C=section.C or None,
                              turan_A=section.turan_A, provenance=section.provenance)
        if k.B is None and k.C is not None:
            k.B = k.derived_B()
        return k

    def derived_B(self) -> float:
        """(4eAC)^-1"""
        if not self.C:
            raise ValueError("B can only be derived from a small ball constant C")
        return 1.0 / (4 * math.e * self.A * self.C)

    @property
    def standard_regime(self) -> bool:
        """b, B in (0, 1) and C > 1."""
        inside = all(v is not None and 0 < v < 1 for v in [self.b, self.B])
        return inside and self.C is not None and self.C > 1

    def to_dict(self) -> dict:
        return {"b": self.b, "B": self.B, "c": self.c, "c_lower": self.c_lower, "C": self.C, "A": self.A,
                "turan_A": self.turan_A, "provenance": self.provenance}


# Reports

@dataclass
class Precondition:
    name: str
    satisfied: bool
    margin: float = None

    def to_dict(self) -> dict:
        return {"name": self.name, "satisfied": self.satisfied, "margin": self.margin}


@dataclass
class BoundReport:
    """Log-probability bound with its named preconditions and audit chain."""
    formula: str
    inputs: dict
    preconditions: list[Precondition] = field(default_factory=list)
    log_bound: float = None
    audit: dict = field(default_factory=dict)
    constants: dict = None

    @property
    def valid(self) -> bool:
        return all(p.satisfied for p in self.preconditions)

    @property
    def bound(self) -> float:
        """Linear bound, 0 below the float range."""
        if self.log_bound is None:
            return None
        return 0.0 if self.log_bound < LOG_MIN_FLOAT else math.exp(self.log_bound)

    def require(self) -> BoundReport:
        """Raise PreconditionFailed for the first violated precondition."""
        for p in self.preconditions:
            if not p.satisfied:
                raise PreconditionFailed(p.name, f"{self.formula}: precondition '{p.name}' failed "
                                                 f"(margin {p.margin})", margin=p.margin)
        return self

    def to_dict(self) -> dict:
        return {"formula": self.formula, "inputs": self.inputs,
                "preconditions": [p.to_dict() for p in self.preconditions],
                "valid": self.valid, "log_bound": self.log_bound, "audit": self.audit, "constants": self.constants}

    def to_frame(self) -> pd.DataFrame:
        """(precondition, satisfied, margin) rows followed by the log-bound."""
        rows = [{"row": p.name, "satisfied": p.satisfied, "value": p.margin} for p in self.preconditions]
        rows.append({"row": "log_bound", "satisfied": self.valid, "value": self.log_bound})
        return pd.DataFrame(rows)


def _finish(report: BoundReport, log_bound: float, strict: bool) -> BoundReport:
    if report.valid:
        report.log_bound = log_bound
    return report.require() if strict else report


def floor_eps_n(eps: float, n: int) -> int:
    """floor(eps n) in exact rational arithmetic of the decimal eps."""
    return math.floor(Fraction(str(eps)) * n)


def _eps_pre(eps: float, upper: float) -> Precondition:
    return Precondition("eps_range", 0 < eps < upper, min(eps, upper - eps))


def _n_pre(eps: float, n: int) -> Precondition:
    # n >= 1/eps^2 exactly for decimal eps
    e = Fraction(str(eps))
    return Precondition("n_ge_inv_eps2", e > 0 and n * e * e >= 1, n - 1 / eps ** 2 if eps > 0 else None)


def _t_pre(T: float, b: float, m: int) -> Precondition:
    if b is None:
        return Precondition("T_in_open_interval", False, None)
    return Precondition("T_in_open_interval", 0 < T < b * m, min(T, b * m - T))


def _log_root(table, n: int, kind: str) -> float:
    """log of D_n^(1/n) (or R_n, L_n): from a moment table, or the given root value."""
    if isinstance(table, MomentTable):
        arr = {"D": table.log_d, "R": table.log_r, "L": table.log_l}[kind]
        if arr is None or n >= len(arr):
            raise ValueError(f"{kind}_{n} is outside of the moment table (n_max {table.n_max})")
        return float(arr[n]) / n
    return math.log(float(table))


def _require_B(k: BoundConstants) -> float:
    B = k.B if k.B is not None else (k.derived_B() if k.C else None)
    if B is None or B <= 0:
        raise ValueError("bound constant B (or C) is required")
    return B


# Main theorems

def theorem1_upper(eps: float, n: int, T: float, D, k: BoundConstants, strict: bool = True) -> BoundReport:
    """
    Upper bound of P(N_T >= n): 2 exp{-(eps n^2 / 2) log((B / D_n^(1/n)) (n/T)^(1 - 2 eps))}.
    :param D: 1D MomentTable, or the value D_n^(1/n)
    """
    B = _require_B(k)
    m = floor_eps_n(eps, n)
    log_root = _log_root(D, n, "D")
    h = math.log(B) - log_root + (1 - 2 * eps) * math.log(n / T)
    report = BoundReport("theorem1_upper", {"eps": eps, "n": n, "T": T, "D_root": math.exp(log_root)},
                         [_eps_pre(eps, 0.5), _n_pre(eps, n), _t_pre(T, k.b, m),
                          Precondition("argument_ge_e", h >= 1, h - 1)],
                         constants=k.to_dict())
    log_H = 0.5 * (2 * math.log(n) + math.log(h)) if h > 0 else None
    report.audit = {"m": m, "h_n": h, "log_H_n": log_H, "log_D_n": n * log_root,
                    "smallball_term": -eps * n * n * h / 2, "sup_tail_term": -n * n * h / 2}
    if log_H is not None:
        log_M = LOG_2 + math.log(k.A) + n * log_root + log_H
        report.audit |= {"log_M": log_M, "log_eta": log_M + n * math.log(2 * T) - math.lgamma(n + 1)}
    return _finish(report, LOG_2 - eps * n * n * h / 2, strict)


def theorem1_lower(n: int, T: float, c: float, b: float = None, strict: bool = True,
                   mu: SpectralMeasure1D = None) -> BoundReport:
    """
    Lower bound of P(N_T >= n): exp(-n^2 log(cn/T)), for T <= bn.
    :param b: threshold constant; when missing it comes from the assumption check of `mu`
    :param mu: measure used to derive b
    """
    if b is None and mu is not None:
        b = check_assumption_a1(mu).b or None
    pre = [Precondition("T_le_bn", False, None) if b is None else Precondition("T_le_bn", T <= b * n, b * n - T),
           Precondition("cn_over_T_ge_1", c * n / T >= 1, c * n / T - 1)]
    report = BoundReport("theorem1_lower", {"n": n, "T": T, "c": c, "b": b}, pre)
    return _finish(report, -n * n * math.log(c * n / T), strict)


def theorem2_upper(eps: float, n: int, T: float, L, k: BoundConstants, strict: bool = True) -> BoundReport:
    """
    Upper bound of P(nodal length in [0,T]^2 > 4nT):
    6 exp{-(eps n^2 / 2) log((B / L_n^(1/n)) (n/T)^(1 - 4 eps))}.
    :param L: 2D MomentTable, or the value L_n^(1/n)
    """
    B = _require_B(k)
    m = floor_eps_n(eps, n)
    log_root = _log_root(L, n, "L")
    log_r_root = _log_root(L, n, "R") if isinstance(L, MomentTable) else log_root
    h = math.log(B) - log_root + (1 - 4 * eps) * math.log(n / T)
    g = math.log(B) - log_r_root + (1 - 2 * eps) * math.log(n / T)
    report = BoundReport("theorem2_upper", {"eps": eps, "n": n, "T": T, "L_root": math.exp(log_root),
                                            "length": 4 * n * T},
                         [_eps_pre(eps, 0.25), _n_pre(eps, n), _t_pre(T, k.b, m),
                          Precondition("argument_ge_e", h >= 1, h - 1)],
                         constants=k.to_dict())
    log_delta = n * math.log(2 * T) - math.lgamma(n + 1)
    report.audit = {"m": m, "g_n": g, "log_delta": log_delta, "log_lines": math.log(T) - log_delta,
                    "smallball_term": LOG_2 - eps * n * n * h / 2, "sup_tail_term": -n * n * g / 2}
    if g > 0:
        log_G = math.log(n) + 0.5 * math.log(g)
        report.audit |= {"log_G_n": log_G, "log_M": LOG_2 + math.log(k.A) + n * log_r_root + log_G}
    return _finish(report, LOG_6 - eps * n * n * h / 2, strict)


# Small ball chain

def smallball_bound(m: int, T: float, eta: float, C: float, b: float = None, strict: bool = True) -> BoundReport:
    """log of (Cm/T)^(m^2) eta^m, the sup small ball bound on [0, T]."""
    pre = [Precondition("eta_positive", eta > 0, eta)]
    if b is not None:
        pre.insert(0, Precondition("T_le_bm", T <= b * m, b * m - T))
    report = BoundReport("smallball", {"m": m, "T": T, "eta": eta, "C": C, "b": b}, pre)
    log_eta = math.log(eta) if eta > 0 else -math.inf
    report.audit = {"zero_at_eta": math.exp(m * math.log(T / (C * m)))}
    return _finish(report, m * m * math.log(C * m / T) + m * log_eta, strict)


def eigen_smallball_bound(lambda_min: float, m: int, eta: float, log_lambda: float = None) -> float:
    """log of P(|X_{t_k}| <= eta, k = 0..m) <= (2 eta / sqrt(2 pi lambda))^(m+1)."""
    if log_lambda is None:
        if not lambda_min > 0:
            raise PreconditionFailed("lambda_positive", f"smallest eigenvalue {lambda_min} is not positive")
        log_lambda = math.log(lambda_min)
    return (m + 1) * (math.log(2 * eta) - 0.5 * (math.log(2 * math.pi) + log_lambda))


def orthant_lower_bound(lambda_min: float, n: int, log_lambda: float = None) -> float:
    """log of the alternating sign lower bound (sqrt(lambda) / 2)^(n+1)."""
    if log_lambda is None:
        if not lambda_min > 0:
            raise PreconditionFailed("lambda_positive", f"smallest eigenvalue {lambda_min} is not positive")
        log_lambda = math.log(lambda_min)
    return (n + 1) * (0.5 * log_lambda - LOG_2)


def lemsbp_bound(eps: float, n: int, T: float, Dn, A: float = A_1D, C: float = None, B: float = None,
                 b: float = None, strict: bool = True) -> BoundReport:
    """
    Small ball bound at eta = M (2T)^n / n! with M = 2 A D_n H_n, H_n = sqrt(n^2 h_n):
    P(||X||_{L^inf[0,T]} <= eta) <= exp(-eps n^2 h_n / 2).
    :param Dn: D_n (>= 1), or a MomentTable
    """
    if B is None:
        if C is None:
            raise ValueError("lemsbp bound needs B or C")
        B = 1.0 / (4 * math.e * A * C)
    log_dn = n * _log_root(Dn, n, "D") if isinstance(Dn, MomentTable) else math.log(Dn)
    m = floor_eps_n(eps, n)
    h = math.log(B) - log_dn / n + (1 - 2 * eps) * math.log(n / T)
    pre = [_eps_pre(eps, 0.5), _n_pre(eps, n), Precondition("m_ge_1", m >= 1, m - 1),
           Precondition("Dn_ge_1", log_dn >= 0, log_dn), Precondition("h_ge_1", h >= 1, h - 1)]
    if b is not None:
        pre.insert(3, Precondition("T_le_bm", T <= b * m, b * m - T))
    report = BoundReport("lemsbp", {"eps": eps, "n": n, "T": T, "D_n": math.exp(min(log_dn, 700)), "A": A,
                                    "B": B, "C": C, "b": b}, pre)
    if h > 0:
        log_H = math.log(n) + 0.5 * math.log(h)
        log_M = LOG_2 + math.log(A) + log_dn + log_H
        log_eta = log_M + n * math.log(2 * T) - math.lgamma(n + 1)
        exponent = m * m - m * n
        log_W = exponent * math.log(n / T) + m * n * (-math.log(B) + log_dn / n) + m * log_H
        report.audit = {
            "m": m, "h_n": h, "log_H_n": log_H, "log_M": log_M, "log_eta": log_eta,
            "log_W_lline": log_W,
            "exponent": exponent, "exponent_limit": -eps * (1 - 2 * eps) * n * n,
            "exponent_ok": exponent <= -eps * (1 - 2 * eps) * n * n,
            "eqv3": -eps * n * (n * h - math.log(n * h)),
        }
        if C is not None:
            report.audit["log_smallball"] = m * m * math.log(C * m / T) + m * log_eta
    return _finish(report, -eps * n * n * h / 2, strict)


# Entropy and sup tail chain

@dataclass
class SupBound:
    """Expected sup and Gaussian concentration of X^(n) on [0, 2T]."""
    n: int
    T: float
    beta: float           # 4 sqrt(C_{2n+2}) T
    entropy: float        # Dudley integral bound sqrt(pi) beta
    expected_sup: float   # 48 sqrt(pi) sqrt(C_{2n+2}) T
    expected_abs_sup: float  # A max{sqrt(C_2n), sqrt(C_{2n+2}) T}
    a_n_dn: float         # A n D_n, when D_n is tabulated
    sigma: float          # sqrt(C_2n)

    def tail(self, x: float) -> float:
        """log P(Z - E Z >= sigma sqrt(2x)) <= -x"""
        return -x

    def log_tail_at(self, M: float) -> float:
        """log of the bound on P(sup |X^(n)| > M)."""
        if M <= self.expected_abs_sup:
            return 0.0
        return -0.5 * ((M - self.expected_abs_sup) / self.sigma) ** 2

    def to_dict(self) -> dict:
        return {"n": self.n, "T": self.T, "beta": self.beta, "entropy": self.entropy,
                "expected_sup": self.expected_sup, "expected_abs_sup": self.expected_abs_sup,
                "a_n_dn": self.a_n_dn, "sigma": self.sigma}


def dudley_sup_bound(moments: MomentTable, n: int, T: float, A: float = A_1D) -> SupBound:
    """Entropy integral and expected sup bounds of X^(n) on [0, 2T] from the moments C_2n, C_{2n+2}."""
    log_c2n, log_c2n2 = moments.log_moment(2 * n), moments.log_moment(2 * n + 2)
    if not (math.isfinite(log_c2n) and math.isfinite(log_c2n2)):
        raise DivergentMoment(f"C_{2 * n + 2} is not finite")
    s2n, s2n2 = math.exp(0.5 * log_c2n), math.exp(0.5 * log_c2n2)
    beta = 4 * s2n2 * T
    a_n_dn = None
    if n >= 1 and moments.log_d is not None and n < len(moments.log_d):
        a_n_dn = A * n * moments.d(n)
    return SupBound(n, T, beta, math.sqrt(math.pi) * beta, 12 * math.sqrt(math.pi) * beta,
                    A * max(s2n, s2n2 * T), a_n_dn, s2n)


def probability_split(n: int, T: float, M: float, moments: MomentTable, k: BoundConstants, m: int = None,
                      strict: bool = True) -> BoundReport:
    """
    Terms of P(N_T >= n) <= P(||X||_{[T,2T]} <= M (2T)^n / n!) + P(||X^(n)||_{[0,2T]} > M):
    the small ball term from the sup small ball bound with m points, the sup tail from the entropy chain.
    """
    m = m or max(1, n // 4)
    log_eta = math.log(M) + n * math.log(2 * T) - math.lgamma(n + 1)
    pre = [Precondition("C_given", k.C is not None, None)]
    if k.b is not None:
        pre.append(Precondition("T_le_bm", T <= k.b * m, k.b * m - T))
    report = BoundReport("probability_split", {"n": n, "T": T, "M": M, "m": m}, pre, constants=k.to_dict())
    sup = dudley_sup_bound(moments, n, T, k.A)
    tail = sup.log_tail_at(M)
    small = min(0.0, m * m * math.log(k.C * m / T) + m * log_eta) if k.C else None
    report.audit = {"log_eta": log_eta, "smallball_term": small, "sup_tail_term": tail, "sup": sup.to_dict()}
    total = None if small is None else float(special.logsumexp([small, tail]))
    return _finish(report, total, strict)


def short_range_repulsion(n: int, delta: float, D, k: BoundConstants, strict: bool = True) -> BoundReport:
    """
    Upper bound at eps = 1/4: P(N_delta >= n) <= b_n delta^(n^2/16) for delta in (0, b'_n).
    """
    B = _require_B(k)
    log_root = _log_root(D, n, "D")
    log_b_n = LOG_2 - n * n / 8 * (math.log(B) - log_root + 0.5 * math.log(n))
    arg_limit = n * math.exp(-2 * (1 - math.log(B) + log_root))  # argument >= e
    limits = [arg_limit] + ([k.b * floor_eps_n(0.25, n)] if k.b is not None else [])
    b_prime = min(limits)
    report = BoundReport("short_range_repulsion", {"n": n, "delta": delta, "D_root": math.exp(log_root)},
                         [Precondition("n_ge_16", n >= 16, n - 16),
                          Precondition("delta_below_b_prime", 0 < delta < b_prime, b_prime - delta)],
                         constants=k.to_dict())
    report.audit = {"log_b_n": log_b_n, "b_prime": b_prime, "exponent": n * n / 16}
    return _finish(report, log_b_n + n * n / 16 * math.log(delta), strict)


# Regime table

ROWS = ["compact", "subcritical", "supercritical", "logtype"]


@dataclass
class RegimeReport:
    row: str
    dimension: int
    size: float          # n (1D) or the length threshold (2D)
    T: float
    constraint: Precondition
    log_tail: float
    form: str
    constant: float
    log_moment: float = None   # log of the bound on E[N^m] (or E[L^m])
    moment_form: str = None
    subdivision: dict = None
    kappas: dict = None

    def to_dict(self) -> dict:
        return {"row": self.row, "dimension": self.dimension, "size": self.size, "T": self.T,
                "constraint": self.constraint.to_dict(), "log_tail": self.log_tail, "form": self.form,
                "constant": self.constant, "log_moment": self.log_moment, "moment_form": self.moment_form,
                "subdivision": self.subdivision, "kappas": self.kappas}


def kappa_chain(alpha: float, kappa: float) -> dict:
    """
    Even split kappa < kappa' < kappa'' < 1 - alpha, the eps solving (1 - alpha - 2eps)/(1 - 2eps) = kappa''
    and the resulting constant c_kappa = eps (1 - 2 eps)(kappa' - kappa)/2.
    """
    if not 0 < kappa < 1 - alpha:
        raise PreconditionFailed("kappa_range", f"kappa = {kappa} must lie in (0, {1 - alpha})",
                                 margin=min(kappa, 1 - alpha - kappa))
    gap = 1 - alpha - kappa
    k1, k2 = kappa + gap / 3, kappa + 2 * gap / 3
    eps = (1 - alpha - k2) / (2 * (1 - k2))
    return {"kappa": kappa, "kappa_prime": k1, "kappa_double_prime": k2, "eps": eps,
            "c_kappa": eps * (1 - 2 * eps) * (k1 - kappa) / 2}


def regime_table(row: str, dimension: int, n: float, T: float, m: int = None, c: float = 1.0,
                 C: float = 1.0, kappa: float = 0.1, alpha: float = None, gamma: float = None,
                 strict: bool = True) -> RegimeReport:
    """
    Asymptotic tail and moment forms of the growth classes of the moments.
    :param row: compact, subcritical (alpha < 1), supercritical (alpha >= 1) or logtype (gamma > 1/2)
    :param n: zero count threshold (1D) or nodal length threshold (2D)
    :param c: constant of the tail form, C: constant of the constraint
    """
    if row not in ROWS:
        raise UnknownRow(row)
    if dimension not in [1, 2]:
        raise ValueError("dimension must be 1 or 2")
    kappas, subdivision = None, None
    ell = n
    match row:
        case "compact":
            if dimension == 1:
                ok, margin = T >= 1 and n >= C * T, min(T - 1, n - C * T)
                log_tail, form = -c * n * n * math.log(n / T), "-c n^2 log(n/T)"
            else:
                ok, margin = T >= 1 and ell >= C * T * T, min(T - 1, ell - C * T * T)
                log_tail, form = -c * ell ** 2 / T ** 2 * math.log(ell / T ** 2), "-c (l^2/T^2) log(l/T^2)"
            constraint = Precondition("T_ge_1_and_n_ge_CT", ok, margin)
        case "subcritical":
            if alpha is None or not 0 < alpha < 1:
                raise PreconditionFailed("alpha_lt_1", f"subcritical row needs alpha in (0, 1), got {alpha}")
            kappas = kappa_chain(alpha, kappa)
            c = kappas["c_kappa"]
            if dimension == 1:
                ok, margin = T >= 1 and n >= T ** (1 / kappa), min(T - 1, n - T ** (1 / kappa))
                log_tail, form = -c * n * n * math.log(n), "-c_kappa n^2 log n"
            else:
                low = T ** ((kappa + 1) / kappa)
                ok, margin = T >= 1 and ell >= low, min(T - 1, ell - low)
                log_tail, form = -c * ell ** 2 / T ** 2 * math.log(ell), "-c (l^2/T^2) log l"
            constraint = Precondition("n_ge_T_pow_inv_kappa", ok, margin)
        case "supercritical":
            if alpha is None or alpha < 1:
                raise PreconditionFailed("alpha_ge_1", f"supercritical row needs alpha >= 1, got {alpha}")
            constraint = Precondition("T_eq_1", T == 1, 1 - T)
            log_tail, form = -c * n ** (2 / (alpha + kappa)), "-c n^(2/(alpha+kappa))"
            pieces = math.ceil(n ** (alpha - 1 + kappa))
            subdivision = {"pieces": pieces, "piece_length": n ** -(alpha - 1 + kappa),
                           "count": n * n ** (alpha - 1 + kappa),
                           "log_union_bound": math.log(pieces) - c * n * n}
        case "logtype":
            if gamma is None or gamma <= 0.5:
                raise PreconditionFailed("gamma_gt_half", f"log-type row needs gamma > 1/2, got {gamma}")
            constraint = Precondition("T_eq_1", T == 1, 1 - T)
            log_tail, form = -c * math.log(n) ** (2 * gamma), "-c (log n)^(2 gamma)"
            log_pieces = C * n ** (1 / gamma)
            subdivision = {"log_pieces": log_pieces, "log_piece_length": -log_pieces,
                           "log_union_bound": log_pieces - c * n * n}

    report = RegimeReport(row, dimension, n, T, constraint, log_tail, form, c, subdivision=subdivision,
                          kappas=kappas)
    if m is not None:
        report.log_moment, report.moment_form = _moment_form(row, dimension, m, T, c, kappa, alpha, gamma)
    if strict and not constraint.satisfied:
        raise PreconditionFailed(constraint.name, f"{row} row constraint failed", margin=constraint.margin)
    return report


def _moment_form(row: str, dimension: int, m: int, T: float, c: float, kappa: float, alpha: float,
                 gamma: float) -> tuple[float, str]:
    """log of the moment bound E[N^m] and its form."""
    root_m = math.sqrt(m)
    match row:
        case "compact":
            if dimension == 1:
                return m * math.log(c * max(T, root_m)), "(c (T v sqrt m))^m"
            return m * math.log(c * T * max(T, root_m)), "(c T (T v sqrt m))^m"
        case "subcritical":
            if dimension == 1:
                return m * math.log(c * max(T ** (1 / kappa), root_m)), "(c (T^(1/kappa) v sqrt m))^m"
            return m * math.log(c * T * max(T ** (1 / kappa), root_m)), "(c T (T^(1/kappa) v sqrt m))^m"
        case "supercritical":
            return m * math.log(c * m ** ((alpha + kappa) / 2)), "(c m^((alpha+kappa)/2))^m"
        case "logtype":
            return c * m ** (1 + 1 / (2 * gamma - 1)), "exp(c m^(1 + 1/(2 gamma - 1)))"


def regime_doubling_ratio(row: str, dimension: int, n: float, T: float, **kwargs) -> float:
    """|log tail| at 2n over |log tail| at n."""
    a = regime_table(row, dimension, n, T, strict=False, **kwargs).log_tail
    b = regime_table(row, dimension, 2 * n, T, strict=False, **kwargs).log_tail
    return float(np.abs(b) / np.abs(a))
