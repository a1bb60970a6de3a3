"""Analytical cost model for the three systems (non-private, baseline,
decomposed/packed) across setup and per-email phases.

All arithmetic is exact: the fractional ciphertext count of the
across-row residual group (beta_prime) is a Fraction, and measured
constants are converted to Fractions before use, so two evaluations of
the same tuple agree bit-for-bit.

Units are whatever the constants are measured in (the bench subcommand
emits seconds and bytes); the formulas only combine, never convert.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from fractions import Fraction

from .errors import ParameterError

SYSTEMS = ("nonprivate", "baseline", "pretzel")
FUNCTIONS = ("spam", "topics")
PHASES = ("setup", "per_email")


@dataclass(frozen=True)
class CostModel:
    # dimensions
    N: int = 0  # model features
    N_prime: int = 0  # features kept after aggressive selection
    B: int = 0  # categories
    B_prime: int = 0  # candidate topics after client-side pruning
    L: int = 0  # features per email
    p_pail: int = 0  # slots per Paillier ciphertext
    p_xpir: int = 0  # slots per Ring-LWE ciphertext
    # measured micro constants (e=encrypt, d=decrypt, a=add, c=ciphertext size)
    e_pail: float = 0.0
    d_pail: float = 0.0
    a_pail: float = 0.0
    c_pail: float = 0.0
    e_xpir: float = 0.0
    d_xpir: float = 0.0
    a_xpir: float = 0.0
    c_xpir: float = 0.0
    h: float = 0.0  # feature extraction + probability lookup
    s: float = 0.0  # probability add / slot shift (the legend overloads s)
    y_per_in: float = 0.0  # Yao CPU per circuit input word
    sz_per_in: float = 0.0  # Yao network bytes per circuit input word
    sz_email: float = 0.0
    K_cpu: float = 0.0
    K_net: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ParameterError(f"cost-model field {f.name} must be non-negative")

    @property
    def beta_pail(self) -> int:
        if self.p_pail < 1:
            raise ParameterError("p_pail required")
        return math.ceil(self.B / self.p_pail)

    @property
    def beta_xpir(self) -> int:
        if self.p_xpir < 1:
            raise ParameterError("p_xpir required")
        return math.ceil(self.B / self.p_xpir)

    @property
    def beta_prime_xpir(self) -> Fraction:
        """floor(B/p) + 1/floor(p/k) with k = B mod p; exact rational."""
        k = self.B % self.p_xpir
        if k == 0:
            return Fraction(self.beta_xpir)
        return Fraction(self.B // self.p_xpir) + Fraction(1, self.p_xpir // k)

    def beta_pp_xpir(self, function: str) -> Fraction:
        return Fraction(self.beta_xpir) if function == "spam" else Fraction(self.B_prime)

    def b_pp(self, function: str) -> int:
        return self.B if function == "spam" else self.B_prime


def _f(x) -> Fraction:
    return Fraction(x)


def estimate_costs(cm: CostModel, system: str, function: str, phase: str) -> dict:
    """One cell group of the cost table: {row: Fraction | None}.

    Rows: provider_cpu, client_cpu, network, and (setup only)
    client_storage. None marks not-applicable cells.
    """
    if system not in SYSTEMS:
        raise ParameterError(f"unknown system {system!r}")
    if function not in FUNCTIONS:
        raise ParameterError(f"unknown function {function!r}")
    if phase not in PHASES:
        raise ParameterError(f"unknown phase {phase!r}")

    if system == "nonprivate":
        if phase == "setup":
            return {"provider_cpu": None, "client_cpu": None, "network": None,
                    "client_storage": None}
        return {
            "provider_cpu": _f(cm.L) * _f(cm.h) + _f(cm.L) * _f(cm.B) * _f(cm.s),
            "client_cpu": None,
            "network": _f(cm.sz_email),
        }

    if system == "baseline":
        beta = _f(cm.beta_pail)
        if phase == "setup":
            stored = _f(cm.N) * beta * _f(cm.c_pail)
            return {
                "provider_cpu": _f(cm.N) * beta * _f(cm.e_pail) + _f(cm.K_cpu),
                "client_cpu": _f(cm.K_cpu),
                "network": stored + _f(cm.K_net),
                "client_storage": stored,
            }
        return {
            "provider_cpu": beta * _f(cm.d_pail) + _f(cm.B) * _f(cm.y_per_in),
            "client_cpu": _f(cm.L) * beta * _f(cm.a_pail)
            + beta * _f(cm.e_pail)
            + _f(cm.B) * _f(cm.y_per_in),
            "network": _f(cm.sz_email)
            + beta * _f(cm.c_pail)
            + _f(cm.B) * _f(cm.sz_per_in),
        }

    # pretzel
    if phase == "setup":
        stored = _f(cm.N_prime) * cm.beta_prime_xpir * _f(cm.c_xpir)
        return {
            "provider_cpu": _f(cm.N_prime) * cm.beta_prime_xpir * _f(cm.e_xpir)
            + _f(cm.K_cpu),
            "client_cpu": _f(cm.K_cpu),
            "network": stored + _f(cm.K_net),
            "client_storage": stored,
        }
    beta_pp = cm.beta_pp_xpir(function)
    b_pp = _f(cm.b_pp(function))
    return {
        "provider_cpu": beta_pp * _f(cm.d_xpir) + b_pp * _f(cm.y_per_in),
        "client_cpu": _f(cm.L) * _f(cm.beta_xpir) * _f(cm.a_xpir)
        + (_f(cm.L) + _f(cm.B_prime)) * _f(cm.s)
        + beta_pp * _f(cm.e_xpir)
        + b_pp * _f(cm.y_per_in),
        "network": _f(cm.sz_email) + beta_pp * _f(cm.c_xpir) + b_pp * _f(cm.sz_per_in),
    }


def full_table(cm: CostModel, function: str) -> dict:
    """All systems x phases for one function, keyed (system, phase)."""
    return {
        (system, phase): estimate_costs(cm, system, function, phase)
        for system in SYSTEMS
        for phase in PHASES
    }
