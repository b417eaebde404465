"""CFAR-loss bookkeeping: chi, k, effective reference count, CFAR ratio.

chi uses base-10 logarithms.  The loss-in-dB curve itself is not
tabulated here; these are its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NotTabulated, check_pfa

# k by (method, detector law)
K_TABLE = {
    ("ca", "square"): 0.0,
    ("ca", "linear"): 0.09,
    ("ca", "log"): 0.65,
    ("goca", "square"): 0.37,
    ("goca", "linear"): 0.5,
    ("goca", "log"): 1.26,
}


def chi(pfa: float) -> float:
    return -math.log10(check_pfa(pfa))


def k_lookup(method: str, law: str) -> float:
    key = (str(method).lower(), str(law).lower())
    try:
        return K_TABLE[key]
    except KeyError:
        raise NotTabulated(f"no k value for method={key[0]!r}, law={key[1]!r}") from None


def m_eff(m: float, k: float) -> float:
    """Effective reference count (m + k) / (1 + k)."""
    if m < 1 or k < 0:
        raise ValueError("need m >= 1 and k >= 0")
    return (m + k) / (1.0 + k)


def cfar_ratio(chi_value: float, m_effective: float) -> float:
    if not m_effective > 0:
        raise ValueError("m_eff must be > 0")
    return chi_value / m_effective


def n_log(n_linear: int) -> int:
    """Boundary count a log detector needs to match an N-pixel linear one.

    ceil(1.65 N - 0.65), evaluated in integer arithmetic so exact values
    such as N = 1 are not pushed up by float error.
    """
    if n_linear < 1:
        raise ValueError("n_linear must be >= 1")
    return -((-(165 * n_linear - 65)) // 100)


@dataclass(frozen=True)
class LossInputs:
    pfa: float
    m: int
    method: str = "ca"
    law: str = "square"

    def __post_init__(self):
        check_pfa(self.pfa)
        if self.m < 1:
            raise ValueError("m must be >= 1")


@dataclass(frozen=True)
class LossReport:
    chi: float
    k: float
    m_eff: float
    ratio: float
    n_log: int


def loss_report(inputs: LossInputs) -> LossReport:
    c = chi(inputs.pfa)
    k = k_lookup(inputs.method, inputs.law)
    me = m_eff(inputs.m, k)
    return LossReport(chi=c, k=k, m_eff=me, ratio=cfar_ratio(c, me), n_log=n_log(inputs.m))
