"""Protocol configuration shared by the analytic models and the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import InvalidConfig
from .fbl import CodeParams

SCHEMES = ("IR", "CC")


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return -math.inf if x == 0 else 10.0 * math.log10(x)


@dataclass(frozen=True)
class HarqConfig:
    """HARQ parameters.

    ``m`` is the maximum number of transmissions per packet, so there are
    ``m - 1`` power-splitting ratios ``alphas`` and time-sharing ratios
    ``taus``.  Both must be nonincreasing.  Chase combining always
    retransmits whole blocks, so ``taus`` is forced to ones.
    """

    code: CodeParams
    m: int
    gamma0: float
    scheme: str = "IR"
    alphas: tuple = ()
    taus: tuple = ()

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidConfig(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.m) != self.m or self.m < 1:
            raise InvalidConfig(f"m must be a positive integer, got {self.m}")
        r = self.m - 1
        alphas = tuple(float(a) for a in self.alphas) or (1.0,) * r
        taus = tuple(float(t) for t in self.taus) or (1.0,) * r
        if self.scheme == "CC":
            taus = (1.0,) * r
        if len(alphas) != r or len(taus) != r:
            raise InvalidConfig(f"m={self.m} needs {r} alphas and taus, "
                                f"got {len(alphas)} and {len(taus)}")
        for a in alphas:
            if not 0.0 <= a <= 1.0:
                raise InvalidConfig(f"alpha {a} outside [0, 1]")
        for t in taus:
            if not 0.0 < t <= 1.0:
                raise InvalidConfig(f"tau {t} outside (0, 1]")
        for i in range(1, r):
            if alphas[i] > alphas[i - 1] or taus[i] > taus[i - 1]:
                raise InvalidConfig("alphas and taus must be nonincreasing")
        if not self.gamma0 >= 0.0:
            raise InvalidConfig(f"gamma0 must be nonnegative, got {self.gamma0}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "taus", taus)

    @classmethod
    def from_db(cls, snr_db: float, k: int, n: int, m: int, scheme: str = "IR",
                alphas: Sequence[float] = (), taus: Sequence[float] = (),
                dispersion: str = "bits") -> "HarqConfig":
        return cls(CodeParams(k, n, dispersion), m, db_to_linear(snr_db), scheme,
                   tuple(alphas), tuple(taus))

    @property
    def snr_db(self) -> float:
        return linear_to_db(self.gamma0)

    def with_params(self, alphas=None, taus=None) -> "HarqConfig":
        return replace(self, alphas=tuple(self.alphas if alphas is None else alphas),
                       taus=tuple(self.taus if taus is None else taus))

    def with_gamma0(self, gamma0: float) -> "HarqConfig":
        return replace(self, gamma0=gamma0)

    def to_dict(self) -> dict:
        return {"k": self.code.k, "n": self.code.n, "dispersion": self.code.dispersion,
                "m": self.m, "scheme": self.scheme, "snr_db": self.snr_db,
                "alphas": list(self.alphas), "taus": list(self.taus)}
