"""Parameters and state containers shared by all solvers.

All rates are stored in whatever unit the caller chooses; by convention the
rest of the package (and all defaults) work in units where the collective
coupling V = 2*N*Omega^2/kappa equals 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np


class ParameterError(ValueError):
    """Raised when a physical parameter is outside its allowed range."""


@dataclass(frozen=True)
class SystemParams:
    """Physical rates and counts plus derived couplings.

    Use :func:`derive` (or the ``from_*`` constructors) rather than building
    instances by hand, so the derived fields are consistent.
    """

    N: int
    p_d: float
    omega: float          # spin-cavity coupling Omega
    kappa: float          # cavity decay
    gamma_plus: float     # incoherent drive
    gamma_minus: float = 0.0   # spontaneous emission
    gamma_z: float = 0.0       # dephasing

    # derived
    V: float = 0.0
    Gamma: float = 0.0
    p_ud: float = 0.0
    N_d: int = 0
    N_ud: int = 0
    bad_cavity_ratio: float = 0.0

    def is_bad_cavity(self, threshold: float = 10.0) -> bool:
        return self.bad_cavity_ratio >= threshold


def derive(params=None, **kw) -> SystemParams:
    """Validate raw parameters and populate the derived fields.

    Accepts either a SystemParams (idempotent) or keyword arguments
    N, p_d, omega, kappa, gamma_plus, gamma_minus, gamma_z.
    """
    if params is not None:
        if kw:
            raise TypeError("pass either a SystemParams or keyword arguments, not both")
        kw = dict(
            N=params.N, p_d=params.p_d, omega=params.omega, kappa=params.kappa,
            gamma_plus=params.gamma_plus, gamma_minus=params.gamma_minus,
            gamma_z=params.gamma_z,
        )

    N = kw["N"]
    p_d = float(kw["p_d"])
    omega = float(kw["omega"])
    kappa = float(kw["kappa"])
    gamma_plus = float(kw["gamma_plus"])
    gamma_minus = float(kw.get("gamma_minus", 0.0))
    gamma_z = float(kw.get("gamma_z", 0.0))

    if not (isinstance(N, (int, np.integer)) or float(N).is_integer()):
        raise ParameterError(f"N must be an integer, got {N}")
    N = int(N)
    if N < 1:
        raise ParameterError(f"N must be >= 1, got {N}")
    if not 0.0 <= p_d <= 1.0:
        raise ParameterError(f"p_d must be in [0, 1], got {p_d}")
    if kappa <= 0.0:
        raise ParameterError(f"kappa must be > 0, got {kappa}")
    for name, val in (("omega", omega), ("gamma_plus", gamma_plus),
                      ("gamma_minus", gamma_minus), ("gamma_z", gamma_z)):
        if val < 0.0:
            raise ParameterError(f"{name} must be >= 0, got {val}")

    V = 2.0 * N * omega**2 / kappa
    Gamma = gamma_minus + 2.0 * gamma_z
    p_ud = 1.0 - p_d
    # round half up; p_d is continuous but a finite-N run needs integer counts
    N_d = int(math.floor(p_d * N + 0.5))
    if abs(p_d * N - round(p_d * N)) > 1e-9 * max(1.0, N):
        warnings.warn(
            f"p_d*N = {p_d * N} is not an integer; using N_d = {N_d}",
            stacklevel=2,
        )
    N_ud = N - N_d
    bad_cavity_ratio = kappa / (math.sqrt(N) * omega) if omega > 0 else math.inf

    return SystemParams(
        N=N, p_d=p_d, omega=omega, kappa=kappa,
        gamma_plus=gamma_plus, gamma_minus=gamma_minus, gamma_z=gamma_z,
        V=V, Gamma=Gamma, p_ud=p_ud, N_d=N_d, N_ud=N_ud,
        bad_cavity_ratio=bad_cavity_ratio,
    )


def from_coupling(N, p_d, omega, kappa, gamma_plus,
                  gamma_minus=0.0, gamma_z=0.0) -> SystemParams:
    """Build params from the (Omega, kappa, N) input style."""
    return derive(N=N, p_d=p_d, omega=omega, kappa=kappa, gamma_plus=gamma_plus,
                  gamma_minus=gamma_minus, gamma_z=gamma_z)


def from_V(N, p_d, gamma_plus, V=1.0, gamma_minus=0.0, gamma_z=0.0,
           cavity_ratio=10.0) -> SystemParams:
    """Build params from the (V, N) input style.

    Omega and kappa are reconstructed so that 2*N*Omega^2/kappa = V and
    kappa/(sqrt(N)*Omega) = cavity_ratio (default 10, deep in the bad-cavity
    regime).
    """
    if V < 0:
        raise ParameterError(f"V must be >= 0, got {V}")
    if cavity_ratio <= 0:
        raise ParameterError(f"cavity_ratio must be > 0, got {cavity_ratio}")
    # kappa = r*sqrt(N)*Omega and V = 2N Omega^2/kappa => Omega = r*V/(2*sqrt(N))
    omega = cavity_ratio * V / (2.0 * math.sqrt(N))
    kappa = cavity_ratio * math.sqrt(N) * omega
    return derive(N=N, p_d=p_d, omega=omega, kappa=kappa, gamma_plus=gamma_plus,
                  gamma_minus=gamma_minus, gamma_z=gamma_z)


def with_rates(params: SystemParams, **rates) -> SystemParams:
    """Copy of params with some raw rates replaced; derived fields refreshed."""
    return derive(replace(params, **rates))


@dataclass
class MeanFieldState:
    """Per-class Bloch components; alpha present only for the with-cavity variant."""

    s_plus_d: complex
    s_plus_ud: complex
    s_z_d: float
    s_z_ud: float
    alpha: complex | None = None

    def s_plus(self, params: SystemParams) -> complex:
        return params.p_d * self.s_plus_d + params.p_ud * self.s_plus_ud

    def bloch_norms(self) -> tuple[float, float]:
        """(driven, undriven) values of s_z^2 + 4|s+|^2, each <= 1 physically."""
        nd = self.s_z_d**2 + 4.0 * abs(self.s_plus_d) ** 2
        nud = self.s_z_ud**2 + 4.0 * abs(self.s_plus_ud) ** 2
        return nd, nud

    def to_vector(self) -> np.ndarray:
        vec = [self.s_plus_d, self.s_plus_ud, self.s_z_d, self.s_z_ud]
        if self.alpha is not None:
            vec.append(self.alpha)
        return np.asarray(vec, dtype=complex)

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "MeanFieldState":
        alpha = complex(y[4]) if len(y) > 4 else None
        return cls(s_plus_d=complex(y[0]), s_plus_ud=complex(y[1]),
                   s_z_d=float(y[2].real), s_z_ud=float(y[3].real), alpha=alpha)


# index layout of the packed cumulant vector
_CUM_FIELDS = ("s_z_d", "s_z_ud", "n_phot", "ad_sm_d", "ad_sm_ud",
               "sp_sm_dd", "sp_sm_udud", "sp_d_sm_ud")
_CUM_REAL = (0, 1, 2, 5, 6)     # components that are real by construction


@dataclass
class CumulantState:
    """The eight second-order moments of the driven/undriven two-class laser."""

    s_z_d: float
    s_z_ud: float
    n_phot: float                 # <a^dag a>
    ad_sm_d: complex              # <a^dag sigma^-_d>
    ad_sm_ud: complex             # <a^dag sigma^-_ud>
    sp_sm_dd: float               # <sigma^+_d sigma^-_d>, distinct spins
    sp_sm_udud: float             # <sigma^+_ud sigma^-_ud>, distinct spins
    sp_d_sm_ud: complex           # <sigma^+_d sigma^-_ud>

    def to_vector(self) -> np.ndarray:
        return np.asarray([getattr(self, f) for f in _CUM_FIELDS], dtype=complex)

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "CumulantState":
        vals = {}
        for i, f in enumerate(_CUM_FIELDS):
            vals[f] = float(y[i].real) if i in _CUM_REAL else complex(y[i])
        return cls(**vals)

    @classmethod
    def ground(cls) -> "CumulantState":
        """All spins in |0>, empty cavity, no correlations."""
        return cls(s_z_d=-1.0, s_z_ud=-1.0, n_phot=0.0,
                   ad_sm_d=0j, ad_sm_ud=0j,
                   sp_sm_dd=0.0, sp_sm_udud=0.0, sp_d_sm_ud=0j)


@dataclass
class SpectrumGrid:
    """Frequency grid with nonnegative spectral density values."""

    omegas: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.omegas.shape != self.values.shape:
            raise ValueError("omegas and values must have the same length")
        if np.any(np.diff(self.omegas) <= 0):
            raise ValueError("omegas must be strictly increasing")

    def integral(self) -> float:
        """(1/2pi) * trapezoid integral; equals <a^dag a> for a full spectrum."""
        return float(np.trapezoid(self.values, self.omegas)) / (2.0 * np.pi)

    def peak_omega(self) -> float:
        return float(self.omegas[int(np.argmax(self.values))])


@dataclass
class LorentzianFit:
    """Result of the symmetric double-Lorentzian fit."""

    A: float
    delta_nu: float     # HWHM of each peak
    delta: float        # peaks sit at +/- delta
    residual: float     # rms residual
    converged: bool = True


@dataclass
class TravelingWaveSolution:
    """Closed-form traveling-wave frequency; both +/- branches are valid."""

    omega: float | None
    exists: bool

    @property
    def branches(self) -> tuple[float, float] | None:
        if not self.exists:
            return None
        return (abs(self.omega), -abs(self.omega))
