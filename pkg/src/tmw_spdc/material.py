"""Bulk LiNbO3 dispersion and the Ti-indiffusion index profile.

Wavelengths are in micrometres, temperatures in degrees Celsius.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import erf

from .errors import ConfigError, DomainError

ORDINARY = "ordinary"
EXTRAORDINARY = "extraordinary"
BRANCHES = (ORDINARY, EXTRAORDINARY)

# z-cut, y-propagating crystal: TE (x-polarized) sees n_o, TM (z-polarized) sees n_e.
POLARIZATION_BRANCH = {"TE": ORDINARY, "TM": EXTRAORDINARY}
BRANCH_POLARIZATION = {v: k for k, v in POLARIZATION_BRANCH.items()}

# Ti indiffusion strength per branch.
RHO = {ORDINARY: 0.47, EXTRAORDINARY: 0.625}

# Reference wavelength at which the nominal Ti index increase is anchored.
XI_REFERENCE_WAVELENGTH = 0.633
# Default wavelength at which the dispersion weight is evaluated: the
# degenerate down-converted wavelength of the 406 nm-pumped devices.
XI_EVALUATION_WAVELENGTH = 0.812


def resolve_branch(token: str) -> str:
    """Map a polarization or branch token (TE, TM, o, e, ...) to a branch name."""
    t = token.strip()
    upper = t.upper()
    if upper in POLARIZATION_BRANCH:
        return POLARIZATION_BRANCH[upper]
    lower = t.lower()
    if lower in ("o", ORDINARY):
        return ORDINARY
    if lower in ("e", EXTRAORDINARY):
        return EXTRAORDINARY
    raise ConfigError(
        f"unknown polarization {token!r}; valid tokens: TE, TM, o, e, ordinary, extraordinary"
    )


def resolve_polarization(token: str) -> str:
    """Map any polarization/branch token to 'TE' or 'TM'."""
    return BRANCH_POLARIZATION[resolve_branch(token)]


@dataclass(frozen=True)
class SellmeierSet:
    """A published temperature-dependent Sellmeier fit for one index branch.

    ``formula(wavelength_um, temperature_c)`` returns n**2.
    """

    name: str
    reference: str
    wavelength_range: tuple[float, float]
    formula: Callable[[np.ndarray, float], np.ndarray] = field(repr=False, compare=False)

    def index(self, wavelength, temperature: float = 24.5):
        lam = np.asarray(wavelength, dtype=float)
        lo, hi = self.wavelength_range
        if np.any(lam < lo) or np.any(lam > hi):
            raise DomainError(
                f"wavelength outside the {self.name} validity range [{lo}, {hi}] um"
            )
        n = np.sqrt(self.formula(lam, temperature))
        return float(n) if n.ndim == 0 else n


def _jundt_extraordinary(lam, temperature):
    f = (temperature - 24.5) * (temperature + 570.82)
    a1, a2, a3, a4, a5, a6 = 5.35583, 0.100473, 0.20692, 100.0, 11.34927, 1.5334e-2
    b1, b2, b3, b4 = 4.629e-7, 3.862e-8, -0.89e-8, 2.657e-5
    lam2 = lam * lam
    return (
        a1
        + b1 * f
        + (a2 + b2 * f) / (lam2 - (a3 + b3 * f) ** 2)
        + (a4 + b4 * f) / (lam2 - a5**2)
        - a6 * lam2
    )


def _edwards_lawrence_ordinary(lam, temperature):
    f = (temperature - 24.5) * (temperature + 570.5)
    a1, a2, a3, a4 = 4.9048, 0.11775, 0.21802, 0.027153
    b1, b2, b3 = 2.2314e-8, -2.9671e-8, 2.1429e-8
    lam2 = lam * lam
    return a1 + (a2 + b1 * f) / (lam2 - (a3 + b2 * f) ** 2) + b3 * f - a4 * lam2


# Congruent LiNbO3, extraordinary index. D. H. Jundt, Opt. Lett. 22, 1553 (1997).
# Fitted over 0.4-5 um and 20-250 C.
JUNDT_1997_E = SellmeierSet(
    name="Jundt 1997 (congruent LiNbO3, n_e)",
    reference="D. H. Jundt, Opt. Lett. 22, 1553 (1997)",
    wavelength_range=(0.4, 5.0),
    formula=_jundt_extraordinary,
)

# Congruent LiNbO3, ordinary index. G. J. Edwards and M. Lawrence,
# Opt. Quantum Electron. 16, 373 (1984). Fitted over 0.4-3 um.
EDWARDS_LAWRENCE_1984_O = SellmeierSet(
    name="Edwards-Lawrence 1984 (congruent LiNbO3, n_o)",
    reference="G. J. Edwards and M. Lawrence, Opt. Quantum Electron. 16, 373 (1984)",
    wavelength_range=(0.4, 3.0),
    formula=_edwards_lawrence_ordinary,
)


@dataclass(frozen=True)
class MaterialParams:
    sellmeier_ordinary: SellmeierSet = EDWARDS_LAWRENCE_1984_O
    sellmeier_extraordinary: SellmeierSet = JUNDT_1997_E
    temperature: float = 80.0

    def sellmeier(self, branch: str) -> SellmeierSet:
        branch = resolve_branch(branch)
        return self.sellmeier_ordinary if branch == ORDINARY else self.sellmeier_extraordinary

    def bulk_index(self, wavelength, branch: str):
        return self.sellmeier(branch).index(wavelength, self.temperature)


def bulk_index(wavelength, temperature: float, branch: str, material: MaterialParams | None = None):
    """Bulk LiNbO3 index for one branch ('ordinary'/'extraordinary', or TE/TM)."""
    mat = material or MaterialParams()
    return mat.sellmeier(branch).index(wavelength, temperature)


@dataclass(frozen=True)
class DiffusionGeometry:
    """Ti strip before diffusion: film thickness, diffusion length, strip width (um).

    ``xi_wavelength`` fixes the wavelength at which the dispersion weight of
    the index increase is evaluated, so every field in a device sees the same
    profile. ``None`` evaluates the weight at each field's own wavelength.
    """

    film_thickness: float = 0.1
    diffusion_length: float = 3.0
    strip_width: float = 4.0
    xi_wavelength: float | None = XI_EVALUATION_WAVELENGTH

    def __post_init__(self):
        for name in ("film_thickness", "diffusion_length", "strip_width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.xi_wavelength is not None and not self.xi_wavelength > 0:
            raise ConfigError("xi_wavelength must be positive or None")
        if self.film_thickness > self.diffusion_length / 10:
            warnings.warn(
                "Ti film thickness exceeds a tenth of the diffusion length; "
                "the thin-film diffusion model is questionable",
                stacklevel=2,
            )

    def with_width(self, width: float) -> "DiffusionGeometry":
        return DiffusionGeometry(self.film_thickness, self.diffusion_length, width,
                                 self.xi_wavelength)


def dispersion_weight(wavelength):
    """Weak wavelength factor 0.052 + 0.065/lambda**2 (lambda in um)."""
    lam = np.asarray(wavelength, dtype=float)
    return 0.052 + 0.065 / lam**2


def peak_index_increase(
    geom: DiffusionGeometry,
    branch: str,
    wavelength: float,
    include_dispersion: bool = True,
) -> float:
    """Surface index increase at the strip centre.

    The nominal value 2*delta*rho*erf(w/2D)/(sqrt(pi)*D) is taken to hold at
    0.633 um and is rescaled by xi(lam)/xi(0.633), with lam the geometry's
    ``xi_wavelength`` (or ``wavelength`` when that is None).
    """
    branch = resolve_branch(branch)
    d = geom.diffusion_length
    base = 2.0 * geom.film_thickness * RHO[branch] * math.erf(geom.strip_width / (2.0 * d)) / (
        math.sqrt(math.pi) * d
    )
    if not include_dispersion:
        return base
    lam = wavelength if geom.xi_wavelength is None else geom.xi_wavelength
    return base * float(dispersion_weight(lam) / dispersion_weight(XI_REFERENCE_WAVELENGTH))


def lateral_shape(x, width: float, diffusion_length: float):
    """Normalized lateral Ti distribution g(x); g(0) = 1."""
    x = np.asarray(x, dtype=float)
    d = diffusion_length
    num = erf((x + width / 2) / d) - erf((x - width / 2) / d)
    return num / (2.0 * math.erf(width / (2.0 * d)))


def depth_shape(z, diffusion_length: float):
    """Normalized depth Ti distribution f(z) = exp(-z**2/D**2) for z >= 0."""
    z = np.asarray(z, dtype=float)
    return np.exp(-((z / diffusion_length) ** 2))


@dataclass(frozen=True)
class IndexProfile:
    x_grid: np.ndarray
    z_grid: np.ndarray
    n: np.ndarray  # shape (len(z_grid), len(x_grid))
    polarization: str
    wavelength: float
    n_bulk: float
    delta_n: float


def default_grid(geom: DiffusionGeometry, samples_per_d: int = 40, lateral_margin: float = 5.0,
                 depth_extent: float = 5.0):
    """Lateral window +-(w/2 + 5D), depth window 5D, 40 samples per D.

    The lateral grid always contains x = 0 and is symmetric.
    """
    d = geom.diffusion_length
    h = d / samples_per_d
    half = geom.strip_width / 2 + lateral_margin * d
    nx = int(math.ceil(half / h))
    x = h * np.arange(-nx, nx + 1)
    nz = int(math.ceil(depth_extent * d / h))
    z = h * np.arange(nz + 1)
    return x, z


def build_index_profile(
    geom: DiffusionGeometry,
    mat: MaterialParams,
    wavelength: float,
    polarization: str,
    x_grid=None,
    z_grid=None,
    include_dispersion: bool = True,
) -> IndexProfile:
    """Sample n(x, z) = n_bulk + dn * g(x) * f(z) on the substrate side (z >= 0).

    The cover (z < 0) is air and is not part of the sampled grid.
    """
    if x_grid is None or z_grid is None:
        gx, gz = default_grid(geom)
        x_grid = gx if x_grid is None else x_grid
        z_grid = gz if z_grid is None else z_grid
    x_grid = np.asarray(x_grid, dtype=float)
    z_grid = np.asarray(z_grid, dtype=float)
    if x_grid.ndim != 1 or z_grid.ndim != 1 or len(x_grid) < 3 or len(z_grid) < 3:
        raise ConfigError("index-profile grids must be 1-D with at least 3 points")
    if np.any(np.diff(x_grid) <= 0) or np.any(np.diff(z_grid) <= 0) or z_grid[0] < 0:
        raise ConfigError("index-profile grids must be strictly increasing with z >= 0")
    dz = np.max(np.diff(z_grid))
    if geom.diffusion_length / dz < 20:
        raise ConfigError("grid too coarse: need at least 20 samples per diffusion length")
    branch = resolve_branch(polarization)
    n_b = mat.bulk_index(wavelength, branch)
    dn = peak_index_increase(geom, branch, wavelength, include_dispersion)
    g = lateral_shape(x_grid, geom.strip_width, geom.diffusion_length)
    f = depth_shape(z_grid, geom.diffusion_length)
    n = n_b + dn * np.outer(f, g)
    return IndexProfile(x_grid, z_grid, n, resolve_polarization(polarization), wavelength, n_b, dn)
