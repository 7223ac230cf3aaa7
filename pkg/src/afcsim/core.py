"""Frequency grid, material parameters, ensemble state and absorption spectra.

The simulation discretises a window of the (much broader) inhomogeneous
erbium line into uniform frequency bins.  Each bin carries an optical-depth
weight ``G`` (the OD the bin would contribute with its whole population in
the active ground sub-level) and four population fractions:

* ``n_g``  active electronic-Zeeman ground sub-level (the one being pumped),
* ``n_z``  the other Zeeman sub-level (long-lived shelf),
* ``n_h``  superhyperfine shelf (short-lived reservoir),
* ``n_e``  optically excited level.

Absorption spectra are assembled by convolving the per-bin populations with
the appropriate line-shape kernels: a homogeneous Lorentzian for ``n_g``, a
broad Gaussian smear for ``n_h`` and a Gaussian anti-hole kernel displaced
by the Zeeman splitting for ``n_z``.  Excited population does not absorb at
readout (spectra are read after the excited level has decayed).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np
from scipy.constants import physical_constants
from scipy.signal import fftconvolve

from .errors import (
    InvalidRange,
    NegativeField,
    NonPositiveInput,
    NonPositiveTemperature,
    TooManyBins,
)

MU_B = physical_constants["Bohr magneton"][0]      # J/T
K_B = physical_constants["Boltzmann constant"][0]  # J/K
PLANCK_H = physical_constants["Planck constant"][0]  # J s

MAX_BINS = 10_000_000

#: tolerance for per-bin population-class conservation
CONSERVATION_ATOL = 1e-9


# ---------------------------------------------------------------------------
# Frequency grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of detunings (Hz, relative to line centre).

    Bin ``i`` is centred at ``nu_min + (i + 1/2) * bin_width``.
    """

    nu_min: float
    nu_max: float
    bin_width: float
    n_bins: int

    def __post_init__(self):
        if not (self.nu_min < self.nu_max):
            raise InvalidRange(f"empty range [{self.nu_min}, {self.nu_max}]")
        if self.bin_width <= 0:
            raise InvalidRange(f"bin_width must be > 0, got {self.bin_width}")
        if self.n_bins < 2:
            raise InvalidRange(f"grid needs at least 2 bins, got {self.n_bins}")
        if self.n_bins > MAX_BINS:
            raise TooManyBins(f"{self.n_bins} bins exceeds limit {MAX_BINS}")

    @property
    def centers(self) -> np.ndarray:
        """Bin-centre detunings, shape ``(n_bins,)``."""
        return self.nu_min + (np.arange(self.n_bins) + 0.5) * self.bin_width

    @property
    def span(self) -> float:
        return self.n_bins * self.bin_width

    def contains(self, lo: float, hi: float) -> bool:
        eps = 1e-6 * self.bin_width
        return (lo >= self.nu_min - eps) and (hi <= self.nu_min + self.span + eps)

    def index_of(self, nu: float) -> int:
        """Index of the bin containing detuning ``nu``."""
        i = int(np.floor((nu - self.nu_min) / self.bin_width))
        return min(max(i, 0), self.n_bins - 1)

    def subgrid(self, lo: float, hi: float) -> tuple["FrequencyGrid", slice]:
        """Aligned sub-grid covering ``[lo, hi]`` and the index slice into self."""
        i0 = int(np.floor((lo - self.nu_min) / self.bin_width + 1e-9))
        i1 = int(np.ceil((hi - self.nu_min) / self.bin_width - 1e-9))
        i0 = max(i0, 0)
        i1 = min(i1, self.n_bins)
        sub = FrequencyGrid(
            nu_min=self.nu_min + i0 * self.bin_width,
            nu_max=self.nu_min + i1 * self.bin_width,
            bin_width=self.bin_width,
            n_bins=i1 - i0,
        )
        return sub, slice(i0, i1)


def make_grid(nu_min: float, nu_max: float, bin_width: float) -> FrequencyGrid:
    """Build a uniform detuning grid.

    Parameters
    ----------
    nu_min, nu_max : float
        Window edges in Hz (detuning relative to line centre).
    bin_width : float
        Bin width in Hz.

    Raises
    ------
    InvalidRange
        If the window is empty or the bin width not positive.
    TooManyBins
        If more than ``MAX_BINS`` bins would be needed.
    """
    if not (nu_min < nu_max):
        raise InvalidRange(f"nu_min={nu_min} must be below nu_max={nu_max}")
    if bin_width <= 0:
        raise InvalidRange(f"bin_width must be > 0, got {bin_width}")
    n = int(round((nu_max - nu_min) / bin_width))
    if n > MAX_BINS:
        raise TooManyBins(f"{n} bins exceeds limit {MAX_BINS}")
    return FrequencyGrid(nu_min=nu_min, nu_max=nu_max, bin_width=bin_width, n_bins=n)


# ---------------------------------------------------------------------------
# Material parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaterialParams:
    """Static material and environment parameters (SI units).

    Attributes
    ----------
    g_factor : float
        Effective electronic g-factor of the ground doublet.
    t1_opt : float
        Population lifetime of the optically excited level (s).
    t_short : float
        Lifetime of the superhyperfine shelf (s).
    alpha_ff : float
        Scaling coefficient of the spin flip-flop rate model (s^-2).
    gamma_spin_static : float
        Static spin inhomogeneous broadening (Hz).
    gamma_spin_slope : float
        Field-dependent spin inhomogeneous broadening (Hz/T).
    gamma_h_fwhm : float
        Homogeneous optical linewidth FWHM (Hz).  Not resolved
        experimentally; any value well below the pit width reproduces the
        observed hole shapes.  The default is kept small enough that the
        Lorentzian pump wings of saturated comb pits do not erode the teeth
        between them.
    shf_fwhm : float
        FWHM of the Gaussian absorption smear of the superhyperfine shelf (Hz).
    beta_zeeman, beta_shf : float
        Branching fractions of an excited-state decay into the Zeeman and
        superhyperfine shelves.  The remainder returns to the pumped level.
    peak_od : float
        Optical depth of the unburned line at full ground population.
    er_density : float
        Erbium number density (cm^-3).
    c_isd : float
        Instantaneous-spectral-diffusion coefficient (Hz cm^3 per excited ion).
    temperature : float
        Sample temperature (K).
    b_field : float
        Applied magnetic field (T).
    pump_xsec : float
        Pump-rate coefficient: peak stimulated rate R = pump_xsec * (power /
        width) for a spectral feature, i.e. s^-1 per W/Hz of power spectral
        density.  Absolute pump power at the waveguide is not known, so this
        single scale is calibrated so that a 25 MHz pit at reference power
        burns a hole of comparable width without excessive power broadening.
    """

    g_factor: float = 15.13
    t1_opt: float = 2.1e-3
    t_short: float = 0.06
    alpha_ff: float = 1e9
    gamma_spin_static: float = 0.4e9
    gamma_spin_slope: float = 14.5e9
    gamma_h_fwhm: float = 1e5
    shf_fwhm: float = 50e6
    beta_zeeman: float = 0.4
    beta_shf: float = 0.1
    peak_od: float = 2.0
    er_density: float = 3.6e19
    c_isd: float = 2e-13
    temperature: float = 0.7
    b_field: float = 0.3
    pump_xsec: float = 6.0e14

    def __post_init__(self):
        for name in ("t1_opt", "t_short", "alpha_ff", "gamma_h_fwhm",
                     "shf_fwhm", "peak_od", "pump_xsec"):
            if getattr(self, name) <= 0:
                raise NonPositiveInput(f"{name} must be > 0")
        if self.gamma_spin_static < 0 or self.gamma_spin_slope < 0:
            raise NonPositiveInput("spin broadening terms must be >= 0")
        if self.temperature <= 0:
            raise NonPositiveTemperature(f"temperature={self.temperature}")
        if self.b_field < 0:
            raise NegativeField(f"b_field={self.b_field}")
        if self.beta_zeeman < 0 or self.beta_shf < 0 \
                or self.beta_zeeman + self.beta_shf > 1:
            raise NonPositiveInput(
                "branching fractions must satisfy 0 <= beta_zeeman + beta_shf <= 1")
        if self.er_density < 0 or self.c_isd < 0:
            raise NonPositiveInput("er_density and c_isd must be >= 0")

    def with_(self, **kwargs) -> "MaterialParams":
        """Copy with selected fields replaced."""
        return replace(self, **kwargs)


# ---------------------------------------------------------------------------
# Closed-form level-structure quantities
# ---------------------------------------------------------------------------

def zeeman_splitting(b_field: float, g_factor: float) -> float:
    """Electronic Zeeman splitting g * mu_B * B / h in Hz."""
    if np.any(np.asarray(b_field) < 0):
        raise NegativeField(f"b_field={b_field}")
    return g_factor * MU_B * b_field / PLANCK_H


def spin_inhom_width(b_field: float, gamma_static: float, gamma_slope: float) -> float:
    """Spin inhomogeneous broadening: static term plus linear field term (Hz)."""
    if np.any(np.asarray(b_field) < 0):
        raise NegativeField(f"b_field={b_field}")
    if gamma_static < 0 or gamma_slope < 0:
        raise NonPositiveInput("broadening terms must be >= 0")
    return gamma_static + gamma_slope * b_field


def boltzmann_polarization(b_field: float, temperature: float, g_factor: float) -> float:
    """Thermal spin polarisation tanh(g mu_B B / (2 k_B T)).

    Equilibrium populations of the two Zeeman sub-levels are ``(1 + p) / 2``
    (lower) and ``(1 - p) / 2`` (upper).
    """
    if temperature <= 0:
        raise NonPositiveTemperature(f"temperature={temperature}")
    if np.any(np.asarray(b_field) < 0):
        raise NegativeField(f"b_field={b_field}")
    return np.tanh(g_factor * MU_B * b_field / (2.0 * K_B * temperature))


# ---------------------------------------------------------------------------
# Ensemble state
# ---------------------------------------------------------------------------

ProfileLike = Union[str, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass
class EnsembleState:
    """Per-bin populations of the four levels over the simulated window.

    ``weight`` is the optical-depth weight G per bin; populations are
    fractions of each bin's ion class and satisfy
    ``n_g + n_z + n_h + n_e == 1`` per bin.
    """

    grid: FrequencyGrid
    weight: np.ndarray
    n_g: np.ndarray
    n_z: np.ndarray
    n_h: np.ndarray
    n_e: np.ndarray

    def __post_init__(self):
        n = self.grid.n_bins
        for name in ("weight", "n_g", "n_z", "n_h", "n_e"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise InvalidRange(f"{name} must have shape ({n},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        self.validate()

    def validate(self, atol: float = CONSERVATION_ATOL) -> None:
        """Check class conservation, population ranges and weight positivity."""
        if np.any(self.weight < 0):
            raise NonPositiveInput("weight must be >= 0 everywhere")
        pops = (self.n_g, self.n_z, self.n_h, self.n_e)
        for arr in pops:
            if not np.all(np.isfinite(arr)):
                raise NonPositiveInput("populations must be finite")
            if np.any(arr < -atol) or np.any(arr > 1 + atol):
                raise NonPositiveInput("populations must lie in [0, 1]")
        total = self.n_g + self.n_z + self.n_h + self.n_e
        if np.max(np.abs(total - 1.0)) > atol:
            raise NonPositiveInput(
                f"class conservation violated by {np.max(np.abs(total - 1.0)):.3e}")

    def copy(self) -> "EnsembleState":
        return EnsembleState(
            grid=self.grid,
            weight=self.weight.copy(),
            n_g=self.n_g.copy(),
            n_z=self.n_z.copy(),
            n_h=self.n_h.copy(),
            n_e=self.n_e.copy(),
        )


def init_equilibrium_state(grid: FrequencyGrid, params: MaterialParams,
                           profile: ProfileLike = "flat") -> EnsembleState:
    """Thermal-equilibrium state before any burning.

    The inhomogeneous profile is flat by default (the simulated window is
    small compared with the full line).  A per-bin array or a callable of the
    bin centres can be supplied instead; it is rescaled so that its peak
    optical depth equals ``params.peak_od``.
    """
    n = grid.n_bins
    if isinstance(profile, str):
        if profile != "flat":
            raise NonPositiveInput(f"unknown profile {profile!r}")
        weight = np.full(n, params.peak_od, dtype=float)
    elif callable(profile):
        weight = np.asarray(profile(grid.centers), dtype=float)
    else:
        weight = np.asarray(profile, dtype=float).copy()
    if weight.shape != (n,):
        raise InvalidRange(f"profile must produce {n} values")
    if np.any(weight < 0) or not np.all(np.isfinite(weight)):
        raise NonPositiveInput("profile weights must be finite and >= 0")
    peak = weight.max()
    if peak > 0 and not isinstance(profile, str):
        weight *= params.peak_od / peak

    p = boltzmann_polarization(params.b_field, params.temperature, params.g_factor)
    n_g = np.full(n, (1.0 + p) / 2.0)
    n_z = np.full(n, (1.0 - p) / 2.0)
    zeros = np.zeros(n)
    return EnsembleState(grid=grid, weight=weight, n_g=n_g, n_z=n_z,
                         n_h=zeros.copy(), n_e=zeros.copy())


# ---------------------------------------------------------------------------
# Absorption spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbsorptionSpectrum:
    """Optical depth versus detuning on a frequency grid."""

    grid: FrequencyGrid
    od: np.ndarray

    def __post_init__(self):
        od = np.asarray(self.od, dtype=float)
        if od.shape != (self.grid.n_bins,):
            raise InvalidRange(
                f"od must have shape ({self.grid.n_bins},), got {od.shape}")
        if not np.all(np.isfinite(od)):
            raise NonPositiveInput("optical depth must be finite")
        if np.any(od < 0):
            raise NonPositiveInput("optical depth must be >= 0")
        object.__setattr__(self, "od", od)

    def to_csv(self) -> str:
        """CSV text with header ``detuning_hz,od`` (LF line endings)."""
        lines = ["detuning_hz,od"]
        for nu, od in zip(self.grid.centers, self.od):
            lines.append(f"{nu:.6f},{od:.12g}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())


def _convolve_padded(values: np.ndarray, kernel: np.ndarray, pad_mode: str) -> np.ndarray:
    """Convolve with an odd-length centred kernel, padding the signal so every
    output bin sees full kernel support."""
    half = kernel.size // 2
    padded = np.pad(values, half, mode=pad_mode)
    out = fftconvolve(padded, kernel, mode="same")
    return out[half:half + values.size]


def _lorentzian_kernel(n: int, bin_width: float, fwhm: float) -> np.ndarray:
    """Discrete unit-sum Lorentzian kernel over all grid offsets."""
    offsets = np.arange(-(n - 1), n) * bin_width
    half = fwhm / 2.0
    kern = half / (offsets ** 2 + half ** 2)
    return kern / kern.sum()


def _gaussian_kernel(n: int, bin_width: float, fwhm: float) -> np.ndarray:
    """Discrete unit-sum Gaussian kernel over all grid offsets."""
    offsets = np.arange(-(n - 1), n) * bin_width
    sigma = fwhm / np.sqrt(8.0 * np.log(2.0))
    kern = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kern / kern.sum()


def _antihole_kernel(n: int, bin_width: float, fwhm: float, shift: float) -> np.ndarray:
    """Gaussian kernel displaced by ``shift``; analytically normalised so that
    total displaced absorption is conserved whether or not it lands in-window."""
    offsets = np.arange(-(n - 1), n) * bin_width
    sigma = max(fwhm, bin_width) / np.sqrt(8.0 * np.log(2.0))
    arg = (offsets - shift) / sigma
    small = np.abs(arg) < 40.0  # avoid exp underflow work
    kern = np.zeros_like(offsets)
    kern[small] = np.exp(-0.5 * arg[small] ** 2)
    return kern * (bin_width / (sigma * np.sqrt(2.0 * np.pi)))


def absorption_spectrum(state: EnsembleState, params: MaterialParams) -> AbsorptionSpectrum:
    """Optical depth of the current state.

    The active ground population absorbs at its own bin, broadened by the
    homogeneous Lorentzian.  Population in the superhyperfine shelf absorbs
    as a broad Gaussian smear around its bin.  Population in the other Zeeman
    sub-level absorbs displaced by the Zeeman splitting with a Gaussian
    spread given by the spin inhomogeneous broadening; only population inside
    the simulated window contributes, so absorption displaced beyond the
    window simply leaves it.  Excited population does not absorb.
    """
    grid = state.grid
    n = grid.n_bins
    dn = grid.bin_width

    od = _convolve_padded(state.weight * state.n_g,
                          _lorentzian_kernel(n, dn, params.gamma_h_fwhm), "edge")

    if np.any(state.n_h > 0):
        od = od + _convolve_padded(state.weight * state.n_h,
                                   _gaussian_kernel(n, dn, params.shf_fwhm), "edge")

    if np.any(state.n_z > 0):
        shift = zeeman_splitting(params.b_field, params.g_factor)
        width = spin_inhom_width(params.b_field, params.gamma_spin_static,
                                 params.gamma_spin_slope)
        sigma = max(width, dn) / np.sqrt(8.0 * np.log(2.0))
        # skip when the displaced kernel cannot reach the window at all
        if shift - 8.0 * sigma < grid.span:
            kern = _antihole_kernel(n, dn, width, shift)
            if kern.max() > 0:
                od = od + _convolve_padded(state.weight * state.n_z, kern, "constant")

    np.maximum(od, 0.0, out=od)
    return AbsorptionSpectrum(grid=grid, od=od)
