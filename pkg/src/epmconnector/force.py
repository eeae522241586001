"""
Holding force of a mated EPM pair as a function of the air gap, and its calibration against force-gap data.

The pole area is split into two flux tubes, one over each rod. Each rod is a Thevenin source: MMF
``coercivity * length`` behind its internal reluctance, expressed as an equivalent extra gap. The tube flux
density follows the gap law at ``gap + residual_gap + internal_gap`` and is converted to force with the
Maxwell stress on two pole faces. Part of the NdFeB flux closes through the end caps instead of the
parting plane; that part is ``leakage_fraction``.

The AlNiCo tube has a small internal gap, so it dominates at contact and decays quickly; the NdFeB tube has a
large one and carries the long-range tail.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt
from scipy.optimize import least_squares

from .magnetics import END_CAP_AREA, MU0, EPMAssembly, Polarization, gap_flux_density

_logger = logging.getLogger(__name__)

INITIAL_LEAKAGE = 0.3
INITIAL_RESIDUAL_GAP = 0.05e-3
MAX_ITERATIONS = 200


class CalibrationError(RuntimeError):
    pass


class UnderdeterminedFitError(CalibrationError, ValueError):
    pass


class ConvergenceError(CalibrationError):
    def __init__(self, message: str, best: ForceFit) -> None:
        super().__init__(message)
        self.best = best


@dataclasses.dataclass(frozen=True)
class ForceCalibration:
    leakage_fraction: float
    residual_gap: float  # [m]
    effective_area: float = END_CAP_AREA  # [m^2]
    off_force: float = 0.0
    """Force reported when the EPM is switched off [N]."""

    def __post_init__(self) -> None:
        if not 0 <= self.leakage_fraction < 1:
            raise ValueError(f"leakage_fraction invalid: {self.leakage_fraction}")
        if self.residual_gap < 0:
            raise ValueError(f"residual_gap invalid: {self.residual_gap}")
        if not self.effective_area > 0:
            raise ValueError(f"effective_area invalid: {self.effective_area}")
        if self.off_force < 0:
            raise ValueError(f"off_force invalid: {self.off_force}")


@dataclasses.dataclass(frozen=True)
class ForceMeasurement:
    gap: float  # [m]
    force: float  # [N]

    def __post_init__(self) -> None:
        if self.gap < 0 or self.force < 0:
            raise ValueError(f"invalid measurement: gap={self.gap}, force={self.force}")


@dataclasses.dataclass(frozen=True)
class ForceFit:
    calibration: ForceCalibration
    rmse: float  # [N]
    iterations: int

    def as_dict(self) -> dict[str, float | int]:
        return {
            "leakage_fraction": self.calibration.leakage_fraction,
            "residual_gap_m": self.calibration.residual_gap,
            "effective_area_m2": self.calibration.effective_area,
            "rmse_N": self.rmse,
            "iterations": self.iterations,
        }


def holding_force(b_gap: float | npt.ArrayLike, area: float) -> float | npt.NDArray[np.float64]:
    """Maxwell stress B^2/(2 mu0) over ``area`` on each of the two pole faces."""
    b = np.asarray(b_gap, dtype=float)
    if np.any(b < 0):
        raise ValueError("b_gap must be nonnegative")
    f = 2.0 * b**2 * area / (2.0 * MU0)
    return float(f) if f.ndim == 0 else f


def _tube_areas(assembly: EPMAssembly, area: float) -> tuple[float, float]:
    s_al = assembly.alnico.cross_section
    s_nd = assembly.ndfeb.cross_section
    return area * s_al / (s_al + s_nd), area * s_nd / (s_al + s_nd)


def _on_force(
    assembly: EPMAssembly, gap: npt.NDArray[np.float64], leakage: float, residual_gap: float, area: float
) -> npt.NDArray[np.float64]:
    a_al, a_nd = _tube_areas(assembly, area)
    out = np.zeros_like(gap)
    for seg, a, keep in ((assembly.alnico, a_al, 1.0), (assembly.ndfeb, a_nd, 1.0 - leakage)):
        b = gap_flux_density(seg.source_mmf, gap + residual_gap + seg.internal_gap(a), assembly.b_sat)
        out += holding_force(keep * np.asarray(b), a)
    return out


def predict_force(assembly: EPMAssembly, gap: float | npt.ArrayLike, calib: ForceCalibration) -> float | npt.NDArray:
    """Holding force [N] at nominal ``gap`` [m]; vectorized over ``gap``."""
    g = np.asarray(gap, dtype=float)
    if np.any(g < 0):
        raise ValueError("gap must be nonnegative")
    if assembly.state is Polarization.OPPOSED:
        f = np.full_like(g, calib.off_force)
    else:
        f = _on_force(assembly, np.atleast_1d(g), calib.leakage_fraction, calib.residual_gap, calib.effective_area)
        f = f.reshape(g.shape)
    return float(f) if f.ndim == 0 else f


class ForceModel:
    """Callable gap [m] -> force [N] bound to an assembly and a calibration."""

    def __init__(self, assembly: EPMAssembly, calibration: ForceCalibration) -> None:
        self.assembly = assembly
        self.calibration = calibration

    def __call__(self, gap: float) -> float:
        return float(predict_force(self.assembly, gap, self.calibration))

    def __repr__(self) -> str:
        return f"ForceModel({self.calibration!r})"


def force_gap_curve(
    assembly: EPMAssembly, gaps: Sequence[float], calib: ForceCalibration
) -> list[tuple[float, float]]:
    g = np.asarray(list(gaps), dtype=float)
    if g.size == 0:
        return []
    if np.any(np.diff(g) < 0):
        raise ValueError("gaps must be sorted ascending")
    f = np.atleast_1d(predict_force(assembly, g, calib))
    return list(zip(g.tolist(), f.tolist()))


def calibrate_force_model(
    data: Iterable[ForceMeasurement],
    assembly: EPMAssembly,
    *,
    effective_area: float = END_CAP_AREA,
    max_iterations: int = MAX_ITERATIONS,
) -> ForceFit:
    """
    Least-squares fit of (leakage_fraction, residual_gap) to measured forces.

    Bounded trust-region Gauss-Newton from a fixed start, so repeated fits are identical. The residual gap is
    fitted in millimeters to keep the two parameters on comparable scales.
    """
    data = list(data)
    gaps = np.array([m.gap for m in data], dtype=float)
    forces = np.array([m.force for m in data], dtype=float)
    if len(data) < 3 or np.unique(gaps).size < 3:
        raise UnderdeterminedFitError(f"need at least 3 distinct gaps, got {np.unique(gaps).size}")
    on = assembly.with_state(Polarization.ALIGNED)

    def residuals(p: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        return _on_force(on, gaps, p[0], p[1] * 1e-3, effective_area) - forces

    res = least_squares(
        residuals,
        x0=[INITIAL_LEAKAGE, INITIAL_RESIDUAL_GAP * 1e3],
        bounds=([0.0, 0.0], [1.0 - 1e-9, np.inf]),
        method="trf",
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=max_iterations,
    )
    calib = ForceCalibration(float(res.x[0]), float(res.x[1]) * 1e-3, effective_area)
    fit = ForceFit(calib, float(np.sqrt(np.mean(res.fun**2))), int(res.nfev))
    if res.status <= 0:
        raise ConvergenceError(f"force fit did not converge after {res.nfev} evaluations: {res.message}", fit)
    _logger.info("force fit: %s", fit)
    return fit
