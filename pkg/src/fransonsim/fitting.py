"""Two-photon fringe regression and the visibility / Bell statistics built on it.

Model: ``F(phi) = A cos(phi + theta) + y0``, fitted by Levenberg-Marquardt with
an analytic Jacobian. ``V_meas = |A| / y0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

BELL_BOUND = 1.0 / math.sqrt(2.0)
TWO_PI = 2.0 * math.pi


class FitConvergenceError(RuntimeError):
    """The fit did not converge; ``diagnostics`` holds the last state."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class FringeDataset:
    phases: np.ndarray
    counts: np.ndarray
    sigmas: np.ndarray | None = None
    integration_time: float = 0.0

    def __post_init__(self) -> None:
        self.phases = np.asarray(self.phases, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.sigmas is None:
            # Poisson errors, with a floor of one count for empty points
            self.sigmas = np.sqrt(np.maximum(self.counts, 1.0))
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        if not (self.phases.shape == self.counts.shape == self.sigmas.shape) or self.phases.ndim != 1:
            raise ValueError("phases, counts and sigmas must be 1-D arrays of equal length")
        if self.phases.size < 4:
            raise ValueError("a fringe fit needs at least 4 points")
        if np.any(self.sigmas <= 0) or not np.all(np.isfinite(self.sigmas)):
            raise ValueError("sigmas must be positive and finite")
        if np.ptp(self.phases) < math.pi:
            raise ValueError("phases must span at least half a period")

    def __len__(self) -> int:
        return int(self.phases.size)

    def scaled(self, s: float) -> FringeDataset:
        return FringeDataset(self.phases, self.counts * s, self.sigmas * s, self.integration_time)


@dataclass
class FringeFit:
    A: float
    theta: float
    y0: float
    covariance: np.ndarray
    chi2: float
    dof: int
    v_meas: float
    sigma_v: float
    v_corrected: float
    sigma_v_corrected: float
    bell_sigmas: float
    converged: bool
    iterations: int
    weighted: bool = True
    w: float = 0.95
    flags: list[str] = field(default_factory=list)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.A, self.theta, self.y0])

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def to_dict(self) -> dict:
        err = self.errors
        return {
            "A": self.A,
            "sigma_A": float(err[0]),
            "theta": self.theta,
            "sigma_theta": float(err[1]),
            "y0": self.y0,
            "sigma_y0": float(err[2]),
            "covariance": self.covariance.tolist(),
            "chi2": self.chi2,
            "dof": self.dof,
            "v_meas": self.v_meas,
            "sigma_v": self.sigma_v,
            "v_corrected": self.v_corrected,
            "sigma_v_corrected": self.sigma_v_corrected,
            "bell_sigmas": self.bell_sigmas,
            "w": self.w,
            "converged": self.converged,
            "iterations": self.iterations,
            "weighted": self.weighted,
            "flags": list(self.flags),
        }


def fringe_model(phases, A: float, theta: float, y0: float) -> np.ndarray:
    return A * np.cos(np.asarray(phases) + theta) + y0


def _jacobian(phases: np.ndarray, p: np.ndarray) -> np.ndarray:
    arg = phases + p[1]
    return np.column_stack([np.cos(arg), -p[0] * np.sin(arg), np.ones_like(phases)])


def initial_guess(d: FringeDataset) -> np.ndarray:
    """y0 from the mean, A from the half range, theta from the first Fourier coefficient."""
    y0 = float(d.counts.mean())
    A = float(np.ptp(d.counts)) / 2.0
    z = np.sum((d.counts - y0) * np.exp(-1j * d.phases))
    theta = float(np.angle(z)) if abs(z) > 0 else 0.0
    return np.array([A, theta, y0])


def chi_square(d: FringeDataset, params, sigmas=None) -> float:
    s = d.sigmas if sigmas is None else sigmas
    r = (d.counts - fringe_model(d.phases, *params)) / s
    return float(r @ r)


def _levenberg_marquardt(phases, counts, sigmas, p0, max_iter, lambda0):
    p = np.array(p0, dtype=float)
    lam = lambda0

    def resid(q):
        return (counts - fringe_model(phases, *q)) / sigmas

    r = resid(p)
    chi2 = float(r @ r)
    jw = _jacobian(phases, p) / sigmas[:, None]
    if np.linalg.matrix_rank(jw) < 3:
        raise FitConvergenceError(
            "rank-deficient design: the phases do not constrain all three parameters",
            {"params": p.tolist(), "chi2": chi2},
        )
    for it in range(1, max_iter + 1):
        jw = _jacobian(phases, p) / sigmas[:, None]
        h = jw.T @ jw
        g = jw.T @ r
        diag = np.diag(h).copy()
        diag[diag <= 0] = max(float(diag.max()), 1.0) * 1e-12
        while True:
            try:
                step = np.linalg.solve(h + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                if lam > 1e20:
                    raise FitConvergenceError("normal matrix singular", {"params": p.tolist(), "chi2": chi2})
                continue
            trial = p + step
            r_new = resid(trial)
            chi2_new = float(r_new @ r_new)
            if chi2_new <= chi2:
                rel = (chi2 - chi2_new) / max(chi2_new, 1e-300)
                p, r, lam = trial, r_new, lam / 10.0
                chi2 = chi2_new
                if rel < 1e-10 or np.linalg.norm(step) < 1e-12 or chi2 < 1e-28:
                    return p, chi2, it, True
                break
            lam *= 10.0
            if lam > 1e16:
                # no downhill step left at machine precision
                return p, chi2, it, True
    raise FitConvergenceError(
        f"no convergence after {max_iter} iterations",
        {"params": p.tolist(), "chi2": chi2, "lambda": lam},
    )


def _canonical(p: np.ndarray, cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = p.copy()
    cov = cov.copy()
    if p[0] < 0:
        p[0] = -p[0]
        p[1] += math.pi
        flip = np.diag([-1.0, 1.0, 1.0])
        cov = flip @ cov @ flip
    p[1] = p[1] % TWO_PI
    if p[1] >= TWO_PI:
        p[1] = 0.0
    return p, cov


def lm_fit(
    d: FringeDataset,
    initial=None,
    *,
    weighted: bool = True,
    phase_sigma: float = 0.0,
    w: float = 0.95,
    max_iter: int = 200,
    lambda0: float = 1e-3,
) -> FringeFit:
    """Fit ``A cos(phi + theta) + y0`` to a fringe dataset.

    ``weighted=False`` gives every point unit weight and scales the covariance
    by the reduced chi-square. ``phase_sigma`` (rad) folds a phase-setting
    error into the count errors by effective variance, refitting once.
    """
    phases, counts = d.phases, d.counts
    sigmas = d.sigmas if weighted else np.ones_like(counts)
    p0 = initial_guess(d) if initial is None else np.asarray(initial, dtype=float)
    p, chi2, iters, converged = _levenberg_marquardt(phases, counts, sigmas, p0, max_iter, lambda0)
    if phase_sigma > 0:
        sigmas = np.sqrt(sigmas**2 + (p[0] * np.sin(phases + p[1]) * phase_sigma) ** 2)
        p, chi2, more, converged = _levenberg_marquardt(phases, counts, sigmas, p, max_iter, lambda0)
        iters += more

    jw = _jacobian(phases, p) / sigmas[:, None]
    h = jw.T @ jw
    try:
        cov = np.linalg.inv(h)
    except np.linalg.LinAlgError as exc:
        raise FitConvergenceError("singular normal matrix at the solution", {"params": p.tolist()}) from exc
    dof = len(d) - 3
    if not weighted and dof > 0:
        cov = cov * chi2 / dof
    cov = 0.5 * (cov + cov.T)
    p, cov = _canonical(p, cov)

    fit = FringeFit(
        A=float(p[0]),
        theta=float(p[1]),
        y0=float(p[2]),
        covariance=cov,
        chi2=chi2,
        dof=dof,
        v_meas=math.nan,
        sigma_v=math.nan,
        v_corrected=math.nan,
        sigma_v_corrected=math.nan,
        bell_sigmas=math.nan,
        converged=converged,
        iterations=iters,
        weighted=weighted,
        w=w,
    )
    if fit.y0 <= 0:
        fit.flags.append("nonpositive_offset")
        return fit
    fit.v_meas, fit.sigma_v = visibility(fit)
    fit.v_corrected, unphysical = corrected_visibility(fit.v_meas, w, fit.sigma_v, return_flag=True)
    fit.sigma_v_corrected = fit.sigma_v / w
    if unphysical:
        fit.flags.append("corrected_visibility_unphysical")
    if fit.sigma_v > 0:
        fit.bell_sigmas = bell_sigmas(fit.v_meas, fit.sigma_v)
    return fit


def visibility(f: FringeFit) -> tuple[float, float]:
    """``V = |A| / y0`` and its error from the covariance diagonal."""
    if f.y0 <= 0:
        raise ValueError(f"visibility undefined for y0 = {f.y0} <= 0")
    sig_a, _, sig_y0 = f.errors
    v = abs(f.A) / f.y0
    # V sqrt((sA/A)^2 + (sy0/y0)^2), written to stay finite at A = 0
    sigma = math.hypot(sig_a / f.y0, v * sig_y0 / f.y0)
    return v, sigma


def visibility_from_snr(snr: float, w: float = 0.95, return_flag: bool = False):
    """Fringe visibility expected from a peak-to-accidentals ratio."""
    if snr < 0:
        raise ValueError("snr must be >= 0")
    if math.isinf(snr):
        v, clipped = w, False
    else:
        v = w * (snr - 1.0) / (snr + 1.0)
        clipped = v < 0
        v = max(v, 0.0)
    return (v, clipped) if return_flag else v


def corrected_visibility(v_meas: float, w: float = 0.95, sigma_v: float | None = None, return_flag: bool = False):
    """Visibility corrected for the first-order interferometer contrast ``w``.

    The flag marks results above 1 by more than three (corrected) sigmas.
    """
    if not 0.0 < w <= 1.0:
        raise ValueError(f"w must be in (0, 1], got {w}")
    v = v_meas / w
    s = 0.0 if sigma_v is None else sigma_v / w
    unphysical = v > 1.0 + 3.0 * s
    if unphysical:
        log.warning("corrected visibility %.4f exceeds 1 by more than 3 sigma", v)
    return (v, unphysical) if return_flag else v


def bell_sigmas(v_meas: float, sigma_v: float) -> float:
    """Standard deviations by which ``v_meas`` exceeds ``1/sqrt(2)``."""
    if sigma_v <= 0:
        raise ValueError("sigma_v must be positive")
    return (v_meas - BELL_BOUND) / sigma_v
