"""Fixed-entanglement interplay between nonlocality and incompatibility.

Maximizes S_alpha over Bell-diagonal states of fixed entanglement with
Alice's settings pinned to sigma_z, sigma_x and Bob's pair
cos(theta) sigma_z +/- sin(theta) sigma_x; the angle theta in [0, pi/4]
tunes Bob's incompatibility sin^2(theta).  Sign-optimal outcome
relabeling is applied throughout, so the reported value is
2 alpha cos(theta) |T_zz| + 2 sin(theta) |T_xx| at the optimal weights.
"""

from __future__ import annotations

import io
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares, linprog, minimize

from .qstate import validate_weights

__all__ = [
    "InterplayPoint",
    "CalibrationFit",
    "InfeasibleConstraintError",
    "DegenerateFitError",
    "max_s_fixed_concurrence",
    "max_s_fixed_ode",
    "trajectory",
    "trajectory_to_csv",
    "fixed_state_curve",
    "fit_calibration_shifts",
]

# Correlation-tensor rows in terms of Bell weights (Psi+, Psi-, Phi+, Phi-).
_TX = np.array([1.0, -1.0, 1.0, -1.0])
_TZ = np.array([-1.0, -1.0, 1.0, 1.0])

#: Sign patterns (sz, sx) applied to (T_zz, T_xx); each corresponds to a
#: deterministic local outcome relabeling, enumerated in fixed order.
_SIGN_PATTERNS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


class InfeasibleConstraintError(ValueError):
    """The entanglement constraint cannot be met by any Bell-diagonal state."""


class DegenerateFitError(ValueError):
    """Calibration fit attempted against a (near-)flat model curve."""


@dataclass
class InterplayPoint:
    theta: float            # Bob's half-angle, radians in [0, pi/4]
    incompatibility: float  # sin^2(theta)
    s_alpha: float
    weights: np.ndarray     # Bell-diagonal weights achieving s_alpha

    def __post_init__(self):
        self.weights = validate_weights(self.weights, atol=1e-9)


@dataclass
class CalibrationFit:
    angle_offset: float  # radians
    visibility: float
    residual: float      # RMS of the fitted residuals


def _check_theta(theta: float):
    if not -1e-12 <= theta <= np.pi / 4 + 1e-12:
        raise ValueError(f"theta = {theta} outside [0, pi/4]")


def _objective_coeffs(theta: float, alpha: float, sz: int, sx: int) -> np.ndarray:
    """Linear coefficients of S = 2a cos(t) sz*T_zz + 2 sin(t) sx*T_xx in weights."""
    return 2.0 * alpha * np.cos(theta) * sz * _TZ + 2.0 * np.sin(theta) * sx * _TX


def _point(theta, alpha, s_value, weights) -> InterplayPoint:
    return InterplayPoint(theta=float(theta), incompatibility=float(np.sin(theta) ** 2),
                          s_alpha=float(s_value), weights=np.asarray(weights))


def max_s_fixed_concurrence(concurrence: float, theta: float,
                            alpha: float = 1.0) -> InterplayPoint:
    """Maximal S_alpha over Bell-diagonal states with the given concurrence.

    The constraint fixes lambda_max = (1 + C)/2; for each choice of the
    dominant Bell component and each relabeling sign pattern the problem
    is a linear program over the weight simplex.  Ties break on the
    lowest pattern index, so the output is deterministic.
    """
    if not 0.0 <= concurrence <= 1.0:
        raise InfeasibleConstraintError(f"concurrence {concurrence} outside [0, 1]")
    _check_theta(theta)
    lam_max = (1.0 + concurrence) / 2.0

    best_val, best_w = -np.inf, None
    for sz, sx in _SIGN_PATTERNS:
        c = _objective_coeffs(theta, alpha, sz, sx)
        for j in range(4):
            # max c.w  s.t.  sum w = 1, w_j = lam_max, 0 <= w_i <= lam_max
            a_eq = np.vstack([np.ones(4), np.eye(4)[j]])
            b_eq = np.array([1.0, lam_max])
            res = linprog(-c, A_eq=a_eq, b_eq=b_eq,
                          bounds=[(0.0, lam_max)] * 4, method="highs")
            if res.status == 0 and -res.fun > best_val + 1e-12:
                best_val, best_w = -res.fun, res.x
    return _point(theta, alpha, best_val, best_w)


def _entropy_bits(w: np.ndarray) -> float:
    nz = w[w > 1e-300]
    return float(-np.sum(nz * np.log2(nz)))


def _simplex_grid(step: float) -> np.ndarray:
    """All weight vectors on the 3-simplex with the given grid step."""
    n = int(round(1.0 / step))
    pts = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            k = np.arange(n + 1 - i - j)
            block = np.empty((len(k), 4))
            block[:, 0] = i / n
            block[:, 1] = j / n
            block[:, 2] = k / n
            block[:, 3] = 1.0 - block[:, :3].sum(axis=1)
            pts.append(block)
    return np.vstack(pts)


_GRID_CACHE: dict[float, np.ndarray] = {}


def max_s_fixed_ode(ode: float, theta: float, alpha: float = 1.0,
                    constraint_tol: float = 1e-6) -> InterplayPoint:
    """Maximal S_alpha over Bell-diagonal states with one-way distillable
    entanglement 1 - H(lambda) equal to ode.

    Two-phase search: a coarse simplex grid (step 0.01) locates candidate
    regions near the entropy level set, then SLSQP refines each candidate
    under the equality constraint to within constraint_tol on the weights.
    """
    if not -1.0 < ode <= 1.0:
        raise InfeasibleConstraintError(f"ODE value {ode} outside (-1, 1]")
    _check_theta(theta)

    if ode > 1.0 - 1e-9:
        # Pure Bell state is the only feasible point; Psi+ by convention.
        w = np.array([1.0, 0.0, 0.0, 0.0])
        val = 2.0 * alpha * np.cos(theta) + 2.0 * np.sin(theta)
        return _point(theta, alpha, val, w)

    h_target = 1.0 - ode
    if 0.01 not in _GRID_CACHE:
        _GRID_CACHE[0.01] = _simplex_grid(0.01)
    grid = _GRID_CACHE[0.01]
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(grid > 0, np.log2(np.where(grid > 0, grid, 1.0)), 0.0)
    h = -(grid * logs).sum(axis=1)

    band = 0.02
    near = np.abs(h - h_target) <= band
    while not near.any():
        band *= 2.0
        near = np.abs(h - h_target) <= band
        if band > 2.0:
            raise InfeasibleConstraintError(f"no Bell mixture has 1 - H = {ode}")
    cand = grid[near]

    tz = cand @ _TZ
    tx = cand @ _TX
    obj = 2.0 * alpha * np.cos(theta) * np.abs(tz) + 2.0 * np.sin(theta) * np.abs(tx)
    starts = cand[np.argsort(obj)[::-1][:12]]

    best_val, best_w = -np.inf, None
    for w0 in starts:
        sz = 1 if w0 @ _TZ >= 0 else -1
        sx = 1 if w0 @ _TX >= 0 else -1
        c = _objective_coeffs(theta, alpha, sz, sx)
        # Interior start keeps the entropy gradient finite.
        w0 = np.clip(w0, 1e-4, None)
        w0 = w0 / w0.sum()
        with warnings.catch_warnings():
            # SLSQP warns when a trial step leaves the box and is clipped;
            # harmless here since the simplex constraints are enforced.
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                lambda w: -(c @ w), w0, method="SLSQP",
                bounds=[(1e-12, 1.0)] * 4,
                constraints=[
                    {"type": "eq", "fun": lambda w: w.sum() - 1.0},
                    {"type": "eq", "fun": lambda w: _entropy_bits(np.clip(w, 1e-300, 1.0)) - h_target},
                ],
                options={"ftol": 1e-12, "maxiter": 500},
            )
        if not res.success:
            continue
        w = np.clip(res.x, 0.0, 1.0)
        w = w / w.sum()
        if abs(_entropy_bits(w) - h_target) > constraint_tol:
            continue
        val = 2.0 * alpha * np.cos(theta) * abs(w @ _TZ) + 2.0 * np.sin(theta) * abs(w @ _TX)
        if val > best_val + 1e-12:
            best_val, best_w = val, w
    if best_w is None:
        raise InfeasibleConstraintError(
            f"constrained search failed for ODE = {ode} at theta = {theta}"
        )
    return _point(theta, alpha, best_val, best_w)


def trajectory(measure: str, level: float, alpha: float, theta_grid,
               threads: int | None = None) -> list[InterplayPoint]:
    """Per-theta maxima along a sorted grid in [0, pi/4].

    measure is 'concurrence' or 'ode'; level is the fixed entanglement
    value.  Points are independent, so they may be computed concurrently
    (threads defaults to the BELLKIT_THREADS environment variable);
    results always merge in grid order.
    """
    solvers = {"concurrence": max_s_fixed_concurrence, "ode": max_s_fixed_ode}
    if measure not in solvers:
        raise ValueError(f"measure must be one of {sorted(solvers)}, got {measure!r}")
    grid = np.asarray(theta_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("theta grid must be sorted")
    solve = solvers[measure]
    if threads is None:
        threads = int(os.environ.get("BELLKIT_THREADS", "1"))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda t: solve(level, t, alpha), grid))
    return [solve(level, t, alpha) for t in grid]


def fixed_state_curve(weights, alpha: float, theta_grid) -> np.ndarray:
    """Sign-optimal S_alpha of one fixed Bell-diagonal state along a grid."""
    w = validate_weights(weights)
    grid = np.asarray(theta_grid, dtype=float)
    return (2.0 * alpha * np.cos(grid) * abs(w @ _TZ)
            + 2.0 * np.sin(grid) * abs(w @ _TX))


def trajectory_to_csv(points: list[InterplayPoint]) -> str:
    buf = io.StringIO()
    buf.write("theta_rad,incompat,s_alpha,l1,l2,l3,l4\n")
    for p in points:
        w = p.weights
        buf.write(f"{p.theta:.12g},{p.incompatibility:.12g},{p.s_alpha:.12g},"
                  f"{w[0]:.12g},{w[1]:.12g},{w[2]:.12g},{w[3]:.12g}\n")
    return buf.getvalue()


def fit_calibration_shifts(observed, model: list[InterplayPoint]) -> CalibrationFit:
    """Least-squares fit S_obs(theta) ~ v * S_model(theta + d_theta).

    observed is a sequence of (theta, S) pairs; the model trajectory is
    interpolated with a cubic spline.  A white-noise admixture scales
    every correlator, hence the whole curve, by the visibility v; angle
    miscalibration shifts the abscissa by d_theta.
    """
    obs = np.asarray(list(observed), dtype=float)
    if obs.ndim != 2 or obs.shape[1] != 2 or obs.shape[0] < 3:
        raise ValueError("need at least 3 (theta, S) observation pairs")
    thetas = np.array([p.theta for p in model])
    values = np.array([p.s_alpha for p in model])
    if values.max() - values.min() < 1e-9:
        raise DegenerateFitError("model trajectory is flat; shift is unidentifiable")
    spline = CubicSpline(thetas, values)

    def residuals(params):
        d_theta, v = params
        return obs[:, 1] - v * spline(obs[:, 0] + d_theta)

    fit = least_squares(residuals, x0=[0.0, 1.0], method="lm", xtol=1e-14, ftol=1e-14)
    rms = float(np.sqrt(np.mean(fit.fun ** 2)))
    return CalibrationFit(angle_offset=float(fit.x[0]), visibility=float(fit.x[1]),
                          residual=rms)
