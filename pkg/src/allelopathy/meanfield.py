"""Mean-field ODE system: vector field, integration, fixed points,
linearization, and the parameter-region classifier.

With u = (u0, u1, u2, u3) the densities of free, blue, red and frozen
sites, the vector field reads

    u0' = u2 + g*u3 - l1*u0*u1 - l2*u0*u2
    u1' = l1*u0*u1 + l1*X*u3   - u1
    u2' = l2*u0*u2             - u2
    u3' = u1 - l1*u1*u3 - g*u3

where the frozen-to-blue inflow X is ``u1`` in the corrected form
(matching the 3->1 rate l1*f1 and the -l1*u1*u3 outflow already present
in u3', hence conserving u0+u1+u2+u3) and ``u0`` in the literal form,
whose conservation defect is exactly l1*u3*(u0 - u1).  Both forms are
implemented; ``corrected`` is the default everywhere.

Region flags for fixed thaw rate g: the blue-boundary equilibrium is
attracting iff l1 > 1 and g*l2 < l1*(l1 + g - 1) (region w1); the
red-boundary equilibrium is attracting iff l2 > 1 and l2 > l1 (region
w2); an interior fixed point exists iff both hold, i.e. in the window
l1 < l2 < l1*(l1 + g - 1)/g.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CORRECTED = "corrected"
LITERAL = "literal"

_STAB_TOL = 1e-8


def _check_form(form: str):
    if form not in (CORRECTED, LITERAL):
        raise ValueError("form must be 'corrected' or 'literal'")


def rhs(u, p, form: str = CORRECTED) -> np.ndarray:
    """Vector field at u for rates p = (lambda1, lambda2, gamma)."""
    _check_form(form)
    u0, u1, u2, u3 = u
    l1, l2, g = p.lambda1, p.lambda2, p.gamma
    x = u1 if form == CORRECTED else u0
    return np.array([
        u2 + g * u3 - l1 * u0 * u1 - l2 * u0 * u2,
        l1 * u0 * u1 + l1 * x * u3 - u1,
        l2 * u0 * u2 - u2,
        u1 - l1 * u1 * u3 - g * u3,
    ])


def jacobian(u, p, form: str = CORRECTED) -> np.ndarray:
    """Analytic Jacobian of :func:`rhs` (4x4)."""
    _check_form(form)
    u0, u1, u2, u3 = u
    l1, l2, g = p.lambda1, p.lambda2, p.gamma
    J = np.zeros((4, 4))
    J[0] = [-l1 * u1 - l2 * u2, -l1 * u0, 1.0 - l2 * u0, g]
    if form == CORRECTED:
        J[1] = [l1 * u1, l1 * u0 + l1 * u3 - 1.0, 0.0, l1 * u1]
    else:
        J[1] = [l1 * u1 + l1 * u3, l1 * u0 - 1.0, 0.0, l1 * u0]
    J[2] = [l2 * u2, 0.0, l2 * u0 - 1.0, 0.0]
    J[3] = [0.0, 1.0 - l1 * u3, 0.0, -l1 * u1 - g]
    return J


def tangent_eigenvalues(J: np.ndarray) -> np.ndarray:
    """Eigenvalues of the flow restricted to the simplex.

    In reduced coordinates (u1, u2, u3) with u0 = 1 - u1 - u2 - u3 the
    linearization is J[1:,1:] - J[1:,0]; its three eigenvalues are the
    classification-relevant modes (the conserved corrected form always
    adds a structural zero to the full 4x4 spectrum).
    """
    red = J[1:, 1:] - J[1:, [0]]
    return np.linalg.eigvals(red)


@dataclass
class StabilityReport:
    point: np.ndarray
    eigenvalues: np.ndarray          # full 4x4 spectrum
    tangent_real_parts: np.ndarray   # simplex-tangent modes
    classification: str              # attracting / unstable / marginal
    in_w1: bool
    in_w2: bool
    coexistence_window: bool


def stability_report(point, p, form: str = CORRECTED) -> StabilityReport:
    J = jacobian(point, p, form)
    full = np.linalg.eigvals(J)
    tang = np.sort(np.real(tangent_eigenvalues(J)))
    if np.any(np.abs(tang) <= _STAB_TOL):
        cls = "marginal"
    elif np.all(tang < -_STAB_TOL):
        cls = "attracting"
    else:
        cls = "unstable"
    w1, w2, co = classify_region(p.lambda1, p.lambda2, p.gamma)
    return StabilityReport(point=np.asarray(point, dtype=float),
                           eigenvalues=full, tangent_real_parts=tang,
                           classification=cls, in_w1=w1, in_w2=w2,
                           coexistence_window=co)


def classify_region(lambda1: float, lambda2: float, gamma: float):
    """(in_w1, in_w2, coexistence_window) for the given rates."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    in_w1 = (lambda1 > 1.0) and (gamma * lambda2
                                 < lambda1 * (lambda1 + gamma - 1.0))
    in_w2 = (lambda2 > 1.0) and (lambda2 > lambda1)
    coexist = (lambda1 < lambda2) and (
        lambda2 < lambda1 * (lambda1 + gamma - 1.0) / gamma)
    return in_w1, in_w2, coexist


def boundary_fixed_point_blue(p):
    """Blue-boundary equilibrium (u2 = 0), or None when lambda1 <= 1.

    Closed form (corrected field): u1 = 1 - 1/l1, u3 = u1/(l1*u1 + g),
    u0 = 1/l1 - u3.  The residual is checked before returning.
    """
    l1, g = p.lambda1, p.gamma
    if l1 <= 1.0:
        return None
    u1 = 1.0 - 1.0 / l1
    u3 = u1 / (l1 * u1 + g) if not math.isinf(g) else 0.0
    u0 = 1.0 / l1 - u3
    point = np.array([u0, u1, 0.0, u3])
    if not math.isinf(g):
        res = np.linalg.norm(rhs(point, p, CORRECTED))
        if res >= 1e-12:
            raise AssertionError(f"closed form residual {res:.2e}")
    return point


def boundary_fixed_point_red(p):
    """Red-boundary equilibrium (u1 = u3 = 0), or None when lambda2 <= 1."""
    l2 = p.lambda2
    if l2 <= 1.0:
        return None
    return np.array([1.0 / l2, 0.0, 1.0 - 1.0 / l2, 0.0])


# ---------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------

def _rk4_step(u, dt, p, form):
    k1 = rhs(u, p, form)
    k2 = rhs(u + 0.5 * dt * k1, p, form)
    k3 = rhs(u + 0.5 * dt * k2, p, form)
    k4 = rhs(u + dt * k3, p, form)
    return u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class OdeTrajectory:
    times: np.ndarray
    states: np.ndarray          # (n, 4)
    step_halving_error: float   # max |full-step - two half-steps| observed

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def integrate(u0, p, form: str = CORRECTED, dt: float = 0.01,
              T: float = 100.0, sample_every: int = 10) -> OdeTrajectory:
    """Fixed-step classical 4th-order integration with a step-halving
    error estimate.  Trajectories are never renormalized; divergence
    (any |u_i| > 10) raises."""
    _check_form(form)
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u0, dtype=float).copy()
    n_steps = int(round(T / dt))
    times = [0.0]
    states = [u.copy()]
    err = 0.0
    for k in range(n_steps):
        full = _rk4_step(u, dt, p, form)
        if k % 97 == 0:     # periodic step-halving diagnostic
            half = _rk4_step(_rk4_step(u, 0.5 * dt, p, form), 0.5 * dt,
                             p, form)
            err = max(err, float(np.max(np.abs(full - half))))
        u = full
        if np.any(np.abs(u) > 10.0):
            raise FloatingPointError(
                f"divergence at t={(k + 1) * dt:.3f}: {u}")
        if (k + 1) % sample_every == 0 or k == n_steps - 1:
            times.append((k + 1) * dt)
            states.append(u.copy())
    return OdeTrajectory(times=np.array(times), states=np.array(states),
                         step_halving_error=err)


# ---------------------------------------------------------------------
# interior fixed point
# ---------------------------------------------------------------------

class NewtonDidNotConverge(RuntimeError):
    """Numerical search failed where the region flags predict a root."""


def interior_fixed_point(p, form: str = CORRECTED, max_iter: int = 200,
                         n_starts: int = 16):
    """Interior equilibrium via damped Newton on the simplex, or None.

    Newton runs on the reduced coordinates (u1, u2, u3) with
    u0 = 1 - u1 - u2 - u3.  Starts at the simplex center plus jittered
    restarts; a point qualifies if every coordinate exceeds 1e-8, the
    residual is below 1e-10, and it is not a boundary equilibrium in
    disguise (within 1e-6 of one; on the diagonal lambda1 = lambda2
    the red-boundary root is degenerate and Newton stalls arbitrarily
    close to it).  Absence is only certified when the region flags
    predict it; otherwise a failed search raises
    :class:`NewtonDidNotConverge`.
    """
    _check_form(form)
    in_w1, in_w2, _ = classify_region(p.lambda1, p.lambda2, p.gamma)
    predicted = in_w1 and in_w2
    boundary = [np.array([1.0, 0.0, 0.0, 0.0])]
    for bp in (boundary_fixed_point_blue(p), boundary_fixed_point_red(p)):
        if bp is not None:
            boundary.append(bp)

    def reduced_rhs(v):
        u = np.array([1.0 - v.sum(), v[0], v[1], v[2]])
        return rhs(u, p, form)[1:]

    def reduced_jac(v):
        u = np.array([1.0 - v.sum(), v[0], v[1], v[2]])
        J = jacobian(u, p, form)
        # chain rule for u0 = 1 - u1 - u2 - u3
        return J[1:, 1:] - J[1:, [0]]

    starts = [np.array([0.25, 0.25, 0.25])]
    if p.lambda2 > 1.0:
        # any interior root of the corrected field has u0 = 1/lambda2;
        # seed starts on that slice with small blue/frozen mass
        u2_guess = max(1.0 - 1.0 / p.lambda2, 0.05)
        for eps in (0.02, 0.05, 0.15):
            starts.append(np.clip(
                np.array([eps, u2_guess - 2 * eps, eps]), 0.01, 0.9))
    for k in range(n_starts - 1):
        jit = np.array([((k * 7 + i * 3) % 11 - 5) / 40.0 for i in range(3)])
        starts.append(np.clip(starts[0] + jit, 0.02, 0.8))
    for v0 in starts:
        v = v0.copy()
        ok = False
        for _ in range(max_iter):
            f = reduced_rhs(v)
            if np.linalg.norm(f) < 1e-12:
                ok = True
                break
            try:
                step = np.linalg.solve(reduced_jac(v), f)
            except np.linalg.LinAlgError:
                break
            lam = 1.0
            base = np.linalg.norm(f)
            while lam > 1e-6:
                cand = v - lam * step
                if np.linalg.norm(reduced_rhs(cand)) < base:
                    v = cand
                    break
                lam *= 0.5
            else:
                break
        if ok:
            for _ in range(12):   # polish; slow directions near
                f = reduced_rhs(v)   # degenerate roots converge linearly
                if np.linalg.norm(f) < 1e-15:
                    break
                try:
                    v = v - np.linalg.solve(reduced_jac(v), f)
                except np.linalg.LinAlgError:
                    break
            u = np.array([1.0 - v.sum(), v[0], v[1], v[2]])
            if np.all(u > 1e-8) and \
                    np.linalg.norm(rhs(u, p, form)) < 1e-10 and \
                    all(np.linalg.norm(u - bp) > 1e-5 for bp in boundary):
                return u
    if predicted:
        raise NewtonDidNotConverge(
            "region flags predict an interior fixed point but Newton "
            "failed from all starts")
    return None


def phase_grid(lambda1s, lambda2s, gammas, form: str = CORRECTED):
    """Rows for the phase-map CSV: one per (l1, l2, g) combination.

    Columns: lambda1, lambda2, gamma, in_w1, in_w2, coexist,
    ubar_exists, vbar_exists, interior_exists.
    """
    rows = []
    for g in gammas:
        pg = _RateTriple(0.0, 0.0, g)
        for l1 in lambda1s:
            for l2 in lambda2s:
                p = _RateTriple(l1, l2, g)
                w1, w2, co = classify_region(l1, l2, g)
                interior = interior_fixed_point(p, form)
                rows.append({
                    "lambda1": l1, "lambda2": l2, "gamma": g,
                    "in_w1": int(w1), "in_w2": int(w2), "coexist": int(co),
                    "ubar_exists": int(boundary_fixed_point_blue(p)
                                       is not None),
                    "vbar_exists": int(boundary_fixed_point_red(p)
                                       is not None),
                    "interior_exists": int(interior is not None),
                })
    return rows


@dataclass(frozen=True)
class _RateTriple:
    """Minimal rate container; lets the ODE layer run without lattice
    neighborhood metadata."""
    lambda1: float
    lambda2: float
    gamma: float
