"""Compiled inner loops for the discrete dynamics and reachable-set search.

Everything that has to evaluate the one-step transition map in bulk
(rollouts, candidate evaluation during projection, feasibility residuals)
funnels through the routines here so the results are bit-identical across
call sites.  The transition map is:

    step(x, u) = retract( rk4( orthonormalize_base(x), u, dt ) )

where ``orthonormalize_base`` retracts the (possibly noised) rotation block
of the input onto SO(3) via an exact polar decomposition, and ``retract``
cleans up the integrator's small orthogonality drift on the output.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Newton-Schulz handles the integrator's small drift; anything worse falls
# back to the exact SVD polar factor (noised rotation blocks, det < 0, ...).
_NS_DRIFT_LIMIT = 0.3
_NS_ITERS = 4


@njit(cache=True)
def _polar9(r):
    """In-place nearest-rotation retraction of a row-major 3x3 block.

    Exact polar decomposition via the SVD with determinant correction,
    valid for any nonsingular input.
    """
    for d in range(9):
        if not np.isfinite(r[d]):
            raise ValueError("degenerate rotation block")
    M = np.empty((3, 3))
    M[0, 0] = r[0]
    M[0, 1] = r[1]
    M[0, 2] = r[2]
    M[1, 0] = r[3]
    M[1, 1] = r[4]
    M[1, 2] = r[5]
    M[2, 0] = r[6]
    M[2, 1] = r[7]
    M[2, 2] = r[8]
    U, s, Vt = np.linalg.svd(M)
    smax = s[0] if s[0] > 1e-300 else 1e-300
    if s[2] <= 1e-12 * smax:
        raise ValueError("degenerate rotation block")
    P = U @ Vt
    det = (
        P[0, 0] * (P[1, 1] * P[2, 2] - P[1, 2] * P[2, 1])
        - P[0, 1] * (P[1, 0] * P[2, 2] - P[1, 2] * P[2, 0])
        + P[0, 2] * (P[1, 0] * P[2, 1] - P[1, 1] * P[2, 0])
    )
    if det < 0.0:
        # flip the weakest singular direction: P - 2 * u_2 vt_2^T
        for i in range(3):
            for j in range(3):
                P[i, j] -= 2.0 * U[i, 2] * Vt[2, j]
    r[0] = P[0, 0]
    r[1] = P[0, 1]
    r[2] = P[0, 2]
    r[3] = P[1, 0]
    r[4] = P[1, 1]
    r[5] = P[1, 2]
    r[6] = P[2, 0]
    r[7] = P[2, 1]
    r[8] = P[2, 2]


@njit(cache=True)
def _retract9(r):
    """In-place retraction for near-orthogonal blocks (integrator output)."""
    s00 = r[0] * r[0] + r[3] * r[3] + r[6] * r[6]
    s11 = r[1] * r[1] + r[4] * r[4] + r[7] * r[7]
    s22 = r[2] * r[2] + r[5] * r[5] + r[8] * r[8]
    s01 = r[0] * r[1] + r[3] * r[4] + r[6] * r[7]
    s02 = r[0] * r[2] + r[3] * r[5] + r[6] * r[8]
    s12 = r[1] * r[2] + r[4] * r[5] + r[7] * r[8]
    drift = abs(s00 - 1.0)
    if abs(s11 - 1.0) > drift:
        drift = abs(s11 - 1.0)
    if abs(s22 - 1.0) > drift:
        drift = abs(s22 - 1.0)
    if abs(s01) > drift:
        drift = abs(s01)
    if abs(s02) > drift:
        drift = abs(s02)
    if abs(s12) > drift:
        drift = abs(s12)
    if not np.isfinite(drift):
        return  # divergence; the caller's finiteness check reports it
    if drift > _NS_DRIFT_LIMIT:
        _polar9(r)
        return
    for _ in range(_NS_ITERS):
        # X <- 1.5 X - 0.5 X (X^T X)
        t0 = 1.5 * r[0] - 0.5 * (r[0] * s00 + r[1] * s01 + r[2] * s02)
        t1 = 1.5 * r[1] - 0.5 * (r[0] * s01 + r[1] * s11 + r[2] * s12)
        t2 = 1.5 * r[2] - 0.5 * (r[0] * s02 + r[1] * s12 + r[2] * s22)
        t3 = 1.5 * r[3] - 0.5 * (r[3] * s00 + r[4] * s01 + r[5] * s02)
        t4 = 1.5 * r[4] - 0.5 * (r[3] * s01 + r[4] * s11 + r[5] * s12)
        t5 = 1.5 * r[5] - 0.5 * (r[3] * s02 + r[4] * s12 + r[5] * s22)
        t6 = 1.5 * r[6] - 0.5 * (r[6] * s00 + r[7] * s01 + r[8] * s02)
        t7 = 1.5 * r[7] - 0.5 * (r[6] * s01 + r[7] * s11 + r[8] * s12)
        t8 = 1.5 * r[8] - 0.5 * (r[6] * s02 + r[7] * s12 + r[8] * s22)
        r[0] = t0
        r[1] = t1
        r[2] = t2
        r[3] = t3
        r[4] = t4
        r[5] = t5
        r[6] = t6
        r[7] = t7
        r[8] = t8
        s00 = r[0] * r[0] + r[3] * r[3] + r[6] * r[6]
        s11 = r[1] * r[1] + r[4] * r[4] + r[7] * r[7]
        s22 = r[2] * r[2] + r[5] * r[5] + r[8] * r[8]
        s01 = r[0] * r[1] + r[3] * r[4] + r[6] * r[7]
        s02 = r[0] * r[2] + r[3] * r[5] + r[6] * r[8]
        s12 = r[1] * r[2] + r[4] * r[5] + r[7] * r[8]


@njit(cache=True)
def _deriv(x, F, Mx, My, Mz, mass, gravity, e3x, e3y, e3z, g1, g2, g3, out):
    """Continuous-time state derivative on the flat 18-vector."""
    out[0] = x[3]
    out[1] = x[4]
    out[2] = x[5]
    # m v' = m g e3 - F R e3
    re3x = x[6] * e3x + x[7] * e3y + x[8] * e3z
    re3y = x[9] * e3x + x[10] * e3y + x[11] * e3z
    re3z = x[12] * e3x + x[13] * e3y + x[14] * e3z
    fm = F / mass
    out[3] = gravity * e3x - fm * re3x
    out[4] = gravity * e3y - fm * re3y
    out[5] = gravity * e3z - fm * re3z
    # R' = R hat(w)
    wx = x[15]
    wy = x[16]
    wz = x[17]
    out[6] = x[7] * wz - x[8] * wy
    out[7] = -x[6] * wz + x[8] * wx
    out[8] = x[6] * wy - x[7] * wx
    out[9] = x[10] * wz - x[11] * wy
    out[10] = -x[9] * wz + x[11] * wx
    out[11] = x[9] * wy - x[10] * wx
    out[12] = x[13] * wz - x[14] * wy
    out[13] = -x[12] * wz + x[14] * wx
    out[14] = x[12] * wy - x[13] * wx
    # Gamma w' = M - w x (Gamma w)
    hx = g1 * wx
    hy = g2 * wy
    hz = g3 * wz
    out[15] = (Mx - (wy * hz - wz * hy)) / g1
    out[16] = (My - (wz * hx - wx * hz)) / g2
    out[17] = (Mz - (wx * hy - wy * hx)) / g3


@njit(cache=True)
def _rk4_into(x, u, dt, mass, gravity, e3x, e3y, e3z, g1, g2, g3, out, k1, k2, k3, k4, xt):
    """Classical four-stage RK4 step, writing into ``out`` (no retraction)."""
    F = u[0]
    Mx = u[1]
    My = u[2]
    Mz = u[3]
    _deriv(x, F, Mx, My, Mz, mass, gravity, e3x, e3y, e3z, g1, g2, g3, k1)
    half = 0.5 * dt
    for d in range(18):
        xt[d] = x[d] + half * k1[d]
    _deriv(xt, F, Mx, My, Mz, mass, gravity, e3x, e3y, e3z, g1, g2, g3, k2)
    for d in range(18):
        xt[d] = x[d] + half * k2[d]
    _deriv(xt, F, Mx, My, Mz, mass, gravity, e3x, e3y, e3z, g1, g2, g3, k3)
    for d in range(18):
        xt[d] = x[d] + dt * k3[d]
    _deriv(xt, F, Mx, My, Mz, mass, gravity, e3x, e3y, e3z, g1, g2, g3, k4)
    sixth = dt / 6.0
    for d in range(18):
        out[d] = x[d] + sixth * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])


@njit(cache=True)
def step_batch(x, u, dt, mass, gravity, e3, inertia):
    """Transition map applied row-wise: (n, 18), (n, 4) -> (n, 18)."""
    n = x.shape[0]
    out = np.empty((n, 18))
    xb = np.empty(18)
    k1 = np.empty(18)
    k2 = np.empty(18)
    k3 = np.empty(18)
    k4 = np.empty(18)
    xt = np.empty(18)
    for k in range(n):
        for d in range(18):
            xb[d] = x[k, d]
        _polar9(xb[6:15])
        _rk4_into(
            xb, u[k], dt, mass, gravity, e3[0], e3[1], e3[2],
            inertia[0], inertia[1], inertia[2],
            out[k], k1, k2, k3, k4, xt,
        )
        _retract9(out[k, 6:15])
    return out


@njit(cache=True)
def rollout_states(x0, controls, dt, mass, gravity, e3, inertia):
    """Chain the transition map from x0 under a (T, 4) control sequence.

    Returns (states, diverged): states has shape (T+1, 18); diverged is
    True when a non-finite component appeared (remaining rows undefined).
    """
    T = controls.shape[0]
    states = np.empty((T + 1, 18))
    for d in range(18):
        states[0, d] = x0[d]
    xb = np.empty(18)
    k1 = np.empty(18)
    k2 = np.empty(18)
    k3 = np.empty(18)
    k4 = np.empty(18)
    xt = np.empty(18)
    for t in range(T):
        for d in range(18):
            xb[d] = states[t, d]
        _polar9(xb[6:15])
        _rk4_into(
            xb, controls[t], dt, mass, gravity, e3[0], e3[1], e3[2],
            inertia[0], inertia[1], inertia[2],
            states[t + 1], k1, k2, k3, k4, xt,
        )
        _retract9(states[t + 1, 6:15])
        for d in range(18):
            if not np.isfinite(states[t + 1, d]):
                return states, True
    return states, False


@njit(cache=True)
def project_slot(bases, targets, actions, dt, mass, gravity, e3, inertia, metric_w):
    """Reachable-set projection for a batch of independent transitions.

    For each row k, evaluates the transition map from ``bases[k]`` under
    every action in ``actions[k]`` and keeps the candidate closest to
    ``targets[k]`` in the squared flat-vector 2-norm (componentwise
    weighted by ``metric_w``; pass ones for the plain norm).  Ties break
    toward the lowest candidate index.

    Args:
        bases: (n, 18) current states (rotation block may be raw/noised).
        targets: (n, 18) predicted next states to match.
        actions: (n, N_p, 4) admissible action samples.
        dt, mass, gravity, e3, inertia: dynamics parameters.
        metric_w: (18,) nonnegative weights on the squared residual.

    Returns:
        (best_states (n, 18), best_u (n, 4), best_r2 (n,), n_nonfinite).
    """
    n = bases.shape[0]
    n_p = actions.shape[1]
    best_states = np.empty((n, 18))
    best_u = np.empty((n, 4))
    best_r2 = np.empty(n)
    nonfinite = 0
    xb = np.empty(18)
    cand = np.empty(18)
    k1 = np.empty(18)
    k2 = np.empty(18)
    k3 = np.empty(18)
    k4 = np.empty(18)
    xt = np.empty(18)
    for k in range(n):
        for d in range(18):
            xb[d] = bases[k, d]
        _polar9(xb[6:15])
        best = np.inf
        bidx = -1
        for j in range(n_p):
            _rk4_into(
                xb, actions[k, j], dt, mass, gravity, e3[0], e3[1], e3[2],
                inertia[0], inertia[1], inertia[2],
                cand, k1, k2, k3, k4, xt,
            )
            _retract9(cand[6:15])
            r2 = 0.0
            for d in range(18):
                diff = cand[d] - targets[k, d]
                r2 += metric_w[d] * diff * diff
            if np.isfinite(r2):
                if r2 < best:
                    best = r2
                    bidx = j
                    for d in range(18):
                        best_states[k, d] = cand[d]
            else:
                nonfinite += 1
        best_r2[k] = best
        if bidx < 0:
            nonfinite += n_p  # force the caller's error path
            for d in range(18):
                best_states[k, d] = np.nan
            for d in range(4):
                best_u[k, d] = np.nan
        else:
            for d in range(4):
                best_u[k, d] = actions[k, bidx, d]
    return best_states, best_u, best_r2, nonfinite


def warmup():
    """Compile (or load from cache) every kernel with tiny inputs."""
    e3 = np.array([0.0, 0.0, 1.0])
    inertia = np.array([0.01, 0.01, 0.02])
    x = np.zeros((1, 18))
    x[0, 6] = x[0, 10] = x[0, 14] = 1.0
    u = np.zeros((1, 4))
    step_batch(x, u, 0.1, 1.0, 9.81, e3, inertia)
    rollout_states(x[0], u, 0.1, 1.0, 9.81, e3, inertia)
    project_slot(x, x, u.reshape(1, 1, 4), 0.1, 1.0, 9.81, e3, inertia, np.ones(18))
