"""Rigid-body state containers, SO(3) helpers, and flat-vector codecs.

The planner works on flat 18-vectors laid out as
``[o(3), v(3), R row-major(9), Omega(3)]``.  Flat vectors are *not*
required to encode a valid rotation: additive Gaussian noise destroys
orthogonality, and validity is restored only at rollout/projection
boundaries via :func:`project_to_so3`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FLAT_DIM = 18

# slices of the flat layout
POS = slice(0, 3)
VEL = slice(3, 6)
ROT = slice(6, 15)
ANGVEL = slice(15, 18)


class DegenerateRotationError(ValueError):
    """Raised when a rotation block cannot be retracted onto SO(3)."""


@dataclass
class QuadState:
    """Full rigid-body state: position, velocity, rotation, angular velocity.

    Attributes:
        o: position [m], shape (3,).
        v: velocity [m/s], shape (3,).
        R: body-to-world rotation matrix, shape (3, 3).
        Omega: body angular velocity [rad/s], shape (3,).
    """

    o: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    Omega: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.o = np.asarray(self.o, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.Omega = np.asarray(self.Omega, dtype=float).reshape(3)

    def copy(self) -> "QuadState":
        return QuadState(self.o.copy(), self.v.copy(), self.R.copy(), self.Omega.copy())


@dataclass
class Trajectory:
    """A horizon of flat states plus (optionally partial) controls.

    ``states`` has shape (T+1, 18).  ``controls`` is either None or a
    (T, 4) array with layout ``[F, Mx, My, Mz]`` per row; rows of NaN mark
    transitions for which no control was chosen.
    """

    states: np.ndarray
    controls: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != FLAT_DIM:
            raise ValueError(f"states must have shape (T+1, {FLAT_DIM})")
        if self.controls is not None:
            self.controls = np.asarray(self.controls, dtype=float)
            if self.controls.shape != (self.horizon, 4):
                raise ValueError(
                    f"controls must have shape ({self.horizon}, 4), "
                    f"got {self.controls.shape}"
                )

    @property
    def horizon(self) -> int:
        """Number of transitions T (states has T+1 rows)."""
        return self.states.shape[0] - 1

    def positions(self) -> np.ndarray:
        return self.states[:, POS]

    def copy(self) -> "Trajectory":
        c = None if self.controls is None else self.controls.copy()
        return Trajectory(self.states.copy(), c)


def hat(w) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector so that hat(w) @ v == w x v."""
    w = np.asarray(w, dtype=float)
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def project_to_so3(M) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius norm.

    Polar decomposition computed through the SVD, with the sign of the
    smallest singular vector pair flipped when needed so that the result
    has determinant +1.

    Args:
        M: 3x3 matrix, or a batch of matrices with shape (..., 3, 3).

    Returns:
        Rotation matrix (or batch) of the same leading shape.

    Raises:
        DegenerateRotationError: if M is (numerically) singular.
    """
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M)
    if np.any(s[..., -1] <= 1e-12 * np.maximum(s[..., 0], 1e-300)):
        raise DegenerateRotationError("degenerate rotation block")
    det = np.linalg.det(U @ Vt)
    # flip the least-significant axis to land on SO(3), not O(3)
    U = U.copy()
    U[..., :, 2] *= np.where(det < 0.0, -1.0, 1.0)[..., np.newaxis]
    return U @ Vt


def flatten(s: QuadState) -> np.ndarray:
    """Pack a QuadState into the flat 18-vector layout."""
    out = np.empty(FLAT_DIM)
    out[POS] = s.o
    out[VEL] = s.v
    out[ROT] = s.R.reshape(9)
    out[ANGVEL] = s.Omega
    return out


def unflatten(f, orthonormalize: bool = False) -> QuadState:
    """Unpack a flat 18-vector into a QuadState.

    Args:
        f: length-18 vector.
        orthonormalize: when True the rotation block is retracted onto
            SO(3) via :func:`project_to_so3`; when False it is passed
            through untouched (round-trip identity).
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (FLAT_DIM,):
        raise ValueError(f"flat state must have length {FLAT_DIM}, got shape {f.shape}")
    R = f[ROT].reshape(3, 3)
    if orthonormalize:
        R = project_to_so3(R)
    return QuadState(f[POS].copy(), f[VEL].copy(), R.copy(), f[ANGVEL].copy())
