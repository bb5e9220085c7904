"""Gaussian states of optical modes and the symplectic maps acting on them.

Quadratures are ordered ``x1, p1, x2, p2, ...`` and measured in units where
the vacuum variance is 1/2.  Every state may carry leading batch dimensions,
so a single object can describe a whole train of independent pulses; all
operations broadcast over those dimensions.  States are immutable: each
operation returns a new state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

VACUUM_VARIANCE = 0.5
SYMMETRY_TOL = 1e-10
UNCERTAINTY_TOL = 1e-9

_OMEGA_1 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def symplectic_form(num_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form, one ``[[0, 1], [-1, 0]]`` block per mode."""
    return np.kron(np.eye(num_modes), _OMEGA_1)


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class GaussianState:
    """First moments and covariance matrix of an ``n``-mode Gaussian state.

    ``mean`` has shape ``(..., 2n)`` and ``cov`` has shape ``(..., 2n, 2n)``.
    The two batch shapes only need to broadcast against each other, which
    lets a pulse train with identical covariances keep a single ``cov``.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean)
        cov = _frozen(self.cov)
        if mean.ndim < 1 or mean.shape[-1] == 0 or mean.shape[-1] % 2:
            raise ValueError(f"mean must have an even, non-zero last axis, got shape {mean.shape}")
        dim = mean.shape[-1]
        if cov.ndim < 2 or cov.shape[-2:] != (dim, dim):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {dim}")
        np.broadcast_shapes(mean.shape[:-1], cov.shape[:-2])
        if not np.allclose(cov, np.swapaxes(cov, -1, -2), rtol=0.0, atol=SYMMETRY_TOL):
            raise ValueError("covariance matrix is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def num_modes(self) -> int:
        return self.mean.shape[-1] // 2

    @property
    def batch_shape(self) -> tuple:
        return np.broadcast_shapes(self.mean.shape[:-1], self.cov.shape[:-2])

    def symplectic_eigenvalues(self) -> np.ndarray:
        """Symplectic spectrum of ``cov``, shape ``(..., n)``, ascending.

        Computed from the moduli of the eigenvalues of ``i Omega cov``,
        which come in ``+/-`` pairs.
        """
        omega = symplectic_form(self.num_modes)
        ev = np.abs(np.linalg.eigvals(1j * omega @ self.cov))
        ev = np.sort(ev, axis=-1)
        return ev[..., ::2]

    def is_physical(self, tol: float = UNCERTAINTY_TOL) -> bool:
        """True if every symplectic eigenvalue respects the uncertainty bound."""
        return bool(np.all(self.symplectic_eigenvalues() >= VACUUM_VARIANCE - tol))

    def take(self, index) -> "GaussianState":
        """Select pulses along the (single) batch axis."""
        batch = self.batch_shape
        if len(batch) != 1:
            raise ValueError("take() needs a state with exactly one batch axis")
        dim = 2 * self.num_modes
        mean = np.broadcast_to(self.mean, batch + (dim,))[index]
        cov = self.cov if self.cov.ndim == 2 else np.broadcast_to(self.cov, batch + (dim, dim))[index]
        return GaussianState(mean, cov)

    def allclose(self, other: "GaussianState", atol: float = 1e-10) -> bool:
        return (
            self.num_modes == other.num_modes
            and np.allclose(self.mean, other.mean, rtol=0.0, atol=atol)
            and np.allclose(self.cov, other.cov, rtol=0.0, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class SymplecticOp:
    """A linear quadrature map ``S`` with ``S Omega S^T = Omega``."""

    matrix: np.ndarray
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def num_modes(self) -> int:
        return self.matrix.shape[-1] // 2

    def symplectic_defect(self) -> float:
        """``max |S Omega S^T - Omega|`` over all entries (and batch elements)."""
        omega = symplectic_form(self.num_modes)
        s = self.matrix
        return float(np.max(np.abs(s @ omega @ np.swapaxes(s, -1, -2) - omega)))


@dataclass(frozen=True)
class HomodyneResult:
    """Statistics of a homodyne measurement along ``x_phi``; ``sample`` if drawn."""

    mean: np.ndarray | float
    variance: np.ndarray | float
    sample: np.ndarray | float | None = None


# -- elementary symplectic matrices -----------------------------------------


def squeeze_op(z) -> SymplecticOp:
    """Single-mode squeezer ``diag(z, 1/z)``; ``z`` in ``(0, 1]``, scalar or array."""
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0.0)) or np.any(z > 1.0):
        raise ValueError("squeezing parameter z must lie in (0, 1]")
    mat = np.zeros(z.shape + (2, 2))
    mat[..., 0, 0] = z
    mat[..., 1, 1] = 1.0 / z
    return SymplecticOp(mat, "squeeze")


def rotation_op(phi) -> SymplecticOp:
    """Phase-space rotation by ``phi`` radians (scalar or array)."""
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    mat = np.empty(phi.shape + (2, 2))
    mat[..., 0, 0] = c
    mat[..., 0, 1] = -s
    mat[..., 1, 0] = s
    mat[..., 1, 1] = c
    return SymplecticOp(mat, "rotation")


def beam_splitter_op(eta) -> SymplecticOp:
    """Two-mode beam splitter of transmissivity ``eta`` (scalar or array).

    This is the rotation ``S(theta)`` with ``cos(theta) = sqrt(eta)`` and
    ``sin(theta) = -sqrt(1 - eta)``: the fraction of mode A reflected into
    mode B keeps its sign, and mode B enters A with a minus sign.
    """
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0.0) or np.any(eta > 1.0):
        raise ValueError("transmissivity must lie in [0, 1]")
    c = np.sqrt(eta)
    s = np.sqrt(1.0 - eta)
    mat = np.zeros(eta.shape + (4, 4))
    for k in (0, 1):
        mat[..., k, k] = c
        mat[..., k, k + 2] = -s
        mat[..., k + 2, k] = s
        mat[..., k + 2, k + 2] = c
    return SymplecticOp(mat, "beam splitter")


# -- state constructors -----------------------------------------------------


def vacuum(num_modes: int = 1) -> GaussianState:
    dim = 2 * num_modes
    return GaussianState(np.zeros(dim), VACUUM_VARIANCE * np.eye(dim))


def coherent_state(alpha_re, alpha_im=0.0) -> GaussianState:
    """Coherent state ``|alpha>``: mean ``sqrt(2) (Re alpha, Im alpha)``, vacuum covariance.

    Array arguments produce a batch of coherent states.
    """
    re, im = np.broadcast_arrays(np.asarray(alpha_re, dtype=float), np.asarray(alpha_im, dtype=float))
    mean = np.sqrt(2.0) * np.stack([re, im], axis=-1)
    return GaussianState(mean, VACUUM_VARIANCE * np.eye(2))


def squeezed_vacuum(z, angle=0.0) -> GaussianState:
    """Vacuum squeezed by ``z`` with the reduced quadrature along ``x_angle``."""
    state = squeeze(vacuum(1), 0, z)
    if np.any(np.asarray(angle) != 0.0):
        state = rotate(state, 0, angle)
    return state


def tensor(*states: GaussianState) -> GaussianState:
    """Product state; modes are concatenated in argument order."""
    if not states:
        raise ValueError("tensor() needs at least one state")
    mean_batch = np.broadcast_shapes(*(s.mean.shape[:-1] for s in states))
    cov_batch = np.broadcast_shapes(*(s.cov.shape[:-2] for s in states))
    means = [np.broadcast_to(s.mean, mean_batch + s.mean.shape[-1:]) for s in states]
    dim = sum(s.mean.shape[-1] for s in states)
    cov = np.zeros(cov_batch + (dim, dim))
    start = 0
    for s in states:
        d = s.mean.shape[-1]
        cov[..., start:start + d, start:start + d] = s.cov
        start += d
    return GaussianState(np.concatenate(means, axis=-1), cov)


# -- operations on states ---------------------------------------------------


def _check_mode(state: GaussianState, mode: int) -> None:
    if not 0 <= mode < state.num_modes:
        raise IndexError(f"mode {mode} out of range for a {state.num_modes}-mode state")


def apply(state: GaussianState, op: SymplecticOp, modes: Sequence[int]) -> GaussianState:
    """Apply ``op`` to the listed modes of ``state`` (mean ``S r``, cov ``S sigma S^T``)."""
    modes = list(modes)
    if len(set(modes)) != len(modes):
        raise ValueError("modes must be distinct")
    for m in modes:
        _check_mode(state, m)
    if op.num_modes != len(modes):
        raise ValueError(f"operation acts on {op.num_modes} modes, {len(modes)} given")

    n = state.num_modes
    if modes == list(range(n)):
        full = op.matrix
    else:
        local = op.matrix
        full = np.broadcast_to(np.eye(2 * n), local.shape[:-2] + (2 * n, 2 * n)).copy()
        idx = np.array([2 * m + q for m in modes for q in (0, 1)])
        full[..., idx[:, None], idx[None, :]] = local
    mean = np.einsum("...ij,...j->...i", full, state.mean)
    cov = full @ state.cov @ np.swapaxes(full, -1, -2)
    # symmetrize away rounding so downstream symmetry checks stay tight
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    return GaussianState(mean, cov)


def squeeze(state: GaussianState, mode: int, z) -> GaussianState:
    return apply(state, squeeze_op(z), [mode])


def rotate(state: GaussianState, mode: int, phi) -> GaussianState:
    return apply(state, rotation_op(phi), [mode])


def beam_splitter(state: GaussianState, mode_a: int, mode_b: int, eta) -> GaussianState:
    """Mix ``mode_a`` and ``mode_b`` on a beam splitter of transmissivity ``eta``."""
    if mode_a == mode_b:
        raise ValueError("beam splitter needs two different modes")
    return apply(state, beam_splitter_op(eta), [mode_a, mode_b])


def partial_trace(state: GaussianState, keep: Sequence[int]) -> GaussianState:
    """Marginal on the modes in ``keep``, returned in the order given."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep must name at least one mode")
    if len(set(keep)) != len(keep):
        raise ValueError("keep must not repeat modes")
    for m in keep:
        _check_mode(state, m)
    idx = np.array([2 * m + q for m in keep for q in (0, 1)])
    return GaussianState(state.mean[..., idx], state.cov[..., idx[:, None], idx[None, :]])


def attenuate(state: GaussianState, mode: int, eta) -> GaussianState:
    """Pure-loss channel: beam splitter with a vacuum ancilla, ancilla discarded."""
    _check_mode(state, mode)
    n = state.num_modes
    joint = beam_splitter(tensor(state, vacuum(1)), mode, n, eta)
    return partial_trace(joint, range(n))


def mix_with_squeezed_vacuum(state: GaussianState, z, coupler_eta: float = 0.99, *,
                             mode: int = 0, angle=0.0) -> GaussianState:
    """Squeeze a bright pulse by combining it with squeezed vacuum on a coupler.

    The squeezed vacuum takes the high-transmission path and the pulse the
    ``1 - coupler_eta`` path; the other output is discarded.  For the
    default 99/1 coupler a single-mode input ``(x, p)`` with vacuum noise
    comes out as ``(0.1 x, 0.1 p)`` with covariance
    ``0.5 diag(0.01 + 0.99 z**2, 0.01 + 0.99 / z**2)``.
    ``angle`` rotates the squeezed quadrature to ``x_angle``.
    """
    if not 0.0 <= coupler_eta <= 1.0:
        raise ValueError("coupler transmissivity must lie in [0, 1]")
    _check_mode(state, mode)
    n = state.num_modes
    joint = beam_splitter(tensor(state, squeezed_vacuum(z, angle)), mode, n, coupler_eta)
    keep = [n if k == mode else k for k in range(n)]
    return partial_trace(joint, keep)


# -- homodyne detection -----------------------------------------------------


def homodyne_stats(state: GaussianState, mode: int, phi) -> HomodyneResult:
    """Mean and variance of ``x_phi = cos(phi) x + sin(phi) p`` on ``mode``."""
    _check_mode(state, mode)
    phi = np.asarray(phi, dtype=float)
    u = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    r = state.mean[..., 2 * mode:2 * mode + 2]
    c = state.cov[..., 2 * mode:2 * mode + 2, 2 * mode:2 * mode + 2]
    mean = np.einsum("...i,...i->...", u, r)
    var = np.einsum("...i,...ij,...j->...", u, c, u)
    return HomodyneResult(mean, var)


def homodyne_sample(state: GaussianState, mode: int, phi, rng: np.random.Generator):
    """One homodyne outcome per batch element, drawn from ``homodyne_stats``.

    Exactly one standard normal is consumed per element, so runs that differ
    only in state parameters see the same underlying noise sequence.
    """
    stats = homodyne_stats(state, mode, phi)
    shape = np.broadcast_shapes(np.shape(stats.mean), np.shape(stats.variance))
    noise = rng.standard_normal(shape)
    out = stats.mean + np.sqrt(stats.variance) * noise
    return float(out) if out.ndim == 0 else out


def db_to_z(squeezing_db, convention: str = "power"):
    """Convert a squeezing level in dB (``<= 0``) to the parameter ``z``.

    ``"power"`` uses ``10**(dB/10)``; ``"amplitude"`` uses the more common
    ``10**(dB/20)``.
    """
    db = np.asarray(squeezing_db, dtype=float)
    if np.any(db > 0.0):
        raise ValueError("squeezing level must be <= 0 dB")
    if convention == "power":
        z = 10.0 ** (db / 10.0)
    elif convention == "amplitude":
        z = 10.0 ** (db / 20.0)
    else:
        raise ValueError(f"unknown dB convention {convention!r}")
    return float(z) if z.ndim == 0 else z
