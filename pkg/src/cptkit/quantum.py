"""Three-level lambda-system Lindblad engine.

Basis order is |1> (lower ground), |2> (upper ground), |3> (excited).
The Hamiltonian is stored as H/hbar so Planck's constant never appears
numerically; all angular quantities are rad/s.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernels
from .constants import (
    DEFAULT_DELTA_12_HZ,
    DEFAULT_TEMPERATURE_K,
    H_PLANCK,
    K_BOLTZMANN,
)
from .errors import BadInput, NonConvergence, NumericalInstability

GROUND_1 = np.diag([1.0, 0.0, 0.0]).astype(np.complex128)

_HERMITICITY_TOL = 1e-10
_TRACE_TOL = 1e-8


@dataclass(frozen=True)
class DriveConfig:
    """Rabi frequencies and detunings of the two lasers, in rad/s.

    omega_c and omega_d are non-negative (drive phases are absorbed);
    detunings delta_c and delta_d may have any sign.
    """

    omega_c: float
    omega_d: float
    delta_c: float = 0.0
    delta_d: float = 0.0

    def __post_init__(self):
        for name in ("omega_c", "omega_d", "delta_c", "delta_d"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise BadInput(f"DriveConfig.{name} must be finite, got {v!r}")
        if self.omega_c < 0 or self.omega_d < 0:
            raise BadInput("Rabi frequencies must be >= 0")


@dataclass(frozen=True)
class SystemRates:
    """All incoherent rates (1/s) plus ground splitting and temperature.

    gamma_c / gamma_d_opt: optical decay 3->1 / 3->2.
    gamma_plus / gamma_minus: phononic orbital excitation 1->2 / relaxation
    2->1. gamma_deph: pure dephasing on level 2. delta_12 is the ground
    splitting in Hz and temperature is in kelvin; they tie gamma_plus to
    gamma_minus through the Boltzmann factor when built via
    ``SystemRates.thermalized``.
    """

    gamma_c: float
    gamma_d_opt: float
    gamma_plus: float
    gamma_minus: float
    gamma_deph: float = 0.0
    delta_12: float = DEFAULT_DELTA_12_HZ
    temperature: float = DEFAULT_TEMPERATURE_K

    def __post_init__(self):
        for name in ("gamma_c", "gamma_d_opt", "gamma_plus", "gamma_minus", "gamma_deph"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise BadInput(f"SystemRates.{name} must be a finite rate >= 0, got {v!r}")
        if not self.delta_12 > 0:
            raise BadInput("delta_12 must be > 0")
        if not self.temperature > 0:
            raise BadInput("temperature must be > 0")

    @classmethod
    def thermalized(
        cls,
        gamma_minus: float,
        *,
        gamma_c: float,
        gamma_d_opt: float,
        gamma_deph: float = 0.0,
        delta_12: float = DEFAULT_DELTA_12_HZ,
        temperature: float = DEFAULT_TEMPERATURE_K,
    ) -> "SystemRates":
        """Build rates with gamma_plus fixed by detailed balance."""
        gp = gamma_minus * math.exp(-H_PLANCK * delta_12 / (K_BOLTZMANN * temperature))
        return cls(
            gamma_c=gamma_c,
            gamma_d_opt=gamma_d_opt,
            gamma_plus=gp,
            gamma_minus=gamma_minus,
            gamma_deph=gamma_deph,
            delta_12=delta_12,
            temperature=temperature,
        )


@dataclass(frozen=True, eq=False)
class JumpOperator:
    """One Lindblad collapse channel S_ij = sqrt(rate) |target><source|.

    Levels are 1-based; the matrix has its single nonzero entry at row
    target-1, column source-1.
    """

    source: int
    target: int
    rate: float
    matrix: np.ndarray = field(repr=False)


def build_hamiltonian(drive: DriveConfig) -> np.ndarray:
    """Lambda-system Hamiltonian H/hbar for the given drives.

    H = [[0, 0, Wc/2], [0, Dc-Dd, Wd/2], [Wc/2, Wd/2, Dc]].
    """
    return np.asarray(
        _kernels.hamiltonian_matrix(
            float(drive.omega_c), float(drive.omega_d), float(drive.delta_c), float(drive.delta_d)
        )
    )


def build_jump_operators(rates: SystemRates) -> list[JumpOperator]:
    """The five collapse channels, zero-rate ones included as no-ops."""
    stack = np.asarray(
        _kernels.jump_stack(
            float(rates.gamma_plus),
            float(rates.gamma_minus),
            float(rates.gamma_c),
            float(rates.gamma_d_opt),
            float(rates.gamma_deph),
        )
    )
    spec = [
        (1, 2, rates.gamma_plus),
        (2, 1, rates.gamma_minus),
        (3, 1, rates.gamma_c),
        (3, 2, rates.gamma_d_opt),
        (2, 2, rates.gamma_deph),
    ]
    return [
        JumpOperator(source=s, target=t, rate=r, matrix=stack[i])
        for i, (s, t, r) in enumerate(spec)
    ]


def _jump_matrix(j) -> np.ndarray:
    """Accept either a JumpOperator or a bare 3x3 matrix."""
    return np.asarray(getattr(j, "matrix", j), dtype=np.complex128)


def _jump_array(jumps) -> np.ndarray:
    if len(jumps) == 0:
        return np.zeros((0, 3, 3), dtype=np.complex128)
    return np.stack([_jump_matrix(j) for j in jumps])


def lindblad_rhs(rho: np.ndarray, ham: np.ndarray, jumps) -> np.ndarray:
    """Right-hand side of the master equation in matrix form.

    drho/dt = -i[H, rho] + sum_k (S_k rho S_k^dag - 1/2 {S_k^dag S_k, rho})
    """
    rho = np.asarray(rho, dtype=np.complex128)
    ham = np.asarray(ham, dtype=np.complex128)
    out = -1j * (ham @ rho - rho @ ham)
    for j in jumps:
        s = _jump_matrix(j)
        sds = s.conj().T @ s
        out += s @ rho @ s.conj().T - 0.5 * (sds @ rho + rho @ sds)
    return out


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-major vec: vec[i + 3j] = rho[i, j]."""
    return np.asarray(rho, dtype=np.complex128).reshape(9, order="F").copy()


def unvectorize(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.complex128).reshape((3, 3), order="F").copy()


def validate_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Check Hermiticity, trace and population bounds; return as complex."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (3, 3):
        raise BadInput(f"density matrix must be 3x3, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > _HERMITICITY_TOL:
        raise BadInput("density matrix is not Hermitian within 1e-10")
    tr = np.trace(rho)
    if abs(tr - 1.0) > _TRACE_TOL:
        raise BadInput(f"density matrix trace must be 1, got {tr!r}")
    diag = np.diag(rho)
    if np.max(np.abs(diag.imag)) > _TRACE_TOL:
        raise BadInput("density matrix has complex populations")
    if np.min(diag.real) < -_TRACE_TOL or np.max(diag.real) > 1.0 + _TRACE_TOL:
        raise BadInput("populations must lie in [0, 1]")
    return rho


def _rate_scale(ham: np.ndarray, jumps, t_final: float) -> float:
    scale = 1.0 / t_final
    m = float(np.max(np.abs(ham)))
    if m > scale:
        scale = m
    for j in jumps:
        if j.rate > scale:
            scale = float(j.rate)
    return scale


def _raise_for_status(status: int, n_steps: int, drift: float):
    if status == _kernels.STATUS_TRACE_DRIFT:
        raise NumericalInstability(
            f"trace drifted by {drift:.3e} (> 1e-6) during integration"
        )
    if status == _kernels.STATUS_STEP_UNDERFLOW:
        raise NumericalInstability("integrator step size underflow")
    if status == _kernels.STATUS_MAX_STEPS:
        raise NumericalInstability(f"integrator exceeded {n_steps} steps")


def evolve_trajectory(
    initial: np.ndarray,
    ham: np.ndarray,
    jumps,
    times,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    max_steps: int = 50_000_000,
    trace_tol: float = 1e-6,
) -> np.ndarray:
    """Integrate the master equation, returning rho at each requested time.

    ``times`` must be non-decreasing and non-negative; t=0 returns the
    initial state.
    """
    rho0 = validate_density_matrix(initial)
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise BadInput("times must be a non-empty 1-D array")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise BadInput("times must be non-decreasing and >= 0")
    ham = np.asarray(ham, dtype=np.complex128)
    liou = _kernels.build_liouvillian(np.ascontiguousarray(ham), _jump_array(jumps))
    states, status, n_steps, drift = _kernels.integrate_liouvillian(
        liou, vectorize(rho0), 0.0, times, rtol, atol, max_steps, trace_tol
    )
    _raise_for_status(status, n_steps, drift)
    out = np.empty((times.size, 3, 3), dtype=np.complex128)
    for i in range(times.size):
        out[i] = unvectorize(states[i])
    return out


def evolve_to_steady_state(
    initial: np.ndarray,
    ham: np.ndarray,
    jumps,
    t_final: float = 1e-6,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    steady_tol: float | None = None,
    max_steps: int = 50_000_000,
    trace_tol: float = 1e-6,
) -> np.ndarray:
    """Integrate to t_final and verify the state has stopped moving.

    The steadiness check compares max|drho/dt| at t_final against
    ``steady_tol`` (default 1e-6 times the largest rate in the problem)
    and raises NonConvergence with the residual if it fails.
    """
    if not t_final > 0:
        raise BadInput("t_final must be > 0")
    rho0 = validate_density_matrix(initial)
    ham = np.asarray(ham, dtype=np.complex128)
    liou = _kernels.build_liouvillian(np.ascontiguousarray(ham), _jump_array(jumps))
    times = np.array([float(t_final)])
    states, status, n_steps, drift = _kernels.integrate_liouvillian(
        liou, vectorize(rho0), 0.0, times, rtol, atol, max_steps, trace_tol
    )
    _raise_for_status(status, n_steps, drift)
    x = states[0]
    residual = float(np.max(np.abs(liou @ x)))
    if steady_tol is None:
        steady_tol = 1e-6 * _rate_scale(ham, jumps, t_final)
    if residual > steady_tol:
        raise NonConvergence(
            f"max|drho/dt| = {residual:.3e} at t_final exceeds steady "
            f"tolerance {steady_tol:.3e}",
            residual=residual,
        )
    return unvectorize(x)


def steady_state_direct(ham: np.ndarray, jumps) -> np.ndarray:
    """Steady state from the vectorized Liouvillian's null space.

    Solves L x = 0 with the trace row replacing the redundant ninth
    equation. Fast algebraic counterpart of ``evolve_to_steady_state``;
    the two agree to 1e-6 whenever the steady state is unique.
    """
    ham = np.asarray(ham, dtype=np.complex128)
    liou = _kernels.build_liouvillian(np.ascontiguousarray(ham), _jump_array(jumps))
    try:
        x, res = _kernels.steady_state_solve(liou)
    except np.linalg.LinAlgError as exc:
        raise NumericalInstability(f"steady-state solve failed: {exc}") from exc
    if not np.isfinite(res) or res > 1e-8:
        raise NumericalInstability(
            f"steady state is degenerate or ill-conditioned (relative residual {res:.3e})"
        )
    rho = unvectorize(x)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real
