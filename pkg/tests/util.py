"""Shared test helpers, including an independent steady-state oracle.

The oracle builds the superoperator with np.kron and extracts the null
space by dense eigendecomposition, deliberately sharing no code with the
package kernels.
"""

import numpy as np

from cptkit.constants import TWO_PI
from cptkit.cpt import CptFitParams, FixedRates

# representative drive/lifetime combinations used for round-trip fits:
# weak C drive, strong D drive, tens-of-picoseconds orbital relaxation
REFERENCE_SETS = {
    "a": {"omega_c_hz": 19.3e6, "omega_d_hz": 164e6, "t_minus_ps": 31.0},
    "b": {"omega_c_hz": 20.1e6, "omega_d_hz": 272e6, "t_minus_ps": 32.0},
    "c": {"omega_c_hz": 22.9e6, "omega_d_hz": 306e6, "t_minus_ps": 26.0},
}

DEFAULT_DELTA_12 = 831e9
DEFAULT_TEMPERATURE = 3.86
DEFAULT_TAU_SE = 4.55e-9
DEFAULT_BRANCH = 2.4


def make_params(omega_c_hz, omega_d_hz, t_minus_ps, gamma_deph=0.0) -> CptFitParams:
    return CptFitParams(
        omega_c=TWO_PI * omega_c_hz,
        omega_d=TWO_PI * omega_d_hz,
        gamma_minus=1.0 / (t_minus_ps * 1e-12),
        gamma_deph=gamma_deph,
        delta_12=DEFAULT_DELTA_12,
        temperature=DEFAULT_TEMPERATURE,
    )


def reference_params(key: str) -> CptFitParams:
    return make_params(**REFERENCE_SETS[key])


def default_fixed() -> FixedRates:
    return FixedRates.from_lifetime(DEFAULT_TAU_SE, DEFAULT_BRANCH)


def random_density_matrix(rng, n=3) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(rng, n=3, scale=1.0) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)


def liouvillian_oracle(ham, jump_matrices) -> np.ndarray:
    """Superoperator for column-major vec(rho), built with np.kron."""
    eye = np.eye(3)
    liou = -1j * (np.kron(eye, ham) - np.kron(ham.T, eye))
    for s in jump_matrices:
        sds = s.conj().T @ s
        liou = liou + np.kron(s.conj(), s)
        liou = liou - 0.5 * np.kron(eye, sds) - 0.5 * np.kron(sds.T, eye)
    return liou


def steady_state_oracle(ham, jump_matrices) -> np.ndarray:
    """Steady state from the eigenvector of the smallest |eigenvalue|."""
    liou = liouvillian_oracle(ham, jump_matrices)
    w, v = np.linalg.eig(liou)
    vec = v[:, int(np.argmin(np.abs(w)))]
    rho = vec.reshape((3, 3), order="F")
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho)


def rhs_oracle(rho, ham, jump_matrices) -> np.ndarray:
    """Textbook dissipator form, term by term."""
    out = -1j * (ham @ rho - rho @ ham)
    for s in jump_matrices:
        sds = s.conj().T @ s
        out = out + s @ rho @ s.conj().T - 0.5 * (sds @ rho + rho @ sds)
    return out
