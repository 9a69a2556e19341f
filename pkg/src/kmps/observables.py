"""Phase-space and counting-statistics diagnostics of computed states.

The Wigner function of a single mode is reconstructed from the
characteristic function ``chi(u, v) = Tr[rho D(alpha(u, v))]`` with the
displacement operator evaluated in the Fock basis, followed by a direct
double Fourier sum.  The distribution of the local field comes from the
generating function ``Tr[rho exp(i s Phi(0))]``, which for the momentum-
conserving sector equals the space-averaged vertex expectation times the
truncated normal-ordering factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hamiltonian import MpoOperator, dispersion, vertex_mpo
from .layout import ModeLayout, ModelKind
from .mps import MpsState, expectation
from .vertex import exp_ladder_series


@dataclass
class WignerGridSpec:
    n_char: int = 128        # characteristic-function samples per axis
    n_out: int = 129         # output grid points per axis (odd keeps the origin)
    boundary_tol: float = 1e-8
    max_doublings: int = 4


@dataclass
class WignerGrid:
    phi: np.ndarray
    pi: np.ndarray
    values: np.ndarray       # real, shape (len(phi), len(pi))
    omega: float

    def normalization(self) -> float:
        dphi = self.phi[1] - self.phi[0]
        dpi = self.pi[1] - self.pi[0]
        return float(self.values.sum() * dphi * dpi)

    def marginal_phi(self) -> np.ndarray:
        dpi = self.pi[1] - self.pi[0]
        return self.values.sum(axis=1) * dpi

    def marginal_pi(self) -> np.ndarray:
        dphi = self.phi[1] - self.phi[0]
        return self.values.sum(axis=0) * dphi


@dataclass
class FcsResult:
    s_grid: np.ndarray
    char_values: np.ndarray
    x_grid: np.ndarray
    distribution: np.ndarray


def displacement_grid(dim: int, alphas: np.ndarray) -> np.ndarray:
    """Fock matrix elements of D(alpha) for an array of displacements.

    Returns shape (dim, dim, len(alphas)); element (m, n) is
    ``exp(-|a|^2/2) <m| exp(a A^dag) exp(-conj(a) A) |n>`` with the ladder
    series expanded term by term (exact finite sum).
    """
    alphas = np.asarray(alphas, dtype=np.complex128).ravel()
    gauss = np.exp(-0.5 * np.abs(alphas) ** 2)
    out = np.empty((dim, dim, alphas.size), dtype=np.complex128)
    for m in range(dim):
        for n in range(dim):
            pref = math.sqrt(math.factorial(m) * math.factorial(n))
            acc = np.zeros(alphas.size, dtype=np.complex128)
            for j in range(max(0, n - m), n + 1):
                jp = j + m - n
                denom = math.factorial(jp) * math.factorial(j) * math.factorial(n - j)
                acc += (alphas ** jp) * ((-np.conj(alphas)) ** j) / denom
            out[m, n, :] = pref * gauss * acc
    return out


def hermite_wavefunctions(dim: int, omega: float, x: np.ndarray) -> np.ndarray:
    """Real oscillator eigenfunctions psi_n(x), shape (dim, len(x))."""
    x = np.asarray(x, dtype=np.float64)
    psi = np.zeros((dim, x.size))
    psi[0] = (omega / np.pi) ** 0.25 * np.exp(-0.5 * omega * x * x)
    if dim > 1:
        psi[1] = math.sqrt(2.0 * omega) * x * psi[0]
    for n in range(1, dim - 1):
        psi[n + 1] = (math.sqrt(2.0 * omega) * x * psi[n]
                      - math.sqrt(n) * psi[n - 1]) / math.sqrt(n + 1)
    return psi


def position_density(rdm: np.ndarray, omega: float, x: np.ndarray) -> np.ndarray:
    """Diagonal of rho in the field basis, from the Fock representation."""
    psi = hermite_wavefunctions(rdm.shape[0], omega, x)
    return np.einsum("mx,mn,nx->x", psi, rdm, psi).real


def wigner_single_mode(rdm: np.ndarray, omega: float,
                       grid_spec: WignerGridSpec = WignerGridSpec()) -> WignerGrid:
    """Wigner quasiprobability of one mode from its reduced density matrix.

    The characteristic function is sampled on a uniform grid whose extent
    is grown until the boundary magnitude is below ``boundary_tol``; the
    double Fourier transform is evaluated as two direct matrix products,
    so the output grid is chosen freely.  Raises if decay cannot be
    reached without violating the sampling limit of the given Fock space.
    """
    dim = rdm.shape[0]
    if rdm.shape != (dim, dim):
        raise ValueError("rdm must be square")
    tr = np.trace(rdm)
    if abs(tr - 1.0) > 1e-6:
        raise ValueError("rdm must have unit trace")

    nbar = float(np.real(np.trace(rdm @ np.diag(np.arange(dim)))))
    width = math.sqrt(2.0 * math.log(1.0 / grid_spec.boundary_tol))
    scale = math.sqrt(2.0 * nbar + 1.0)
    # support of the wavefunction sets the sampling (aliasing) limit
    phi_support = 1.5 * math.sqrt((2.0 * dim + 1.0) / omega)
    pi_support = 1.5 * math.sqrt((2.0 * dim + 1.0) * omega)

    u_max = width * scale * math.sqrt(2.0 * omega)
    v_max = width * scale * math.sqrt(2.0 / omega)
    n = grid_spec.n_char
    for attempt in range(grid_spec.max_doublings + 1):
        du = 2.0 * u_max / n
        dv = 2.0 * v_max / n
        if du * phi_support > math.pi or dv * pi_support > math.pi:
            raise ValueError("characteristic grid too coarse for this rdm; "
                             "increase n_char")
        u = -u_max + du * np.arange(n)
        v = -v_max + dv * np.arange(n)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        alphas = (vv * math.sqrt(omega / 2.0) - 1j * uu / math.sqrt(2.0 * omega)).ravel()
        dmats = displacement_grid(dim, alphas)
        chi = np.einsum("nm,mng->g", rdm, dmats).reshape(n, n)
        edge = max(np.abs(chi[0, :]).max(), np.abs(chi[-1, :]).max(),
                   np.abs(chi[:, 0]).max(), np.abs(chi[:, -1]).max())
        if edge < grid_spec.boundary_tol:
            break
        u_max *= 2.0
        v_max *= 2.0
    else:
        raise ValueError("characteristic function does not decay inside the grid")

    phi_out = min(phi_support, 0.9 * math.pi / du)
    pi_out = min(pi_support, 0.9 * math.pi / dv)
    phi = np.linspace(-phi_out, phi_out, grid_spec.n_out)
    pig = np.linspace(-pi_out, pi_out, grid_spec.n_out)
    eu = np.exp(1j * np.outer(u, phi))
    ev = np.exp(1j * np.outer(v, pig))
    w = np.real(np.einsum("up,uv,vq->pq", eu, chi, ev)) * du * dv / (2.0 * np.pi) ** 2
    return WignerGrid(phi=phi, pi=pig, values=w, omega=omega)


def field_variance_truncated(layout: ModeLayout, params) -> float:
    """Vacuum variance of Phi(0) in the truncated mode set, sum of 1/(2 w_k L)."""
    var = 0.0
    for k in layout.modes:
        if k == 0 and layout.model is ModelKind.SINE_GORDON:
            continue
        var += 1.0 / (2.0 * dispersion(layout.model, k, params) * params.length_L)
    return var


def fcs_field(psi: MpsState, layout: ModeLayout, s_grid: np.ndarray, params,
              x_grid: np.ndarray | None = None) -> FcsResult:
    """Full counting statistics of the local field (massive model only).

    The generating value at s is the expectation of the space-integrated
    vertex operator at exponent s divided by L (translation invariance of
    the momentum-zero sector) times the truncated normal-ordering factor
    ``exp(-s^2 var_T / 2)``, which converts the normal-ordered exponential
    back to the plain one.  The distribution follows by Fourier transform
    and is symmetrized to be real.
    """
    if layout.model is ModelKind.SINE_GORDON:
        raise ValueError("field statistics of the compact boson are not defined "
                         "for arbitrary exponents; massive model only")
    if psi.sector != 0:
        raise ValueError("FCS requires the momentum-zero sector")
    s_grid = np.asarray(s_grid, dtype=np.float64)
    var_t = field_variance_truncated(layout, params)
    L = params.length_L

    chi = np.empty(s_grid.size, dtype=np.complex128)
    cache: dict[float, complex] = {}
    for i, s in enumerate(s_grid):
        a = abs(float(s))
        if a not in cache:
            if a == 0.0:
                cache[a] = 1.0 + 0.0j
            else:
                op = vertex_mpo(layout, a, params)
                cache[a] = expectation(psi, op) / L
        val = cache[a] if s >= 0 else np.conj(cache[a])
        chi[i] = val * math.exp(-0.5 * s * s * var_t)

    if x_grid is None:
        sigma = math.sqrt(var_t) + 1.0 / (abs(s_grid).max() + 1e-12)
        x_grid = np.linspace(-6 * sigma, 6 * sigma, 257)
    ds = s_grid[1] - s_grid[0]
    kernel = np.exp(-1j * np.outer(x_grid, s_grid))
    p = np.real(kernel @ chi) * ds / (2.0 * np.pi)
    return FcsResult(s_grid=s_grid, char_values=chi, x_grid=np.asarray(x_grid),
                     distribution=p)


def local_trig_expectation_from_mpo(psi: MpsState, v_plus: MpoOperator,
                                    theta: float, kind: str) -> float:
    """Space-averaged cosine/sine of the field from a prebuilt vertex MPO."""
    val = expectation(psi, v_plus) / v_plus.layout.length_L
    phased = np.exp(-1j * theta) * val
    if kind == "cos":
        return float(phased.real)
    if kind == "sin":
        return float(phased.imag)
    raise ValueError("kind must be 'cos' or 'sin'")


def local_trig_expectation(psi: MpsState, layout: ModeLayout, params,
                           kind: str = "cos") -> float:
    """Ground-state order parameters ``< cos(a Phi - theta) >`` and the sine.

    Uses one vertex expectation: the minus-exponent operator is the
    adjoint, so the pair reduces to the real or imaginary part of the
    phased single expectation divided by L.
    """
    if layout.model is ModelKind.SINE_GORDON:
        alpha, theta = params.beta, 0.0
    else:
        alpha, theta = math.sqrt(4.0 * math.pi), params.theta
    v_plus = vertex_mpo(layout, alpha, params)
    val = expectation(psi, v_plus) / params.length_L
    phased = np.exp(-1j * theta) * val
    if kind == "cos":
        return float(phased.real)
    if kind == "sin":
        return float(phased.imag)
    raise ValueError("kind must be 'cos' or 'sin'")
