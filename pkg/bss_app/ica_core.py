"""
Kurtosis-based deflationary ICA with an exact (algebraic) optimal step size.

Each component is extracted by gradient steps u <- u - μ_opt g whose step
maximizes |K| along the search line; μ_opt is picked among the real roots of
a quartic. Extracted components are removed by least-squares regression on the
data, and every iterate is Gram-Schmidt projected against earlier extractors.
"""
import cmath
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import null_space

from .errors import (DegeneratePolynomialError, InvalidArgumentError, NoStepError,
                     UndefinedContrastError)

logger = logging.getLogger(__name__)

# Leading coefficients below this fraction of the largest one are treated as zero
DEGREE_TOL = 1e-12
ROOT_RESIDUAL_TOL = 1e-8
# Roots whose imaginary part is below this (relative) are taken as real
REAL_ROOT_TOL = 1e-7
GRADIENT_FLOOR = 1e-12


@dataclass
class ExtractionState:
    u: np.ndarray
    iteration: int = 0
    mu_opt: float = 0.0
    converged: bool = False


@dataclass(frozen=True)
class Quartic:
    a: np.ndarray               # a_0..a_4 of p(μ) = Σ a_n μⁿ
    # |a_5| / max|a_n| of the cancelled quintic term, measured on the balanced line
    quintic_residual: float = 0.0

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=np.float64)
        if a.shape != (5,) or not np.all(np.isfinite(a)):
            raise InvalidArgumentError(f"quartic needs 5 finite coefficients, got {self.a!r}")
        object.__setattr__(self, 'a', a)

    def __call__(self, mu):
        return Polynomial(self.a)(mu)


@dataclass(frozen=True)
class IcaOptions:
    max_iter: int = 100
    conv_tol: float = 1e-6
    init: str = 'canonical'
    seed: int = 0


@dataclass
class BinDemixing:
    U: np.ndarray
    states: List[ExtractionState] = field(default_factory=list)
    partial: bool = False


def _line_contrast_terms(v: np.ndarray) -> Tuple[float, float]:
    """Numerator E|v|⁴ - 2E²|v|² - |E v²|² and power E|v|² of the contrast"""
    p2 = np.abs(v) ** 2
    m2 = float(np.mean(p2))
    m4 = float(np.mean(p2 ** 2))
    c2 = np.mean(v ** 2)
    return m4 - 2.0 * m2 ** 2 - abs(c2) ** 2, m2


def kurtosis(y: np.ndarray) -> float:
    """Normalized fourth-order cumulant (E|y|⁴ - 2E²|y|² - |E y²|²) / E²|y|²"""
    y = np.asarray(y, dtype=np.complex128)
    numerator, m2 = _line_contrast_terms(y)
    if not m2 > 0:
        raise UndefinedContrastError("kurtosis of a zero-energy signal is undefined")
    return numerator / m2 ** 2


def kurtosis_gradient(z: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Gradient of K(uᴴz) with respect to u*, scaled as ∂K/∂Re(u) + i·∂K/∂Im(u)"""
    Q = z.shape[1]
    y = u.conj() @ z
    p2 = np.abs(y) ** 2
    m2 = float(np.mean(p2))
    if not m2 > 0:
        raise UndefinedContrastError("gradient undefined: extractor output has zero energy")
    m4 = float(np.mean(p2 ** 2))
    c2 = np.mean(y ** 2)

    e_p2_yc_z = z @ (p2 * y.conj()) / Q
    e_y_z = z @ y / Q
    e_yc_z = z @ y.conj() / Q
    d_conj = ((2.0 * e_p2_yc_z - 2.0 * np.conj(c2) * e_y_z) / m2 ** 2
              - 2.0 * (m4 - abs(c2) ** 2) * e_yc_z / m2 ** 3)
    return 2.0 * d_conj


def step_poly(z: np.ndarray, u: np.ndarray, g: np.ndarray) -> Quartic:
    """
    Quartic whose real roots are the stationary points of μ -> K(y + μ·gy).

    N(μ) (degree 4) and q(μ) = E|y + μ·gy|² (degree 2) are recovered exactly by
    interpolating direct moment evaluations; p = N'q - 2Nq' then has a
    vanishing μ⁵ term, which is dropped.
    """
    y = u.conj() @ z
    gy = g.conj() @ z
    py = float(np.mean(np.abs(y) ** 2))
    pg = float(np.mean(np.abs(gy) ** 2))
    if not (py > 0 and pg > 0):
        # K is constant along the line
        return Quartic(np.zeros(5))

    # Interpolate in t = μ / s so both ends of the line carry comparable power
    s = np.sqrt(py / pg)
    nodes = np.arange(-2.0, 3.0)
    num_vals = np.empty(5)
    pow_vals = np.empty(5)
    for i, t in enumerate(nodes):
        num_vals[i], pow_vals[i] = _line_contrast_terms(y + (s * t) * gy)
    num_t = np.linalg.solve(np.vander(nodes, 5, increasing=True), num_vals)
    pow_t = np.linalg.solve(np.vander(nodes[1:4], 3, increasing=True), pow_vals[1:4])

    N = Polynomial(num_t)
    q = Polynomial(pow_t)
    p = N.deriv() * q - 2.0 * N * q.deriv()
    coef_t = np.zeros(6)
    coef_t[:p.coef.size] = p.coef[:6]

    biggest = np.max(np.abs(coef_t[:5]))
    residual = abs(coef_t[5]) / biggest if biggest > 0 else 0.0
    # d/dt = s·d/dμ, so undoing μ = s·t divides a_n by s^(n+1)
    return Quartic(coef_t[:5] / s ** np.arange(1, 6), quintic_residual=residual)


def _solve_quadratic(c2: complex, c1: complex, c0: complex) -> List[complex]:
    disc = cmath.sqrt(c1 * c1 - 4.0 * c2 * c0)
    if abs(c1 + disc) < abs(c1 - disc):
        disc = -disc
    q = -0.5 * (c1 + disc)
    if q == 0:
        return [0j, 0j]
    return [q / c2, c0 / q]


def _solve_cubic(c3: complex, c2: complex, c1: complex, c0: complex) -> List[complex]:
    """Cardano on the depressed cubic t³ + P t + Q"""
    b, c, d = c2 / c3, c1 / c3, c0 / c3
    P = c - b * b / 3.0
    Qd = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
    sq = cmath.sqrt((Qd / 2.0) ** 2 + (P / 3.0) ** 3)
    A = -Qd / 2.0 + sq
    if abs(-Qd / 2.0 - sq) > abs(A):
        A = -Qd / 2.0 - sq
    if A == 0:
        return [-b / 3.0] * 3
    w = complex(A) ** (1.0 / 3.0)
    v = -P / (3.0 * w)
    omega = cmath.exp(2j * cmath.pi / 3.0)
    return [omega ** k * w + omega ** (-k) * v - b / 3.0 for k in range(3)]


def _solve_ferrari(c4: complex, c3: complex, c2: complex, c1: complex, c0: complex) -> List[complex]:
    b, c, d, e = c3 / c4, c2 / c4, c1 / c4, c0 / c4
    p = c - 3.0 * b * b / 8.0
    q = d - b * c / 2.0 + b ** 3 / 8.0
    r = e - b * d / 4.0 + b * b * c / 16.0 - 3.0 * b ** 4 / 256.0
    shift = -b / 4.0

    if abs(q) <= 1e-14 * max(1.0, abs(p), abs(r)):
        # Biquadratic: y⁴ + p y² + r
        roots = []
        for zz in _solve_quadratic(1.0, p, r):
            s = cmath.sqrt(zz)
            roots += [s + shift, -s + shift]
        return roots

    # Resolvent m³ + p m² + (p²/4 - r) m - q²/8 = 0; the largest root is nonzero
    m = max(_solve_cubic(1.0, p, p * p / 4.0 - r, -q * q / 8.0), key=abs)
    s = cmath.sqrt(2.0 * m)
    roots = _solve_quadratic(1.0, -s, p / 2.0 + m + q / (2.0 * s))
    roots += _solve_quadratic(1.0, s, p / 2.0 + m - q / (2.0 * s))
    return [y + shift for y in roots]


def _residual_ok(a: np.ndarray, roots: Sequence[complex]) -> bool:
    poly = Polynomial(a)
    bound = ROOT_RESIDUAL_TOL * np.max(np.abs(a))
    return all(abs(poly(r)) <= bound * max(1.0, abs(r)) ** 4 for r in roots)


def _polish(a: np.ndarray, roots: Sequence[complex], steps: int = 2) -> List[complex]:
    poly = Polynomial(a)
    dpoly = poly.deriv()
    polished = []
    for r in roots:
        best = complex(r)
        for _ in range(steps):
            slope = dpoly(best)
            if slope == 0:
                break
            candidate = best - poly(best) / slope
            if not np.isfinite(candidate) or abs(poly(candidate)) >= abs(poly(best)):
                break
            best = candidate
        polished.append(best)
    return polished


def solve_quartic(p: Quartic) -> List[complex]:
    """Ferrari/Cardano closed forms, falling back to companion-matrix eigenvalues; accepted by residual"""
    a = p.a
    scale = np.max(np.abs(a))
    if scale == 0:
        raise DegeneratePolynomialError("all step-polynomial coefficients are zero")
    c = a / scale
    significant = np.nonzero(np.abs(c) > DEGREE_TOL)[0]
    degree = int(significant[-1])
    if degree == 0:
        return []

    coeffs = [complex(v) for v in c[:degree + 1]]
    if degree == 1:
        roots = [-coeffs[0] / coeffs[1]]
    elif degree == 2:
        roots = _solve_quadratic(coeffs[2], coeffs[1], coeffs[0])
    elif degree == 3:
        roots = _solve_cubic(coeffs[3], coeffs[2], coeffs[1], coeffs[0])
    else:
        roots = _solve_ferrari(coeffs[4], coeffs[3], coeffs[2], coeffs[1], coeffs[0])

    truncated = c[:degree + 1]
    roots = _polish(truncated, roots)
    if _residual_ok(a, roots):
        return roots

    companion = _polish(truncated, np.roots(truncated[::-1]))
    logger.debug("closed-form quartic roots failed the residual test; using companion-matrix roots")
    return companion


def select_step(z: np.ndarray, u: np.ndarray, g: np.ndarray, roots: Sequence[complex]) -> float:
    """Real root maximizing |K(y + μ·gy)|; real parts of complex roots only when no root is real"""
    real = [r.real for r in roots if abs(r.imag) <= REAL_ROOT_TOL * max(1.0, abs(r))]
    candidates = real if real else [complex(r).real for r in roots]
    if not candidates:
        raise NoStepError("no step-size candidates")

    y = u.conj() @ z
    gy = g.conj() @ z
    best_mu: Optional[float] = None
    best_val = -np.inf
    for mu in candidates:
        try:
            val = abs(kurtosis(y + mu * gy))
        except UndefinedContrastError:
            continue
        if val > best_val:
            best_mu, best_val = float(mu), val
    if best_mu is None:
        raise NoStepError("every step-size candidate gives a zero-energy output")
    return best_mu


def _orthogonalize(u: np.ndarray, prior: Sequence[np.ndarray]) -> np.ndarray:
    # Two classical Gram-Schmidt passes
    for _ in range(2):
        for v in prior:
            u = u - np.vdot(v, u) * v
    return u


def extract_component(z: np.ndarray, u0: np.ndarray, prior: Sequence[np.ndarray],
                      opts: IcaOptions) -> Tuple[np.ndarray, np.ndarray, ExtractionState]:
    u = _orthogonalize(np.asarray(u0, dtype=np.complex128), prior)
    norm = np.linalg.norm(u)
    if not norm > 1e-8:
        raise InvalidArgumentError("initial extractor lies in the span of the previously extracted vectors")
    u = u / norm
    state = ExtractionState(u=u)

    for it in range(1, opts.max_iter + 1):
        state.iteration = it
        g = kurtosis_gradient(z, u)
        if np.linalg.norm(g) <= GRADIENT_FLOOR:
            state.converged = True
            break
        direction = -g
        try:
            roots = solve_quartic(step_poly(z, u, direction))
            mu = select_step(z, u, direction, roots)
        except DegeneratePolynomialError:
            # Contrast is flat along the search line
            state.converged = True
            break
        except NoStepError:
            logger.warning("extraction stalled at iteration %d: no usable step size", it)
            break

        y = u.conj() @ z
        before = abs(kurtosis(y))
        after = abs(kurtosis(y + mu * (direction.conj() @ z)))
        if after < before - 1e-9:
            logger.warning("extraction stalled at iteration %d: best step lowers |K| (%.3e < %.3e)", it, after, before)
            break

        u_new = _orthogonalize(u + mu * direction, prior)
        u_new = u_new / np.linalg.norm(u_new)
        dot = abs(np.vdot(u_new, u))
        u = u_new
        state.u, state.mu_opt = u, mu
        if dot >= 1.0 - opts.conv_tol:
            state.converged = True
            break

    state.u = u
    return u, u.conj() @ z, state


def deflate_subtract(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Remove the least-squares contribution h·y of y from every row of z"""
    energy = np.real(np.vdot(y, y))
    if not energy > 0:
        raise InvalidArgumentError("cannot deflate by a zero-energy component")
    h = z @ y.conj() / energy
    return z - np.outer(h, y)


def _initial_vector(n: int, N: int, prior: Sequence[np.ndarray], opts: IcaOptions,
                    rng: Optional[np.random.Generator]) -> np.ndarray:
    if rng is not None:
        u0 = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    else:
        u0 = np.zeros(N, dtype=np.complex128)
        u0[n] = 1.0
    if prior and np.linalg.norm(_orthogonalize(u0, prior)) <= 1e-6:
        u0 = null_space(np.array(prior).conj())[:, 0].astype(np.complex128)
    return u0 / np.linalg.norm(u0)


def demix_bin(z: np.ndarray, opts: IcaOptions) -> BinDemixing:
    """Extract all N components of one whitened bin; columns of U are the extractors."""
    N = z.shape[0]
    rng = np.random.default_rng(opts.seed) if opts.init == 'random' else None
    found: List[np.ndarray] = []
    result = BinDemixing(U=np.eye(N, dtype=np.complex128))
    zn = z

    for n in range(N):
        u0 = _initial_vector(n, N, found, opts, rng)
        try:
            u, y, state = extract_component(zn, u0, found, opts)
            if n < N - 1:
                zn = deflate_subtract(zn, y)
        except (UndefinedContrastError, InvalidArgumentError) as exc:
            logger.warning("component %d of %d could not be extracted: %s", n + 1, N, exc)
            result.partial = True
            break
        found.append(u)
        result.states.append(state)
        if not state.converged:
            result.partial = True

    if len(found) < N:
        # Complete from the orthogonal complement of what was found
        rest = null_space(np.array(found).conj()) if found else np.eye(N)
        found.extend(rest[:, :N - len(found)].T.astype(np.complex128))
    result.U = np.column_stack(found)
    return result
