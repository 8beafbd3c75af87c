"""Identity-centered symmetry families: sampling, densities and moment fits.

SO(2) densities are with respect to arc length ``d theta``; the matrix-Fisher
density is with respect to the normalized Haar measure on SO(3).
"""
from __future__ import annotations

import functools
import math
from fractions import Fraction
import warnings
from dataclasses import dataclass, field
from typing import ClassVar, Union

import numpy as np
from scipy import optimize, special, stats

from . import groups
from .errors import ConfigError, DataError, DispersionError, SaturationError
from .frechet import MIN_RESULTANT, project_to_rotation
from .groups import SO2, SO3

S_MAX = 1e3
MIN_HALF_WIDTH = 1e-9
A_SERIES_CUTOFF = 1.0

MCMC_BURN_IN = 1000
MCMC_THIN = 10
MCMC_MAX_CHAINS = 64
MCMC_STEP_SCALE = 1.5


@dataclass(frozen=True)
class UniformArc2:
    half_width: float

    family: ClassVar[str] = "uniform_arc"
    group: ClassVar[str] = SO2

    def __post_init__(self):
        if not 0.0 < self.half_width <= np.pi + 1e-12:
            raise ConfigError(f"half_width must be in (0, pi], got {self.half_width}")
        object.__setattr__(self, "half_width", float(min(self.half_width, np.pi)))

    @property
    def params(self):
        return {"half_width": self.half_width}


@dataclass(frozen=True)
class WrappedGaussian2:
    sigma: float

    family: ClassVar[str] = "wrapped_gaussian"
    group: ClassVar[str] = SO2

    def __post_init__(self):
        if not self.sigma >= 0.0 or not np.isfinite(self.sigma):
            raise ConfigError(f"sigma must be finite and >= 0, got {self.sigma}")
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def params(self):
        return {"sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class MatrixFisher3:
    F: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    family: ClassVar[str] = "matrix_fisher"
    group: ClassVar[str] = SO3

    def __post_init__(self):
        f = np.array(self.F, dtype=float)
        if f.shape != (3, 3) or not np.all(np.isfinite(f)):
            raise ConfigError(f"F must be a finite 3x3 matrix, got shape {f.shape}")
        f.flags.writeable = False
        object.__setattr__(self, "F", f)

    def __eq__(self, other):
        return isinstance(other, MatrixFisher3) and np.array_equal(self.F, other.F)

    def __hash__(self):
        return hash(self.F.tobytes())

    def __repr__(self):
        return f"MatrixFisher3(F={self.F.tolist()})"

    @property
    def params(self):
        return {"F": self.F.tolist()}

    def proper_svd(self):
        return proper_svd(self.F)

    def mode(self):
        u, _, vt = proper_svd(self.F)
        return groups.matrix_to_quat(u @ vt)


SymmetryModel = Union[UniformArc2, WrappedGaussian2, MatrixFisher3]

FAMILIES = {cls.family: cls for cls in (UniformArc2, WrappedGaussian2, MatrixFisher3)}


def family_group(family: str) -> str:
    try:
        return FAMILIES[family].group
    except KeyError:
        raise ConfigError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}") from None


def model_to_json(model: SymmetryModel) -> dict:
    return {"family": model.family, **model.params}


def model_from_json(obj) -> SymmetryModel:
    if not isinstance(obj, dict) or "family" not in obj:
        raise DataError(f"malformed symmetry model {obj!r}")
    family = obj["family"]
    try:
        if family == "uniform_arc":
            return UniformArc2(float(obj["half_width"]))
        if family == "wrapped_gaussian":
            return WrappedGaussian2(float(obj["sigma"]))
        if family == "matrix_fisher":
            return MatrixFisher3(np.asarray(obj["F"], dtype=float))
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise DataError(f"malformed {family} model: {exc}") from None
    raise DataError(f"unknown family {family!r}")


def proper_svd(m):
    """SVD with ``det(U) = det(V) = +1``; the last singular value may go negative."""
    u, s, vt = np.linalg.svd(m)
    s = s.copy()
    if np.linalg.det(u) < 0:
        u = u.copy()
        u[:, -1] *= -1.0
        s[-1] *= -1.0
    if np.linalg.det(vt) < 0:
        vt = vt.copy()
        vt[-1] *= -1.0
        s[-1] *= -1.0
    return u, s, vt


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample(model: SymmetryModel, n: int, rng) -> np.ndarray:
    """Draw ``n`` i.i.d. rotations (angles or canonical quaternions)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng)
    if isinstance(model, UniformArc2):
        u = rng.uniform(0.0, 1.0, size=n)
        return groups.wrap_angle(model.half_width * (2.0 * u - 1.0))
    if isinstance(model, WrappedGaussian2):
        return groups.wrap_angle(model.sigma * rng.standard_normal(n))
    if isinstance(model, MatrixFisher3):
        return sample_matrix_fisher(model.F, n, rng)[0]
    raise TypeError(f"not a symmetry model: {model!r}")


def mcmc_step_sizes(F):
    """Per-principal-axis proposal scales and the frame they are expressed in.

    Rotating about principal axis ``i`` is penalized by ``s_j + s_k``, so each
    axis gets a step inversely proportional to the square root of that.
    """
    _, s, vt = proper_svd(F)
    pair = np.array([s[1] + s[2], s[0] + s[2], s[0] + s[1]])
    steps = MCMC_STEP_SCALE / np.sqrt(1.0 + np.maximum(pair, 0.0))
    return steps, vt.T


def sample_matrix_fisher(F, n, rng):
    """Metropolis sampler on SO(3) for density ``exp(tr(F^T R))``.

    Runs up to 64 independent chains in lockstep, each started from a Haar
    draw, with 1000 burn-in steps and thinning by 10. Proposals are
    ``R' = R exp(xi)``, ``xi`` a zero-mean Gaussian in the principal frame of
    ``F``; the kernel is symmetric with respect to Haar measure so the
    acceptance ratio is ``exp(tr(F^T (R' - R)))``.

    Returns ``(quats, acceptance_rate)``.
    """
    F = np.asarray(F, dtype=float)
    rng = np.random.default_rng(rng)
    n_chains = min(n, MCMC_MAX_CHAINS)
    per_chain = -(-n // n_chains)
    steps, frame = mcmc_step_sizes(F)

    q = groups.sample_haar(SO3, n_chains, rng)
    energy = np.einsum("ij,nij->n", F, groups.quat_to_matrix(q))
    out = np.empty((per_chain, n_chains, 4))
    accepted = 0
    proposed = 0
    total = MCMC_BURN_IN + per_chain * MCMC_THIN
    for t in range(total):
        xi = (rng.standard_normal((n_chains, 3)) * steps) @ frame.T
        cand = groups.so3_compose(q, groups.so3_exp(xi))
        cand_energy = np.einsum("ij,nij->n", F, groups.quat_to_matrix(cand))
        log_u = np.log(rng.uniform(size=n_chains))
        accept = log_u < cand_energy - energy
        q = np.where(accept[:, None], cand, q)
        energy = np.where(accept, cand_energy, energy)
        if t >= MCMC_BURN_IN:
            accepted += int(accept.sum())
            proposed += n_chains
            k, r = divmod(t - MCMC_BURN_IN + 1, MCMC_THIN)
            if r == 0:
                out[k - 1] = q
    return out.reshape(-1, 4)[:n], accepted / max(proposed, 1)


def reference_sample(model: SymmetryModel, n: int, rng=None) -> np.ndarray:
    """Deterministic equal-mass ``n``-point stand-in for ``model``.

    SO(2) families use the inverse CDF at midpoints ``(i + 1/2) / n``;
    matrix-Fisher has no closed-form quantiles and falls back to sampling.
    """
    u = (np.arange(n) + 0.5) / n
    if isinstance(model, UniformArc2):
        return groups.wrap_angle(model.half_width * (2.0 * u - 1.0))
    if isinstance(model, WrappedGaussian2):
        return groups.wrap_angle(model.sigma * stats.norm.ppf(u))
    return sample(model, n, rng)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=4096)
def _log_normalizer_cached(f_bytes: bytes, n_mc: int, seed: int) -> float:
    F = np.frombuffer(f_bytes, dtype=float).reshape(3, 3)
    rot = groups.quat_to_matrix(groups.sample_haar(SO3, n_mc, np.random.default_rng(seed)))
    energy = np.einsum("ij,nij->n", F, rot)
    return float(special.logsumexp(energy) - math.log(n_mc))


def fisher_log_normalizer(F, n_mc: int = 10_000, seed: int = 0) -> float:
    """Monte-Carlo ``log E_Haar[exp(tr(F^T R))]``, memoized per ``(F, n_mc, seed)``."""
    if n_mc < 1000:
        raise ValueError("n_mc must be >= 1000")
    F = np.ascontiguousarray(F, dtype=float)
    if not F.any():
        return 0.0
    return _log_normalizer_cached(F.tobytes(), int(n_mc), int(seed))


def _wrapped_gaussian_logpdf(theta, sigma):
    theta = np.asarray(theta, dtype=float)
    if sigma == 0.0:
        return np.where(theta == 0.0, np.inf, -np.inf)
    k_max = 1 + int(math.ceil(6.0 * sigma / (2.0 * np.pi)))
    ks = np.arange(-k_max, k_max + 1)
    shifted = theta[..., None] + 2.0 * np.pi * ks
    terms = stats.norm.logpdf(shifted, scale=sigma)
    return special.logsumexp(terms, axis=-1)


def log_density(model: SymmetryModel, g, *, n_mc: int = 10_000, seed: int = 0):
    """Normalized log-density at rotation(s) ``g``; ``-inf`` off a uniform arc."""
    if isinstance(model, (UniformArc2, WrappedGaussian2)):
        theta = groups.wrap_angle(np.asarray(getattr(g, "angle", g), dtype=float))
        if isinstance(model, UniformArc2):
            inside = np.abs(theta) <= model.half_width
            out = np.where(inside, -math.log(2.0 * model.half_width), -np.inf)
        else:
            out = _wrapped_gaussian_logpdf(theta, model.sigma)
    elif isinstance(model, MatrixFisher3):
        q = np.asarray(getattr(g, "quat", g), dtype=float)
        energy = np.einsum("ij,...ij->...", model.F, groups.quat_to_matrix(q))
        out = energy - fisher_log_normalizer(model.F, n_mc, seed)
    else:
        raise TypeError(f"not a symmetry model: {model!r}")
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# The moment ratio A(s) = coth(s) - 1/s and its inverse
# ---------------------------------------------------------------------------

def _langevin_coeffs(n_terms=20):
    # A(s) = sum_n 2^(2n) B_2n s^(2n-1) / (2n)!, convergent for |s| < pi.
    # Bernoulli numbers are built exactly; scipy's are only good to ~1e-12.
    b = [Fraction(1)]
    for m in range(1, 2 * n_terms + 1):
        b.append(-sum(math.comb(m + 1, j) * b[j] for j in range(m)) / (m + 1))
    c = [4 ** n * b[2 * n] / math.factorial(2 * n) for n in range(1, n_terms + 1)]
    cp = [x * (2 * n - 1) for n, x in enumerate(c, start=1)]
    return np.array([float(x) for x in c[::-1]]), np.array([float(x) for x in cp[::-1]])


_A_SERIES, _A_PRIME_SERIES = _langevin_coeffs()


def a_ratio(s: float) -> float:
    """``A(s) = coth(s) - 1/s``, the mean cosine-like ratio of the 3D Langevin law."""
    s = float(s)
    if s < 0:
        return -a_ratio(-s)
    if s < A_SERIES_CUTOFF:
        # the closed form cancels badly for small s
        return s * float(np.polyval(_A_SERIES, s * s))
    return 1.0 / math.tanh(s) - 1.0 / s


def _a_ratio_prime(s: float) -> float:
    if s < A_SERIES_CUTOFF:
        return float(np.polyval(_A_PRIME_SERIES, s * s))
    csch2 = 0.0 if s > 350.0 else 1.0 / math.sinh(s) ** 2
    return 1.0 / (s * s) - csch2


def _invert_a(a: float, max_iter: int = 100):
    """Safeguarded Newton for ``A(s) = a``; returns ``(s, newton_converged)``."""
    if a == 0.0:
        return 0.0, True
    # Banerjee-style initial guess for the 3D Langevin inverse
    s = a * (3.0 - a * a) / (1.0 - a * a)
    for _ in range(max_iter):
        f = a_ratio(s) - a
        fp = _a_ratio_prime(s)
        if f == 0.0:
            return s, True
        if fp <= 0.0:
            break
        s_new = s - f / fp
        if not s_new > 0.0:
            s_new = 0.5 * s
        if abs(s_new - s) <= 4e-15 * s_new or abs(f) <= 4.0 * np.spacing(a):
            return s_new, True
        s = s_new
    hi = max(2.0 / (1.0 - a), 1.0)
    s = optimize.bisect(lambda x: a_ratio(x) - a, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=2000)
    return s, False


def invert_a(a: float) -> float:
    """Concentration ``s >= 0`` with ``a_ratio(s) == a``, for ``a`` in ``[0, 1)``."""
    a = float(a)
    if not a >= 0.0:
        raise ValueError(f"invert_a expects a >= 0, got {a}")
    if a >= 1.0:
        raise SaturationError(f"moment ratio {a} >= 1 has no finite concentration")
    s, converged = _invert_a(a)
    if not converged:
        warnings.warn(f"Newton did not converge for a={a}; used bisection", RuntimeWarning)
    return s


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitReport:
    model: SymmetryModel
    robust_half_width: float | None = None
    flags: tuple = ()


def _centered_angles(rotations):
    theta = groups.as_poses(SO2, rotations)
    resultant = float(np.hypot(np.mean(np.sin(theta)), np.mean(np.cos(theta))))
    if resultant < MIN_RESULTANT:
        raise DispersionError(f"mean resultant length {resultant:.3g}: dispersion too high")
    return theta


def circular_std(rotations, ddof: int = 0) -> float:
    """Root-mean-square geodesic deviation from the identity.

    For identity-centered samples this is the Riemannian standard deviation;
    it equals ``a / sqrt(3)`` for a uniform arc of half width ``a``. As with
    ``np.std``, the squared sum is divided by ``n - ddof``; pass ``ddof=1``
    when the center was estimated from the same samples.
    """
    theta = _centered_angles(rotations)
    if len(theta) <= ddof:
        raise DataError(f"need more than ddof={ddof} samples")
    return float(np.sqrt(np.sum(theta**2) / (len(theta) - ddof)))


def _solve_concentration(d: float, flags: list) -> float:
    sign = -1.0 if d < 0 else 1.0
    a = abs(d)
    if a >= 1.0 or a_ratio(S_MAX) <= a:
        flags.append("saturated")
        return sign * S_MAX
    s, converged = _invert_a(a)
    if not converged:
        flags.append("newton_fallback")
    return sign * min(s, S_MAX)


def fit_report(family: str, rotations, ddof: int = 0) -> FitReport:
    """Moment fit of an identity-centered family to pre-normalized samples.

    ``ddof`` applies to the SO(2) spread estimate (see ``circular_std``) and
    is ignored for matrix-Fisher.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}")
    group = FAMILIES[family].group
    poses = groups.as_poses(group, rotations)
    if len(poses) < 2:
        raise DataError("fitting needs at least 2 samples")
    flags: list = []
    if family == "uniform_arc":
        theta = _centered_angles(poses)
        std = circular_std(theta, ddof)
        robust = min(np.pi, float(np.percentile(np.abs(theta), 95)) / 0.95)
        a = min(np.pi, math.sqrt(3.0) * std)
        if a < MIN_HALF_WIDTH:
            flags.append("dispersion_too_low")
            a = MIN_HALF_WIDTH
        robust = max(robust, MIN_HALF_WIDTH)
        return FitReport(UniformArc2(a), robust, tuple(flags))
    if family == "wrapped_gaussian":
        return FitReport(WrappedGaussian2(circular_std(poses, ddof)))
    mbar = groups.quat_to_matrix(poses).mean(axis=0)
    u, d, vt = proper_svd(mbar)
    s = np.array([_solve_concentration(di, flags) for di in d])
    return FitReport(MatrixFisher3(u @ np.diag(s) @ vt), None, tuple(dict.fromkeys(flags)))


def fit(family: str, rotations, ddof: int = 0) -> SymmetryModel:
    return fit_report(family, rotations, ddof).model


def mean_model(models) -> SymmetryModel:
    """Parameter average of same-family models (entrywise for ``F``)."""
    models = list(models)
    if not models:
        raise DataError("cannot average zero models")
    kind = type(models[0])
    if any(type(m) is not kind for m in models):
        raise DataError("cannot average models of different families")
    if kind is UniformArc2:
        return UniformArc2(float(np.mean([m.half_width for m in models])))
    if kind is WrappedGaussian2:
        return WrappedGaussian2(float(np.mean([m.sigma for m in models])))
    return MatrixFisher3(np.mean([m.F for m in models], axis=0))
