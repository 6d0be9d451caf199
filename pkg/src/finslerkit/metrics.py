"""Concrete Finsler metric families and the axiom validator.

Six families, all with closed-form y- and x-derivatives implemented in the
kernels module:

``euclidean``
    F = |y| on all of R^n.
``minkowski-norm``
    The quartically perturbed norm F = ((|y|^2)^2 + c sum y_i^4)^(1/4);
    flat, reversible, non-Riemannian for c > 0.
``riemannian``
    Conformally flat metric F = lam(x)|y| with a Gaussian bump
    lam = 1 + amp * exp(-|x - center|^2 / (2 width^2)).
``randers``
    F = |y| + b(x).y with drift b_i = beta_i + kappa sin(x_{(i+1) mod n});
    requires |b| < 1 pointwise for ellipticity, non-reversible for b != 0.
``hyperbolic-half-plane``
    F = |y| / x_n on the upper half-space, constant curvature -1.
``round-sphere-patch``
    F = 2|y| / (1 + |x|^2) on a bounded stereographic chart of the unit
    sphere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels as K
from .errors import DegenerateInputError, DomainError, SingularityError
from .numcore import DEFAULT_FD_STEP, BOUNDARY_MARGIN_FACTOR, PatchSpec, as_coords

#: margin used when an evaluation backs a finite-difference stencil
EVAL_MARGIN = BOUNDARY_MARGIN_FACTOR * DEFAULT_FD_STEP

_FAMILY_CODES = {
    "euclidean": K.EUCLIDEAN,
    "minkowski-norm": K.MINKOWSKI,
    "riemannian": K.BUMP,
    "randers": K.RANDERS,
    "hyperbolic-half-plane": K.HYPERBOLIC,
    "round-sphere-patch": K.SPHERE,
}


@dataclass(frozen=True)
class FinslerMetric:
    """A metric family instance on a single coordinate patch.

    Immutable after construction; all evaluations are pure.  ``params`` is
    the packed parameter vector consumed by the kernels (layout documented
    in :mod:`finslerkit.kernels`), ``reversible`` is the declared claim that
    ``validate_finsler`` checks.
    """

    family: str
    dim: int
    params: np.ndarray
    patch: PatchSpec
    reversible: bool
    code: int = field(repr=False, default=-1)

    def __post_init__(self):
        if self.family not in _FAMILY_CODES:
            raise DegenerateInputError(f"unknown metric family {self.family!r}")
        p = np.ascontiguousarray(self.params, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "code", _FAMILY_CODES[self.family])

    def describe(self) -> dict:
        """Serializable descriptor (inverse of make_metric)."""
        d = {"family": self.family, "dim": self.dim}
        if self.family == "minkowski-norm":
            d["c"] = float(self.params[0])
        elif self.family == "riemannian":
            d["amp"] = float(self.params[0])
            d["width"] = float(self.params[1])
            d["center"] = [float(v) for v in self.params[2:]]
        elif self.family == "randers":
            d["kappa"] = float(self.params[0])
            d["beta"] = [float(v) for v in self.params[1:]]
        elif self.family == "round-sphere-patch":
            d["chart_radius"] = float(self.params[0])
        return d


def _box_patch(dim: int, half: float = 2.0) -> PatchSpec:
    return PatchSpec(dim=dim, sample_lo=(-half,) * dim, sample_hi=(half,) * dim)


def euclidean(dim: int = 2) -> FinslerMetric:
    return FinslerMetric("euclidean", dim, np.zeros(0), _box_patch(dim), True)


def minkowski_norm(dim: int = 2, c: float = 1.0) -> FinslerMetric:
    """Quartically perturbed norm; c >= 0 keeps the family elliptic."""
    if c < 0.0:
        raise DegenerateInputError("quartic coefficient c must be >= 0")
    return FinslerMetric(
        "minkowski-norm", dim, np.array([c]), _box_patch(dim), True
    )


def riemannian_bump(
    dim: int = 2,
    amp: float = 0.4,
    width: float = 1.2,
    center=None,
) -> FinslerMetric:
    """Conformal Gaussian-bump Riemannian metric lam(x)|y|."""
    if amp <= -1.0:
        raise DegenerateInputError("bump amplitude must exceed -1")
    if width <= 0.0:
        raise DegenerateInputError("bump width must be positive")
    c = np.zeros(dim) if center is None else as_coords(center, dim)
    params = np.concatenate(([amp, width], c))
    return FinslerMetric("riemannian", dim, params, _box_patch(dim), True)


def randers(dim: int = 2, beta=(0.5, 0.0), kappa: float = 0.0) -> FinslerMetric:
    """Randers metric |y| + b(x).y.

    The drift is b_i = beta_i + kappa sin(x_{(i+1) mod n}).  Construction
    only shape-checks; |b| < 1 is the validator's job so that deliberately
    invalid instances can be built and witnessed.
    """
    b = as_coords(beta, dim)
    params = np.concatenate(([kappa], b))
    reversible = bool(np.all(b == 0.0) and kappa == 0.0)
    return FinslerMetric("randers", dim, params, _box_patch(dim), reversible)


def hyperbolic_half_plane(dim: int = 2) -> FinslerMetric:
    bounds = tuple((-np.inf, np.inf) for _ in range(dim - 1)) + ((0.0, np.inf),)
    patch = PatchSpec(
        dim=dim,
        bounds=bounds,
        sample_lo=(-2.0,) * (dim - 1) + (0.3,),
        sample_hi=(2.0,) * (dim - 1) + (3.0,),
    )
    return FinslerMetric("hyperbolic-half-plane", dim, np.zeros(0), patch, True)


def round_sphere_patch(dim: int = 2, chart_radius: float = 3.0) -> FinslerMetric:
    """Stereographic chart of the round unit sphere, |x| < chart_radius."""
    if chart_radius <= 0.0:
        raise DegenerateInputError("chart radius must be positive")
    r = float(chart_radius)
    patch = PatchSpec(
        dim=dim,
        constraint=lambda x, _r=r: _r - float(np.linalg.norm(x)),
        sample_lo=(-0.45 * r,) * dim,
        sample_hi=(0.45 * r,) * dim,
    )
    return FinslerMetric(
        "round-sphere-patch", dim, np.array([r]), patch, True
    )


_CONSTRUCTORS = {
    "euclidean": euclidean,
    "minkowski-norm": minkowski_norm,
    "riemannian": riemannian_bump,
    "randers": randers,
    "hyperbolic-half-plane": hyperbolic_half_plane,
    "round-sphere-patch": round_sphere_patch,
}


def make_metric(descriptor: dict) -> FinslerMetric:
    """Build a metric from a harness-style descriptor dict."""
    d = dict(descriptor)
    family = d.pop("family", None)
    if family not in _CONSTRUCTORS:
        raise DegenerateInputError(f"unknown metric family {family!r}")
    ctor = _CONSTRUCTORS[family]
    try:
        return ctor(**d)
    except TypeError as exc:
        raise DegenerateInputError(f"bad parameters for {family}: {exc}") from None


def family_names() -> list:
    return sorted(_CONSTRUCTORS)


def evaluate_F(m: FinslerMetric, x, y, margin: float = 0.0) -> float:
    """The Finsler function F(x, y); 0 at y = 0 by continuity."""
    x = as_coords(x, m.dim)
    y = as_coords(y, m.dim)
    if not m.patch.contains(x, margin):
        raise DomainError(f"{x.tolist()} outside the {m.family} patch")
    if not np.any(y):
        return 0.0
    return float(K.finsler_F(m.code, m.params, x, y))


def energy(m: FinslerMetric, x, y) -> float:
    """E = F^2 / 2."""
    F = evaluate_F(m, x, y)
    return 0.5 * F * F


def fundamental_tensor(m: FinslerMetric, x, y) -> np.ndarray:
    """g_ij(x, y) = half the y-Hessian of F^2, in closed form."""
    x = as_coords(x, m.dim)
    y = as_coords(y, m.dim)
    if not m.patch.contains(x):
        raise DomainError(f"{x.tolist()} outside the {m.family} patch")
    if not np.any(y):
        raise SingularityError(
            "fundamental tensor undefined at y = 0 (F^2 is C^2 only on the "
            "slit tangent bundle)"
        )
    return np.asarray(K.fundamental(m.code, m.params, x, y))


@dataclass(frozen=True)
class AxiomCheck:
    """Outcome of one validated axiom."""

    name: str
    passed: bool
    worst: float
    witness: Optional[tuple] = None


@dataclass(frozen=True)
class ValidationReport:
    """Per-axiom verdicts from seeded sampling; deterministic under seed."""

    checks: tuple
    n_samples: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> AxiomCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            tag = "pass" if c.passed else "FAIL"
            lines.append(f"{c.name:<14} {tag}  worst={c.worst:.3e}")
        return "\n".join(lines)


def _sample_xy(m: FinslerMetric, rng: np.random.Generator, n: int):
    """Seeded (x, y) samples: patch points, direction x log-uniform radius."""
    xs = m.patch.sample(rng, n)
    dirs = rng.standard_normal((n, m.dim))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = 10.0 ** rng.uniform(-2.0, 2.0, size=n)
    return xs, dirs * radii[:, None]


def validate_finsler(m: FinslerMetric, n_samples: int = 200, seed: int = 0) -> ValidationReport:
    """Sample-check positivity, 1-homogeneity, ellipticity and reversibility.

    Reversibility compares the measured symmetry of F against the metric's
    declared ``reversible`` flag; a mismatch in either direction fails.
    """
    if n_samples < 1:
        raise DegenerateInputError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    xs, ys = _sample_xy(m, rng, n_samples)

    worst_pos = np.inf
    pos_wit = None
    worst_hom = 0.0
    hom_wit = None
    worst_eig = np.inf
    eig_wit = None
    worst_rev = 0.0
    rev_wit = None

    for x, y in zip(xs, ys):
        F = float(K.finsler_F(m.code, m.params, x, y))
        if F < worst_pos:
            worst_pos = F
            pos_wit = (tuple(x), tuple(y))
        for lam in (0.5, 2.0, 10.0):
            Fl = float(K.finsler_F(m.code, m.params, x, lam * y))
            rel = abs(Fl - lam * F) / max(abs(lam * F), 1e-300)
            if rel > worst_hom:
                worst_hom = rel
                hom_wit = (tuple(x), tuple(y), lam)
        g = np.asarray(K.fundamental(m.code, m.params, x, y))
        eig = float(np.linalg.eigvalsh(g)[0])
        if eig < worst_eig:
            worst_eig = eig
            eig_wit = (tuple(x), tuple(y))
        Fr = float(K.finsler_F(m.code, m.params, x, -y))
        rel = abs(Fr - F) / max(abs(F), 1e-300)
        if rel > worst_rev:
            worst_rev = rel
            rev_wit = (tuple(x), tuple(y), F, Fr)

    measured_reversible = worst_rev < 1e-9
    checks = (
        AxiomCheck("positivity", worst_pos > 0.0, worst_pos, pos_wit),
        AxiomCheck("homogeneity", worst_hom < 1e-9, worst_hom, hom_wit),
        AxiomCheck("ellipticity", worst_eig > 0.0, worst_eig, eig_wit),
        AxiomCheck(
            "reversibility",
            measured_reversible == m.reversible,
            worst_rev,
            rev_wit,
        ),
    )
    return ValidationReport(checks, n_samples, seed)
