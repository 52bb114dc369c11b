"""Nonlinearities f, their potentials F and inverses F^{-1}.

A potential is anchored either at zero (``F(u) = int_0^u f``) or, for
nonlinearities integrable at minus infinity, at minus infinity
(``F(u) = int_{-inf}^u f``).  In the second case ``F(0)`` is the tail mass
``s0``.
"""

from __future__ import annotations

import json
import math
import threading
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .errors import ConventionError, DomainError, ModelDefinitionError, ModelNotFoundError
from .expr import compile_expression

FROM_ZERO = "from_zero"
FROM_MINUS_INFINITY = "from_minus_infinity"
CONVENTIONS = (FROM_ZERO, FROM_MINUS_INFINITY)

_QUAD_RTOL = 1e-12
_FD_STEP = 1e-6

RealFn = Callable[[float], float]


@dataclass(frozen=True)
class NonlinearModel:
    """A nonlinearity with f > 0 and f' >= 0 on ``valid_range``.

    ``F_from_zero`` / ``F_from_minus_infinity`` and their inverses are optional
    closed forms; anything missing is computed by quadrature / root finding.
    """

    name: str
    f: RealFn
    f_prime: RealFn
    f_second: RealFn | None = None
    integrable_at_minus_infinity: bool = False
    tail_mass: float | None = None
    F_from_zero: RealFn | None = None
    F_from_minus_infinity: RealFn | None = None
    F_inv_from_zero: RealFn | None = None
    F_inv_from_minus_infinity: RealFn | None = None
    valid_range: tuple[float, float] = (-math.inf, math.inf)
    convex: bool = True

    def __post_init__(self):
        if self.integrable_at_minus_infinity:
            if self.tail_mass is None or not (0.0 < self.tail_mass < math.inf):
                raise ModelDefinitionError(
                    f"{self.name}: integrable model needs a finite positive tail_mass"
                )
        self.check()

    def check(self, n: int = 401) -> None:
        """Sample f and f' on the valid range (clipped to [-20, 20])."""
        lo = max(self.valid_range[0], -20.0)
        hi = min(self.valid_range[1], 20.0)
        for u in np.linspace(lo, hi, n):
            fu = float(self.f(u))
            dfu = float(self.f_prime(u))
            if not fu > 0.0:
                raise ModelDefinitionError(f"{self.name}: f({u:g}) = {fu:g} is not positive")
            if dfu < -1e-9 * max(1.0, abs(fu)):
                raise ModelDefinitionError(f"{self.name}: f'({u:g}) = {dfu:g} is negative")

    def in_valid_range(self, u: float) -> bool:
        return self.valid_range[0] <= u <= self.valid_range[1]


def _fd_derivative(fn: RealFn) -> RealFn:
    def derivative(u):
        h = _FD_STEP * np.maximum(1.0, np.abs(u))
        return (fn(u + h) - fn(u - h)) / (2.0 * h)

    return derivative


# -- built-in models ---------------------------------------------------------


def _alt1_f(u):
    u = np.asarray(u, dtype=float)
    neg = u < 0
    safe_neg = np.where(neg, u, -1.0)
    out = np.where(neg, 1.0 / (safe_neg - 1.0) ** 2, 1.0 + 2.0 * u + 3.0 * u * u)
    return out[()] if out.ndim == 0 else out


def _alt1_fp(u):
    u = np.asarray(u, dtype=float)
    neg = u < 0
    safe_neg = np.where(neg, u, -1.0)
    out = np.where(neg, 2.0 / (1.0 - safe_neg) ** 3, 2.0 + 6.0 * u)
    return out[()] if out.ndim == 0 else out


def _alt1_fpp(u):
    u = np.asarray(u, dtype=float)
    neg = u < 0
    safe_neg = np.where(neg, u, -1.0)
    out = np.where(neg, 6.0 / (1.0 - safe_neg) ** 4, 6.0)
    return out[()] if out.ndim == 0 else out


def _alt1_F_tail(u):
    u = np.asarray(u, dtype=float)
    neg = u < 0
    safe_neg = np.where(neg, u, -1.0)
    out = np.where(neg, 1.0 / (1.0 - safe_neg), 1.0 + u + u * u + u**3)
    return out[()] if out.ndim == 0 else out


def _alt1_F_inv_tail(s):
    if s <= 1.0:
        return 1.0 - 1.0 / s
    # u^3 + u^2 + u + 1 = s has exactly one real root, and it is >= 0 here
    roots = np.roots([1.0, 1.0, 1.0, 1.0 - s])
    u = float(roots[np.argmin(np.abs(roots.imag))].real)
    for _ in range(3):
        u -= (1.0 + u + u * u + u**3 - s) / (1.0 + 2.0 * u + 3.0 * u * u)
    return u


def _nc_f(u):
    return 256.0 * u**5 / 45.0 - 64.0 * u**4 / 3.0 + 64.0 * u**3 / 3.0 + u + 1.0


def _nc_fp(u):
    return 256.0 * u**4 / 9.0 - 256.0 * u**3 / 3.0 + 64.0 * u**2 + 1.0


def _nc_fpp(u):
    return 1024.0 * u**3 / 9.0 - 256.0 * u**2 + 128.0 * u


def _nc_F(u):
    return 128.0 * u**6 / 135.0 - 64.0 * u**5 / 15.0 + 16.0 * u**4 / 3.0 + 0.5 * u * u + u


def _make_builtins() -> dict[str, Callable[[], NonlinearModel]]:
    return {
        "gelfand": lambda: NonlinearModel(
            name="gelfand",
            f=np.exp,
            f_prime=np.exp,
            f_second=np.exp,
            integrable_at_minus_infinity=True,
            tail_mass=1.0,
            F_from_zero=np.expm1,
            F_from_minus_infinity=np.exp,
            F_inv_from_zero=np.log1p,
            F_inv_from_minus_infinity=np.log,
        ),
        "alternative1": lambda: NonlinearModel(
            name="alternative1",
            f=_alt1_f,
            f_prime=_alt1_fp,
            f_second=_alt1_fpp,
            integrable_at_minus_infinity=True,
            tail_mass=1.0,
            F_from_zero=lambda u: _alt1_F_tail(u) - 1.0,
            F_from_minus_infinity=_alt1_F_tail,
            F_inv_from_minus_infinity=_alt1_F_inv_tail,
            F_inv_from_zero=lambda s: _alt1_F_inv_tail(s + 1.0),
        ),
        "alternative2": lambda: NonlinearModel(
            name="alternative2",
            f=lambda u: 1.0 + u * u,
            f_prime=lambda u: 2.0 * u,
            f_second=lambda u: 2.0 + 0.0 * u,
            F_from_zero=lambda u: u + u**3 / 3.0,
            valid_range=(0.0, math.inf),
        ),
        "nonconvex5": lambda: NonlinearModel(
            name="nonconvex5",
            f=_nc_f,
            f_prime=_nc_fp,
            f_second=_nc_fpp,
            F_from_zero=_nc_F,
            valid_range=(0.0, math.inf),
            convex=False,
        ),
    }


_BUILTINS = _make_builtins()
BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_model(name: str) -> NonlinearModel:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ModelNotFoundError(
            f"unknown model {name!r}; built-ins are {', '.join(BUILTIN_NAMES)}"
        ) from None


def model_from_expression(
    name: str,
    f_expr: str,
    integrable_at_minus_infinity: bool = False,
    tail_mass: float | None = None,
    valid_range: tuple[float, float] = (-math.inf, math.inf),
) -> NonlinearModel:
    """Build a model from an expression; derivatives use central differences.

    The integrability flag is taken to cover both f and f'.  A missing tail
    mass is computed once by quadrature.
    """
    f = compile_expression(f_expr)
    if integrable_at_minus_infinity and tail_mass is None:
        tail_mass, _ = quad(f, -math.inf, 0.0, epsabs=0.0, epsrel=_QUAD_RTOL, limit=200)
    fp = _fd_derivative(f)
    return NonlinearModel(
        name=name,
        f=f,
        f_prime=fp,
        f_second=_fd_derivative(fp),
        integrable_at_minus_infinity=integrable_at_minus_infinity,
        tail_mass=tail_mass,
        valid_range=valid_range,
    )


def load_model(path: str | Path) -> NonlinearModel:
    """Read a JSON model file.

    Keys: ``name``, ``f`` (expression), optional ``integrable_at_minus_infinity``,
    ``tail_mass`` and ``valid_range`` ([lo, hi], null for unbounded).
    """
    data = json.loads(Path(path).read_text())
    lo, hi = data.get("valid_range", [None, None])
    return model_from_expression(
        name=data.get("name", Path(path).stem),
        f_expr=data["f"],
        integrable_at_minus_infinity=bool(data.get("integrable_at_minus_infinity", False)),
        tail_mass=data.get("tail_mass"),
        valid_range=(-math.inf if lo is None else lo, math.inf if hi is None else hi),
    )


def resolve_model(spec: str) -> NonlinearModel:
    """A built-in name or a path to a JSON model file."""
    if spec in _BUILTINS:
        return builtin_model(spec)
    if Path(spec).is_file():
        return load_model(spec)
    raise ModelNotFoundError(f"{spec!r} is neither a built-in model nor a model file")


# -- potentials ---------------------------------------------------------------


_GL_HI = np.polynomial.legendre.leggauss(24)
_GL_LO = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class Potential:
    model: NonlinearModel
    convention: str
    s0: float
    _anchors: dict = field(default_factory=dict, compare=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, compare=False, repr=False)

    @property
    def closed_F(self) -> RealFn | None:
        if self.convention == FROM_ZERO:
            return self.model.F_from_zero
        return self.model.F_from_minus_infinity

    @property
    def closed_F_inv(self) -> RealFn | None:
        if self.convention == FROM_ZERO:
            return self.model.F_inv_from_zero
        return self.model.F_inv_from_minus_infinity

    def _segment(self, a: float, b: float) -> float:
        """int_a^b f for |b - a| <= 1.

        Fixed Gauss-Legendre at two orders; when they disagree the adaptive
        rule takes over.
        """
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        f = self.model.f
        hi = half * float(np.dot(_GL_HI[1], f(mid + half * _GL_HI[0])))
        lo = half * float(np.dot(_GL_LO[1], f(mid + half * _GL_LO[0])))
        if math.isfinite(hi) and abs(hi - lo) <= 1e-14 * abs(hi) + 1e-300:
            return hi
        val, _ = quad(f, a, b, epsabs=0.0, epsrel=_QUAD_RTOL, limit=200)
        return val

    def _anchor(self, k: int) -> float:
        """F at the integer k, memoized.

        Non-negative k (and every k under from_zero) is built cumulatively
        from 0; negative k under from_minus_infinity integrates the tail
        directly, which avoids s0 - int_k^0 f cancellation.
        """
        with self._lock:
            if k in self._anchors:
                return self._anchors[k]
            if k < 0 and self.convention == FROM_MINUS_INFINITY:
                val, _ = quad(self.model.f, -math.inf, k, epsabs=0.0, epsrel=_QUAD_RTOL, limit=200)
                self._anchors[k] = val
                return val
            step = 1 if k > 0 else -1
            j = k
            while j not in self._anchors:
                j -= step
            value = self._anchors[j]
            while j != k:
                value += self._segment(j, j + step)  # signed when step < 0
                j += step
                self._anchors[j] = value
            return value

    def _F_quad(self, u: float) -> float:
        if not self._anchors:
            with self._lock:
                self._anchors.setdefault(0, self.s0)
        k = math.floor(u) if (u < 0 and self.convention == FROM_MINUS_INFINITY) else int(math.trunc(u))
        base = self._anchor(k)
        if u == k:
            return base
        return base + self._segment(k, u)

    def F(self, u):
        closed = self.closed_F
        if closed is not None:
            return closed(u)
        if np.ndim(u) == 0:
            return self._F_quad(float(u))
        return np.array([self._F_quad(float(x)) for x in np.ravel(u)]).reshape(np.shape(u))

    def lower_bound(self) -> float:
        """Infimum of the range of F."""
        if self.convention == FROM_MINUS_INFINITY:
            return 0.0
        if self.model.integrable_at_minus_infinity:
            return -self.model.tail_mass
        lo = self.model.valid_range[0]
        return -math.inf if lo == -math.inf else float(self.F(lo))

    def F_inv(self, s: float) -> float:
        return invert_potential(self, s)


def potential(model: NonlinearModel, convention: str) -> Potential:
    if convention not in CONVENTIONS:
        raise ConventionError(f"unknown convention {convention!r}")
    if convention == FROM_MINUS_INFINITY:
        if not model.integrable_at_minus_infinity:
            raise ConventionError(
                f"{model.name} is not integrable at -inf; use the {FROM_ZERO} convention"
            )
        return Potential(model, convention, float(model.tail_mass))
    return Potential(model, convention, 0.0)


def invert_potential(pot: Potential, s: float) -> float:
    """Return u with F(u) = s."""
    s = float(s)
    lower = pot.lower_bound()
    below = s < lower if pot.convention == FROM_ZERO and not pot.model.integrable_at_minus_infinity else s <= lower
    if below or not math.isfinite(s):
        raise DomainError(f"s = {s!r} is outside the range of F ({pot.convention}, inf > {lower})")
    closed = pot.closed_F_inv
    if closed is not None:
        return float(closed(s))
    F = pot.F
    lo_limit = pot.model.valid_range[0]
    lo, hi = -1.0, 1.0
    if lo_limit > -math.inf:
        lo = lo_limit
    while F(lo) > s:
        lo *= 2.0
        if lo < -1e8:
            raise DomainError(f"could not bracket F^-1({s!r})")
    while F(hi) < s:
        lo, hi = hi, 2.0 * hi
    if F(lo) == s:
        return lo
    return _newton_bracketed(F, pot.model.f, s, lo, hi)


def _newton_bracketed(F, f, s: float, lo: float, hi: float) -> float:
    """Root of F(u) = s in [lo, hi] for increasing F with F' = f > 0.

    Newton steps, with bisection whenever a step leaves the current bracket.
    """
    u = 0.5 * (lo + hi)
    for _ in range(200):
        r = F(u) - s
        if r == 0.0:
            return u
        if r > 0:
            hi = u
        else:
            lo = u
        slope = float(f(u))
        nxt = u - r / slope if slope > 0 and math.isfinite(slope) else math.nan
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - u) <= 2 * np.finfo(float).eps * max(1.0, abs(u)) or hi - lo <= 1e-15 * max(1.0, abs(u)):
            return nxt
        u = nxt
    return u


def default_convention(model: NonlinearModel, alpha: float | None) -> str:
    """from_zero for alpha > 0 and Dirichlet, from_minus_infinity for alpha < 0."""
    if alpha is not None and alpha < 0:
        return FROM_MINUS_INFINITY
    return FROM_ZERO
