"""Adsorption nonlinearities: forward map beta, inverse phi, pressure rho, energy psi.

Three families are supported:

* ``Freundlich(p, phi)`` -- porosity-weighted sublinear law
  ``beta(r) = phi*r + (1 - phi)*r**p`` with ``0 < p < 1`` and ``0 <= phi < 1``.
  The inverse has no closed form and is solved by bracketed bisection with a
  Newton finish.
* ``PowerLaw(m)`` -- defined through its inverse ``phi(s) = s**m``, ``m >= 1``,
  so ``beta(r) = r**(1/m)``.
* ``Linear()`` -- the identity, i.e. the nondegenerate reference case.

All maps are elementwise and accept floats or numpy arrays; scalar input gives
scalar output.  Negative arguments raise ``ValueError``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError

_BISECT_MAX = 60
_BISECT_REL = 1e-3  # hand over to Newton once the bracket is this tight
_NEWTON_MAX = 14


def _prepare(x, name: str):
    """Validate nonnegativity and return (array, was_scalar)."""
    arr = np.asarray(x, dtype=float)
    if arr.size and np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative, got min {arr.min()}")
    return arr, arr.ndim == 0


def _finish(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


class IsothermModel:
    """Strictly increasing forward map with beta(0) = 0 and its derived quantities.

    Subclasses provide the forward family (beta and derivatives, plus its
    antiderivative) and, where available, closed forms for the inverse.  All
    instances are immutable after construction and safe to share across
    threads; the optional phi lookup table is built once, before use.
    """

    inversion_tol: float = 1e-12

    # forward family ----------------------------------------------------
    def beta(self, r):
        raise NotImplementedError

    def beta_prime(self, r):
        raise NotImplementedError

    def beta_second(self, r):
        raise NotImplementedError

    def beta_integral(self, r):
        """Antiderivative of beta vanishing at 0."""
        raise NotImplementedError

    # inverse family -----------------------------------------------------
    def phi_prime_zero(self) -> float:
        """Limit of phi' at 0 (0 for degenerate families)."""
        raise NotImplementedError

    def phi(self, s):
        """Inverse of beta; generic implementation inverts numerically."""
        s_arr, scalar = _prepare(s, "s")
        out = self._invert_beta(s_arr)
        return _finish(out, scalar)

    def phi_prime(self, s):
        """phi'(s) = 1 / beta'(phi(s)) for s > 0, with the explicit limit at 0."""
        s_arr, scalar = _prepare(s, "s")
        out = np.full(s_arr.shape, self.phi_prime_zero(), dtype=float)
        pos = s_arr > 0
        if np.any(pos):
            r = self.phi(s_arr[pos])
            out[pos] = 1.0 / self.beta_prime(r)
        return _finish(out, scalar)

    def phi_second(self, s):
        """phi''(s) = -beta''(r) / beta'(r)**3 at r = phi(s), for s > 0."""
        s_arr, scalar = _prepare(s, "s")
        out = np.zeros(s_arr.shape, dtype=float)
        pos = s_arr > 0
        if np.any(pos):
            r = self.phi(s_arr[pos])
            out[pos] = -self.beta_second(r) / self.beta_prime(r) ** 3
        return _finish(out, scalar)

    def rho(self, w):
        """Mobility coefficient phi(w)/w, extended by its limit phi'(0) at w = 0."""
        w_arr, scalar = _prepare(w, "w")
        out = np.full(w_arr.shape, self.phi_prime_zero(), dtype=float)
        pos = w_arr > 0
        if np.any(pos):
            out[pos] = self.phi(w_arr[pos]) / w_arr[pos]
        return _finish(out, scalar)

    def psi(self, s):
        """Energy density: the antiderivative of phi vanishing at 0.

        Uses the identity  int_0^s phi = s*phi(s) - int_0^phi(s) beta,
        which is closed form for every family once phi(s) is known.
        """
        s_arr, scalar = _prepare(s, "s")
        r = self.phi(s_arr) if s_arr.ndim else np.asarray(self.phi(float(s_arr)))
        out = s_arr * r - self.beta_integral(r)
        return _finish(np.asarray(out, dtype=float), scalar)

    # vector maps between concentration z and density u -------------------
    def map_b(self, z):
        """Componentwise density u from concentration z: u = (beta(|z|_1)/|z|_1) z.

        ``z`` has species on axis 0; works for single points (shape (N,)) or
        stacked fields (shape (N, nx[, ny])).
        """
        z_arr, _ = _prepare(z, "z")
        r = z_arr.sum(axis=0)
        out = np.zeros_like(z_arr)
        pos = r > 0
        if np.any(pos):
            # beta(r) * (z/r) avoids overflow of beta(r)/r near r = 0
            out[..., pos] = self.beta(r[pos]) * (z_arr[..., pos] / r[pos])
        return out

    def map_b_inverse(self, u):
        """Concentration z from density u: z = rho(|u|_1) u (vacuum maps to 0)."""
        u_arr, _ = _prepare(u, "u")
        w = u_arr.sum(axis=0)
        return self.rho(w) * u_arr

    def regularize(self, eps: float) -> "RegularizedIsotherm":
        """Globally Lipschitz surrogate matching phi on [eps, 1/eps]."""
        return RegularizedIsotherm(self, eps)

    # structural metadata -------------------------------------------------
    @property
    def structural_a(self) -> float:
        """Declared lower bound for phi(s)/(s phi'(s))."""
        raise NotImplementedError

    @property
    def sm_exponent(self) -> float:
        """Declared exponent for the integral degeneracy condition."""
        raise NotImplementedError

    @property
    def is_degenerate(self) -> bool:
        return self.phi_prime_zero() == 0.0

    # numeric inversion ----------------------------------------------------
    def _bracket_hi(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _invert_beta(self, s: np.ndarray) -> np.ndarray:
        s_flat = np.atleast_1d(s).astype(float)
        out = np.zeros_like(s_flat)
        pos = s_flat > 0
        if np.any(pos):
            out[pos] = self._invert_positive(s_flat[pos])
        return out.reshape(np.shape(s)) if np.ndim(s) else out[0] * np.ones(())

    def _invert_positive(self, s: np.ndarray) -> np.ndarray:
        lo = np.zeros_like(s)
        hi = self._bracket_hi(s)
        # bisection until every lane has a tight relative bracket
        for _ in range(_BISECT_MAX):
            mid = 0.5 * (lo + hi)
            low = self.beta(mid) < s
            lo = np.where(low, mid, lo)
            hi = np.where(low, hi, mid)
            if np.all(hi - lo <= _BISECT_REL * np.maximum(mid, 1e-300)):
                break
        r = 0.5 * (lo + hi)
        # Newton finish, clipped to the bracket (beta' > 0 on (0, inf))
        for _ in range(_NEWTON_MAX):
            step = (self.beta(r) - s) / self.beta_prime(r)
            r_new = np.minimum(np.maximum(r - step, 0.25 * r), hi)
            if np.all(np.abs(r_new - r) <= 1e-16 * np.maximum(r, 1e-300)):
                r = r_new
                break
            r = r_new
        resid = np.abs(self.beta(r) - s)
        tol = self.inversion_tol * np.maximum(1.0, s)
        if np.any(resid > tol):
            k = int(np.argmax(resid - tol))
            raise NumericsError(
                "phi inversion failed to converge: "
                f"s={s.flat[k]!r} r={r.flat[k]!r} residual={resid.flat[k]!r} "
                f"bracket=({lo.flat[k]!r}, {hi.flat[k]!r})"
            )
        return r


class Freundlich(IsothermModel):
    """beta(r) = phi*r + (1 - phi)*r**p, degenerate (slow diffusion) for p < 1."""

    def __init__(self, p: float, phi: float, inversion_tol: float = 1e-12):
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must be in (0, 1), got {p}")
        if not 0.0 <= phi < 1.0:
            raise ValueError(f"phi must be in [0, 1), got {phi}")
        self.p = float(p)
        self.porosity = float(phi)
        self.inversion_tol = float(inversion_tol)
        self._phi_table = None

    def __repr__(self):
        return f"Freundlich(p={self.p}, phi={self.porosity})"

    def beta(self, r):
        r_arr, scalar = _prepare(r, "r")
        return _finish(self.porosity * r_arr + (1.0 - self.porosity) * r_arr**self.p, scalar)

    def beta_prime(self, r):
        r_arr, scalar = _prepare(r, "r")
        with np.errstate(divide="ignore"):
            out = self.porosity + (1.0 - self.porosity) * self.p * r_arr ** (self.p - 1.0)
        return _finish(out, scalar)

    def beta_second(self, r):
        r_arr, scalar = _prepare(r, "r")
        with np.errstate(divide="ignore"):
            out = (1.0 - self.porosity) * self.p * (self.p - 1.0) * r_arr ** (self.p - 2.0)
        return _finish(out, scalar)

    def beta_integral(self, r):
        r_arr, scalar = _prepare(r, "r")
        out = 0.5 * self.porosity * r_arr**2 + (1.0 - self.porosity) * r_arr ** (self.p + 1.0) / (self.p + 1.0)
        return _finish(out, scalar)

    def phi_prime_zero(self) -> float:
        return 0.0  # beta'(0+) = +inf for p < 1

    def phi(self, s):
        s_arr, scalar = _prepare(s, "s")
        if self._phi_table is not None:
            nodes, values = self._phi_table
            if s_arr.size and float(np.max(s_arr)) <= nodes[-1]:
                return _finish(np.interp(s_arr, nodes, values), scalar)
        return _finish(self._invert_beta(s_arr), scalar)

    def enable_phi_cache(self, s_max: float, n: int = 4096) -> None:
        """Build a log-spaced monotone lookup table for phi on [0, s_max].

        Nodes are solved exactly at build time; lookups are piecewise-linear
        and therefore approximate.  Intended for hot exploration loops, never
        for accuracy-checked paths.  Must be called before sharing the model
        across threads.
        """
        if s_max <= 0:
            raise ValueError("s_max must be positive")
        nodes = np.concatenate(([0.0], np.geomspace(s_max * 1e-12, s_max, n)))
        values = self._invert_beta(nodes)
        self._phi_table = (nodes, values)

    def _bracket_hi(self, s: np.ndarray) -> np.ndarray:
        # beta(r) >= phi*r and beta(r) >= (1-phi)*r**p give two upper bounds
        if self.porosity > 0:
            return np.maximum(1.0, s / self.porosity + s ** (1.0 / self.p))
        return np.maximum(1.0, s ** (1.0 / self.p))

    @property
    def structural_a(self) -> float:
        return self.p

    @property
    def sm_exponent(self) -> float:
        return 1.0 / self.p


class PowerLaw(IsothermModel):
    """phi(s) = s**m with m >= 1; beta(r) = r**(1/m)."""

    def __init__(self, m: float, inversion_tol: float = 1e-12):
        if m < 1.0:
            raise ValueError(f"m must be >= 1, got {m}")
        self.m = float(m)
        self.inversion_tol = float(inversion_tol)

    def __repr__(self):
        return f"PowerLaw(m={self.m})"

    def beta(self, r):
        r_arr, scalar = _prepare(r, "r")
        return _finish(r_arr ** (1.0 / self.m), scalar)

    def beta_prime(self, r):
        r_arr, scalar = _prepare(r, "r")
        with np.errstate(divide="ignore"):
            out = (1.0 / self.m) * r_arr ** (1.0 / self.m - 1.0)
        return _finish(out, scalar)

    def beta_second(self, r):
        r_arr, scalar = _prepare(r, "r")
        c = (1.0 / self.m) * (1.0 / self.m - 1.0)
        with np.errstate(divide="ignore"):
            out = c * r_arr ** (1.0 / self.m - 2.0)
        return _finish(out, scalar)

    def beta_integral(self, r):
        r_arr, scalar = _prepare(r, "r")
        q = 1.0 + 1.0 / self.m
        return _finish(r_arr**q / q, scalar)

    def phi(self, s):
        s_arr, scalar = _prepare(s, "s")
        return _finish(s_arr**self.m, scalar)

    def phi_prime(self, s):
        s_arr, scalar = _prepare(s, "s")
        if self.m == 1.0:
            return _finish(np.ones_like(s_arr), scalar)
        return _finish(self.m * s_arr ** (self.m - 1.0), scalar)

    def phi_second(self, s):
        s_arr, scalar = _prepare(s, "s")
        if self.m == 1.0:
            return _finish(np.zeros_like(s_arr), scalar)
        with np.errstate(divide="ignore"):
            out = self.m * (self.m - 1.0) * s_arr ** (self.m - 2.0)
        return _finish(out, scalar)

    def phi_prime_zero(self) -> float:
        return 1.0 if self.m == 1.0 else 0.0

    @property
    def structural_a(self) -> float:
        return 1.0 / self.m

    @property
    def sm_exponent(self) -> float:
        return self.m


class Linear(IsothermModel):
    """Identity map: nondegenerate diffusion with unit mobility."""

    def __init__(self, inversion_tol: float = 1e-12):
        self.inversion_tol = float(inversion_tol)

    def __repr__(self):
        return "Linear()"

    def beta(self, r):
        r_arr, scalar = _prepare(r, "r")
        return _finish(r_arr.copy(), scalar)

    def beta_prime(self, r):
        r_arr, scalar = _prepare(r, "r")
        return _finish(np.ones_like(r_arr), scalar)

    def beta_second(self, r):
        r_arr, scalar = _prepare(r, "r")
        return _finish(np.zeros_like(r_arr), scalar)

    def beta_integral(self, r):
        r_arr, scalar = _prepare(r, "r")
        return _finish(0.5 * r_arr**2, scalar)

    def phi(self, s):
        s_arr, scalar = _prepare(s, "s")
        return _finish(s_arr.copy(), scalar)

    def phi_prime(self, s):
        s_arr, scalar = _prepare(s, "s")
        return _finish(np.ones_like(s_arr), scalar)

    def phi_second(self, s):
        s_arr, scalar = _prepare(s, "s")
        return _finish(np.zeros_like(s_arr), scalar)

    def phi_prime_zero(self) -> float:
        return 1.0

    @property
    def structural_a(self) -> float:
        return 1.0

    @property
    def sm_exponent(self) -> float:
        return 1.0


class RegularizedIsotherm(IsothermModel):
    """Tangent extension of a base phi outside [eps, 1/eps].

    Inside the window phi matches the base exactly; outside it continues
    linearly with the tangent slope at the junction, clamped at zero below
    (so phi(0) = 0 holds).  Globally Lipschitz with constant phi'(1/eps).
    """

    def __init__(self, base: IsothermModel, eps: float):
        if not 0.0 < eps < 1.0:
            raise ValueError(f"eps must be in (0, 1), got {eps}")
        self.base = base
        self.eps = float(eps)
        self.inversion_tol = base.inversion_tol
        self._lo = float(eps)
        self._hi = 1.0 / float(eps)
        self._phi_lo = float(base.phi(self._lo))
        self._phi_hi = float(base.phi(self._hi))
        self._slope_lo = float(base.phi_prime(self._lo))
        self._slope_hi = float(base.phi_prime(self._hi))
        # where the lower tangent crosses zero; phi is clamped to 0 before it
        self._x0 = max(0.0, self._lo - self._phi_lo / self._slope_lo)

    def __repr__(self):
        return f"RegularizedIsotherm({self.base!r}, eps={self.eps})"

    def _tangent_lo(self, s):
        return self._phi_lo + self._slope_lo * (s - self._lo)

    def phi(self, s):
        s_arr, scalar = _prepare(s, "s")
        out = np.where(
            s_arr < self._lo,
            np.maximum(0.0, self._tangent_lo(s_arr)),
            np.where(
                s_arr > self._hi,
                self._phi_hi + self._slope_hi * (s_arr - self._hi),
                self.base.phi(np.clip(s_arr, self._lo, self._hi)),
            ),
        )
        return _finish(np.asarray(out, dtype=float), scalar)

    def phi_prime(self, s):
        s_arr, scalar = _prepare(s, "s")
        out = np.where(
            s_arr < self._lo,
            np.where(s_arr < self._x0, 0.0, self._slope_lo),
            np.where(
                s_arr > self._hi,
                self._slope_hi,
                self.base.phi_prime(np.clip(s_arr, self._lo, self._hi)),
            ),
        )
        return _finish(np.asarray(out, dtype=float), scalar)

    def phi_prime_zero(self) -> float:
        return 0.0 if self._x0 > 0.0 else self._slope_lo

    def psi(self, s):
        s_arr, scalar = _prepare(s, "s")

        def tangent_int(x):  # antiderivative of the lower tangent, zero at x0
            a = np.clip(x, self._x0, self._lo)
            return (
                self._phi_lo * (a - self._lo)
                + 0.5 * self._slope_lo * (a - self._lo) ** 2
                - (self._phi_lo * (self._x0 - self._lo) + 0.5 * self._slope_lo * (self._x0 - self._lo) ** 2)
            )

        below = tangent_int(s_arr)
        mid_cap = np.clip(s_arr, self._lo, self._hi)
        mid = np.where(
            s_arr > self._lo,
            np.asarray(self.base.psi(mid_cap)) - self.base.psi(self._lo),
            0.0,
        )
        above = np.where(
            s_arr > self._hi,
            self._phi_hi * (s_arr - self._hi) + 0.5 * self._slope_hi * np.maximum(s_arr - self._hi, 0.0) ** 2,
            0.0,
        )
        return _finish(np.asarray(below + mid + above, dtype=float), scalar)

    # pseudo-inverse of the clamped phi: smallest preimage at r = 0
    def beta(self, r):
        r_arr, scalar = _prepare(r, "r")
        out = np.where(
            r_arr <= 0.0,
            0.0,
            np.where(
                r_arr < self._phi_lo,
                self._lo + (r_arr - self._phi_lo) / self._slope_lo,
                np.where(
                    r_arr > self._phi_hi,
                    self._hi + (r_arr - self._phi_hi) / self._slope_hi,
                    self.base.beta(np.clip(r_arr, self._phi_lo, self._phi_hi)),
                ),
            ),
        )
        return _finish(np.asarray(out, dtype=float), scalar)

    def beta_prime(self, r):
        r_arr, scalar = _prepare(r, "r")
        out = np.where(
            r_arr < self._phi_lo,
            1.0 / self._slope_lo,
            np.where(
                r_arr > self._phi_hi,
                1.0 / self._slope_hi,
                self.base.beta_prime(np.clip(r_arr, self._phi_lo, self._phi_hi)),
            ),
        )
        return _finish(np.asarray(out, dtype=float), scalar)

    def beta_integral(self, r):
        r_arr, scalar = _prepare(r, "r")

        def seg_lo(x):  # integral of the inverse tangent piece from 0
            a = np.minimum(x, self._phi_lo)
            return self._lo * a + (0.5 * a**2 - self._phi_lo * a) / self._slope_lo

        below = seg_lo(r_arr)
        mid = np.where(
            r_arr > self._phi_lo,
            np.asarray(self.base.beta_integral(np.clip(r_arr, self._phi_lo, self._phi_hi)))
            - self.base.beta_integral(self._phi_lo),
            0.0,
        )
        d = np.maximum(r_arr - self._phi_hi, 0.0)
        above = self._hi * d + 0.5 * d**2 / self._slope_hi
        return _finish(np.asarray(below + mid + above, dtype=float), scalar)

    @property
    def structural_a(self) -> float:
        return self.base.structural_a

    @property
    def sm_exponent(self) -> float:
        return self.base.sm_exponent


@dataclass
class StructureReport:
    """Sampled structural diagnostics of a model on a declared range.

    Every reported infimum is taken over the sampled range only; nothing here
    is a global claim.
    """

    a_lower: float
    a_h2_ok: bool
    h3_min: float
    h3_ok: bool
    sm_constant: float
    sm_ok: bool
    m_used: float
    h1_ok: bool
    samples: int
    range: tuple[float, float]

    @property
    def all_ok(self) -> bool:
        return self.h1_ok and self.a_h2_ok and self.h3_ok and self.sm_ok

    def rows(self):
        """(property, range_lo, range_hi, value, pass) tuples for CSV output."""
        lo, hi = self.range
        return [
            ("h1_monotone", lo, hi, 1.0 if self.h1_ok else 0.0, self.h1_ok),
            ("a_lower", lo, hi, self.a_lower, self.a_h2_ok),
            ("h3_min", lo, hi, self.h3_min, self.h3_ok),
            ("sm_constant", lo, hi, self.sm_constant, self.sm_ok),
            ("m_used", lo, hi, self.m_used, self.sm_ok),
        ]


def check_structure(model: IsothermModel, s_min: float, s_max: float, n_samples: int) -> StructureReport:
    """Sample the structural ratios of a model over [s_min, s_max].

    Checks, on log-spaced samples: strict monotonicity of beta with beta(0)=0;
    the two-sided slope condition 1 <= s phi'/phi <= 1/a (reported through its
    sampled infimum a_lower of phi/(s phi')); the curvature bound
    s phi''/phi' >= -1/a; and the integral degeneracy constant
    inf f(r)/r**((m+1)/m) with f(r) = r beta(r) - int_0^r beta.

    All ratios are evaluated through the forward family at r = phi(s), which
    is exact for closed-form inverses and accurate to the inversion tolerance
    otherwise.  Restricted to s >= 0 since all states here are nonnegative.
    """
    if not (0.0 < s_min < s_max):
        raise ValueError(f"need 0 < s_min < s_max, got ({s_min}, {s_max})")
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")

    s = np.geomspace(s_min, s_max, n_samples)
    r = np.asarray(model.phi(s))
    bp = np.asarray(model.beta_prime(r))
    b = np.asarray(model.beta(r))

    # h1: beta(0) = 0, strictly increasing, positive slope
    h1_ok = (
        float(model.beta(0.0)) == 0.0
        and bool(np.all(np.diff(b) > 0))
        and bool(np.all(bp > 0))
    )

    # h2: s phi'/phi = beta(r) / (r beta'(r));  a_lower = inf of the reciprocal
    ratio = b / (r * bp)
    a_samples = (r * bp) / b
    a_lower = float(np.min(a_samples))
    a_h2_ok = bool(np.all(ratio >= 1.0 - 1e-9)) and a_lower >= model.structural_a * (1.0 - 1e-9)

    # h3: s phi''/phi' = -beta(r) beta''(r) / beta'(r)**2
    h3 = -b * np.asarray(model.beta_second(r)) / bp**2
    h3_min = float(np.min(h3))
    h3_ok = h3_min >= -1.0 / max(a_lower, 1e-300) - 1e-9

    # integral degeneracy: f(r) = r beta(r) - int_0^r beta >= c r**((m+1)/m)
    m_used = model.sm_exponent
    f = r * b - np.asarray(model.beta_integral(r))
    sm_samples = f / r ** ((m_used + 1.0) / m_used)
    sm_constant = float(np.min(sm_samples))
    sm_ok = m_used > 1.0 and sm_constant > 0.0

    return StructureReport(
        a_lower=a_lower,
        a_h2_ok=a_h2_ok,
        h3_min=h3_min,
        h3_ok=h3_ok,
        sm_constant=sm_constant,
        sm_ok=sm_ok,
        m_used=m_used,
        h1_ok=h1_ok,
        samples=int(n_samples),
        range=(float(s_min), float(s_max)),
    )
