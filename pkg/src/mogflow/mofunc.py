"""Musielak-Orlicz functions G(z, xi), their regularization and numeric class checks.

An :class:`MOFunction` bundles a value and its z-derivative, both vectorized
over matching arrays of ``z`` and directions ``xi`` (shape (..., n+1)).
Direction-free functions accept ``xi=None``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad_vec

from .errors import (
    ClassViolation,
    DeltaSearchFailed,
    EpsilonOutOfRange,
    NonpositiveExponent,
    NotMonotone,
    OutOfRange,
)
from .expr import DirectionFunction, Expression
from .sphere import direction_sample

GI0 = "GI0"


@dataclass(frozen=True, eq=False)
class MOFunction:
    """A function G(z, xi) with its partial derivative in z.

    ``zderiv`` (z * G_z) and ``deriv2`` (G_zz) are optional closed forms;
    without them z * G_z is formed directly and G_zz by central differences.
    """

    name: str
    value_fn: Callable
    deriv_fn: Callable
    flags: frozenset = frozenset()
    zderiv_fn: Callable | None = None
    deriv2_fn: Callable | None = None
    direction_free: bool = True
    descriptor: dict | None = field(default=None, compare=False)

    def eval(self, z, xi=None):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(self.value_fn(np.asarray(z, dtype=float), xi), dtype=float)

    __call__ = eval

    def deriv(self, z, xi=None):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.asarray(self.deriv_fn(np.asarray(z, dtype=float), xi), dtype=float)

    def zderiv(self, z, xi=None):
        """z * G_z(z, xi), with the z -> 0 limit where a closed form is known."""
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.zderiv_fn is not None:
                return np.asarray(self.zderiv_fn(z, xi), dtype=float)
            out = z * self.deriv(z, xi)
            return np.where(z == 0.0, 0.0, out) if GI0 in self.flags else out

    def deriv2(self, z, xi=None):
        z = np.asarray(z, dtype=float)
        if self.deriv2_fn is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.asarray(self.deriv2_fn(z, xi), dtype=float)
        h = 1e-5 * np.maximum(np.abs(z), 1e-3)
        return (self.deriv(z + h, xi) - self.deriv(np.maximum(z - h, 0.0), xi)) / (
            z + h - np.maximum(z - h, 0.0))

    @property
    def in_gi0(self) -> bool:
        return GI0 in self.flags

    def __repr__(self):
        return f"MOFunction({self.name})"


def _weight(direction_weight):
    if direction_weight is None:
        return None, True
    weight = DirectionFunction(direction_weight)
    if weight.constant is not None:
        if weight.constant <= 0:
            raise ValueError("direction weight must be positive")
        return weight.constant, True
    return weight, False


def _apply_weight(weight, xi, values):
    if weight is None:
        return values
    if isinstance(weight, float):
        return weight * values
    if xi is None:
        raise ValueError("this function depends on the direction; pass xi")
    return weight(xi) * values


def make_power(q: float, direction_weight=None) -> MOFunction:
    """G(z, xi) = a(xi) z^q, a member of the increasing class for every q > 0."""
    q = float(q)
    if not q > 0:
        raise NonpositiveExponent(f"exponent must be positive, got {q}")
    weight, free = _weight(direction_weight)
    desc = {"family": "power", "exponent": q}
    if direction_weight is not None:
        desc["weight"] = direction_weight if isinstance(direction_weight, (str, int, float)) else "custom"
    return MOFunction(
        name=f"z^{q:g}" if direction_weight is None else f"a(xi) z^{q:g}",
        value_fn=lambda z, xi: _apply_weight(weight, xi, z**q),
        deriv_fn=lambda z, xi: _apply_weight(weight, xi, q * z ** (q - 1.0)),
        zderiv_fn=lambda z, xi: _apply_weight(weight, xi, q * z**q),
        deriv2_fn=lambda z, xi: _apply_weight(weight, xi, q * (q - 1.0) * z ** (q - 2.0)),
        flags=frozenset({GI0}),
        direction_free=free,
        descriptor=desc,
    )


def make_log() -> MOFunction:
    """Psi(t) = log t, for which z * Psi_z is identically one."""
    return MOFunction(
        name="log",
        value_fn=lambda z, xi: np.log(z),
        deriv_fn=lambda z, xi: 1.0 / z,
        zderiv_fn=lambda z, xi: np.ones_like(z),
        deriv2_fn=lambda z, xi: -1.0 / (z * z),
        descriptor={"family": "log"},
    )


ORLICZ_FAMILIES = {
    "xlog1p": (
        lambda t: t * np.log1p(t),
        lambda t: np.log1p(t) + t / (1.0 + t),
        lambda t: 1.0 / (1.0 + t) + 1.0 / (1.0 + t) ** 2,
    ),
    "expm1": (np.expm1, np.exp, np.exp),
    "log": (np.log, lambda t: 1.0 / t, lambda t: -1.0 / (t * t)),
}


def make_orlicz(phi, dphi=None, d2phi=None, *, name=None, gi0=False) -> MOFunction:
    """Direction-independent G(z, xi) = phi(z).

    ``phi`` is a callable (then ``dphi`` is required) or one of the family
    names ``"xlog1p"``, ``"expm1"``, ``"log"``. With ``gi0=True`` the
    increasing-class conditions are certified numerically and
    :class:`ClassViolation` is raised on failure.
    """
    desc = None
    if isinstance(phi, str):
        family = phi
        if family not in ORLICZ_FAMILIES:
            raise ValueError(f"unknown Orlicz family {family!r}")
        phi, dphi, d2phi = ORLICZ_FAMILIES[family]
        name = name or family
        desc = {"family": family}
    if dphi is None:
        raise ValueError("make_orlicz needs the derivative dphi")
    func = MOFunction(
        name=name or "orlicz",
        value_fn=lambda z, xi: phi(z),
        deriv_fn=lambda z, xi: dphi(z),
        deriv2_fn=None if d2phi is None else (lambda z, xi: d2phi(z)),
        descriptor=desc,
    )
    if gi0:
        report = certify(func, GI0)
        if not report.passed:
            raise ClassViolation(f"{func.name} is not in the increasing class: {report.detail}")
        func = MOFunction(func.name, func.value_fn, func.deriv_fn, frozenset({GI0}),
                          func.zderiv_fn, func.deriv2_fn, True, desc)
    return func


def make_expression(value: str, deriv: str, *, gi0=False, name=None) -> MOFunction:
    """G and G_z given as expressions in z and the direction components x1, x2, x3."""
    value_expr, deriv_expr = Expression(value), Expression(deriv)
    free = not (value_expr.uses_direction or deriv_expr.uses_direction)
    func = MOFunction(
        name=name or value,
        value_fn=lambda z, xi: value_expr(z, xi),
        deriv_fn=lambda z, xi: deriv_expr(z, xi),
        direction_free=free,
        descriptor={"family": "expression", "value": value, "deriv": deriv},
    )
    if gi0:
        report = certify(func, GI0)
        if not report.passed:
            raise ClassViolation(f"{func.name} is not in the increasing class: {report.detail}")
        func = MOFunction(func.name, func.value_fn, func.deriv_fn, frozenset({GI0}),
                          None, None, free, func.descriptor)
    return func


def psi_from_Psi(Psi: MOFunction) -> MOFunction:
    """psi(z, xi) = z * Psi_z(z, xi); its value at z = 0 is the limit (0 for the increasing class)."""
    def deriv(z, xi):
        return Psi.deriv(z, xi) + z * Psi.deriv2(z, xi)

    return MOFunction(
        name=f"z d/dz {Psi.name}",
        value_fn=lambda z, xi: Psi.zderiv(z, xi),
        deriv_fn=deriv,
        direction_free=Psi.direction_free,
    )


def function_from_descriptor(desc) -> MOFunction:
    """Build an MOFunction from a declarative descriptor such as ``{"family": "power", "exponent": 3}``."""
    if isinstance(desc, MOFunction):
        return desc
    desc = dict(desc)
    family = desc.pop("family", None)
    if family == "power":
        func = make_power(desc.pop("exponent"), desc.pop("weight", None))
    elif family == "log":
        func = make_log()
    elif family in ("xlog1p", "expm1"):
        func = make_orlicz(family, gi0=bool(desc.pop("gi0", True)))
    elif family == "orlicz":
        phi, dphi = Expression(desc.pop("phi")), Expression(desc.pop("dphi"))
        func = make_orlicz(lambda t: phi(t), lambda t: dphi(t), name=phi.source,
                           gi0=bool(desc.pop("gi0", False)))
    elif family == "expression":
        func = make_expression(desc.pop("value"), desc.pop("deriv"), gi0=bool(desc.pop("gi0", False)))
    else:
        raise ValueError(f"unknown function family {family!r}")
    if desc:
        raise ValueError(f"unknown keys for family {family!r}: {sorted(desc)}")
    return func


# ---------------------------------------------------------------------------
# regularization


def _smoothstep(t):
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def _probe_directions(funcs, dim, count):
    if all(f.direction_free for f in funcs):
        return None
    return direction_sample(dim, count)


def delta_constant(G: MOFunction, dim: int = 1, n_z: int = 2048, n_xi: int = 64) -> float:
    """Largest sampled d in (0, 1] with max s G_z(s, xi) <= 1 on [0, d], times 0.9."""
    s = np.linspace(0.0, 1.0, n_z + 1)[1:]
    xi = _probe_directions([G], dim, n_xi)
    if xi is None:
        worst = G.zderiv(s)
    else:
        worst = G.zderiv(s[:, None], xi[None, :, :]).max(axis=1)
    if not np.all(np.isfinite(worst)):
        raise DeltaSearchFailed(f"s G_z of {G.name} is not finite near 0")
    ok = np.maximum.accumulate(worst) <= 1.0
    if not ok[0]:
        raise DeltaSearchFailed(f"s G_z of {G.name} exceeds 1 already at s = {s[0]:.3g}")
    last = s[-1] if ok.all() else s[np.argmin(ok) - 1]
    return 0.9 * float(last)


def c0_constant(psi: MOFunction, dim: int = 1, n_z: int = 2048, n_xi: int = 64) -> float:
    """max(1, max of psi over [0, 2] x S^n) by dense sampling."""
    s = np.linspace(0.0, 2.0, n_z + 1)
    xi = _probe_directions([psi], dim, n_xi)
    values = psi.eval(s) if xi is None else psi.eval(s[:, None], xi[None, :, :])
    return max(1.0, float(np.max(values[np.isfinite(values)])))


@dataclass(frozen=True, eq=False)
class PsiHat:
    """psi regularized below 2*epsilon so that it behaves like G_z(s, x) s^(1+epsilon) near 0.

    Call as ``psi_hat(s, x)``; :meth:`antiderivative` gives the energy
    density int_0^s psi_hat(t, x) / t dt.
    """

    Psi: MOFunction
    G: MOFunction
    epsilon: float
    C0: float
    delta: float
    dim: int = 1
    psi: MOFunction = field(init=False)
    _base_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "psi", psi_from_Psi(self.Psi))

    @property
    def direction_free(self) -> bool:
        return self.Psi.direction_free and self.G.direction_free

    def low_branch(self, s, x=None):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.G.zderiv(s, x) * s**self.epsilon

    def __call__(self, s, x=None):
        s = np.asarray(s, dtype=float)
        eps = self.epsilon
        high = self.psi.eval(np.maximum(s, eps), x)
        low = self.low_branch(np.minimum(s, 2.0 * eps), x)
        chi = _smoothstep((s - eps) / eps)
        return np.where(s >= 2.0 * eps, high, np.where(s <= eps, low, (1.0 - chi) * low + chi * high))

    eval = __call__

    def _lower_integral(self, a, x):
        # int_0^a G_z(t) t^eps dt with t = a tau^(1/(1+eps)), which makes the weight constant
        eps = self.epsilon
        power = 1.0 / (1.0 + eps)
        scale = a ** (1.0 + eps) / (1.0 + eps)

        def integrand(tau):
            return self.G.deriv(a * tau**power, x)

        value, _ = quad_vec(integrand, 0.0, 1.0, epsrel=1e-10, epsabs=0.0, norm="max")
        return scale * value

    def _blend_integral(self, b, x):
        # int_eps^b psi_hat(t) / t dt for eps <= b <= 2 eps; smooth integrand
        eps = self.epsilon
        width = b - eps

        def integrand(tau):
            t = eps + width * tau
            return self(t, x) / t

        value, _ = quad_vec(integrand, 0.0, 1.0, epsrel=1e-10, epsabs=0.0, norm="max")
        return width * value

    def _base(self, x):
        key = None if x is None else np.ascontiguousarray(x).tobytes()
        if key not in self._base_cache:
            eps = self.epsilon
            if x is None:
                total = self._lower_integral(np.array(eps), None) + self._blend_integral(np.array(2.0 * eps), None)
            else:
                ones = np.ones(np.shape(x)[:-1])
                total = self._lower_integral(eps * ones, x) + self._blend_integral(2.0 * eps * ones, x)
            if len(self._base_cache) > 8:
                self._base_cache.clear()
            self._base_cache[key] = total
        return self._base_cache[key]

    def antiderivative(self, s, x=None):
        """Psi_hat(s, x) = int_0^s psi_hat(t, x) / t dt, vectorized over s (and x)."""
        s = np.asarray(s, dtype=float)
        eps = self.epsilon
        if x is None and not self.direction_free:
            raise ValueError("this regularization depends on the direction; pass x")
        x_full = None if x is None else np.broadcast_to(x, s.shape + (np.shape(x)[-1],))
        xkey = None if self.direction_free else x_full
        base = np.broadcast_to(self._base(xkey), s.shape)
        out = np.empty(s.shape)
        high = s >= 2.0 * eps
        if np.any(high):
            xs = None if x_full is None else x_full[high]
            out[high] = base[high] + self.Psi.eval(s[high], xs) - self.Psi.eval(
                np.full(int(high.sum()), 2.0 * eps), xs)
        low = ~high
        if np.any(low):
            sl = s[low]
            xs = None if xkey is None else xkey[low]
            a = np.minimum(sl, eps)
            value = np.zeros_like(a)
            pos = a > 0
            if np.any(pos):
                value[pos] = self._lower_integral(a[pos], None if xs is None else xs[pos])
            mid = sl > eps
            if np.any(mid):
                xm = None if xs is None else xs[mid]
                value[mid] += self._blend_integral(sl[mid], xm)
            out[low] = value
        return out


def regularize(Psi: MOFunction, G: MOFunction, epsilon: float, dim: int = 1,
               n_z: int = 2048, n_xi: int = 64) -> PsiHat:
    """Build the regularized psi_hat for a given epsilon in (0, delta)."""
    delta = delta_constant(G, dim, n_z, n_xi)
    epsilon = float(epsilon)
    if not 0.0 < epsilon < delta:
        raise EpsilonOutOfRange(f"epsilon must lie in (0, {delta:.6g}), got {epsilon:g}")
    c0 = c0_constant(psi_from_Psi(Psi), dim, n_z, n_xi)
    return PsiHat(Psi, G, epsilon, c0, delta, dim)


# ---------------------------------------------------------------------------
# inversion


def invert_many(F: MOFunction, y, xi=None, tol: float = 1e-12, cap: float = 2.0**60):
    """Solve F(z, xi) = y for z >= 0, elementwise, by safeguarded Newton on a bracket."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    xi_b = None if xi is None else np.broadcast_to(np.asarray(xi, dtype=float), y.shape + (np.shape(xi)[-1],))

    def f(z, mask=slice(None)):
        return F.eval(z, None if xi_b is None else xi_b[mask])

    hi = np.ones_like(y)
    for _ in range(200):
        short = ~(f(hi) >= y)
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi, hi)
        if np.any(hi[short] > cap):
            raise OutOfRange(f"target {y[short & (hi > cap)][0]:g} exceeds {F.name} at z = {cap:g}")
    f0 = f(np.zeros_like(y))
    lo = np.where(np.isfinite(f0) & (f0 <= y), 0.0, 0.5 * hi)
    for _ in range(2200):
        high = ~(f(lo) <= y)
        if not high.any():
            break
        lo = np.where(high, 0.5 * lo, lo)
        if np.any(lo[high] < 1e-300):
            raise OutOfRange(f"target below the range of {F.name}")

    z = np.where(f(lo) == y, lo, 0.5 * (lo + hi))
    scale = tol * np.maximum(1.0, np.abs(y))
    for _ in range(200):
        r = f(z) - y
        done = np.abs(r) <= scale
        if done.all():
            break
        lo = np.where(r < 0, z, lo)
        hi = np.where(r > 0, z, hi)
        d = F.deriv(z, xi_b)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = z - r / d
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        geometric = (lo > 0) & (hi > 4.0 * lo)
        fallback = np.where(geometric, np.sqrt(lo * hi), 0.5 * (lo + hi))
        z = np.where(done, z, np.where(ok, newton, fallback))
        if np.all(done | (hi - lo <= 4.0 * np.finfo(float).eps * np.maximum(hi, 1e-300))):
            break
    r = f(z) - y
    bad = np.abs(r) > scale
    if bad.any():
        i = int(np.argmax(bad))
        raise NotMonotone(f"{F.name} could not be inverted at y = {y[i]:g} (residual {r[i]:.3g})")
    return z


def invert(F: MOFunction, y: float, xi=None, tol: float = 1e-12) -> float:
    """Scalar inverse: the z >= 0 with |F(z, xi) - y| <= tol * max(1, |y|)."""
    xi_arr = None if xi is None else np.asarray(xi, dtype=float)[None, :]
    return float(invert_many(F, np.array([float(y)]), xi_arr, tol)[0])


# ---------------------------------------------------------------------------
# class certification


@dataclass(frozen=True)
class SampleSpec:
    """Where :func:`certify` probes: z-range, direction count and the 2^-k growth probe."""

    z_min: float = 1e-8
    z_max: float = 1e4
    n_z: int = 121
    n_xi: int = 32
    k_max: int = 40
    dim: int = 1


@dataclass
class CertifyReport:
    condition: str
    passed: bool
    detail: str = ""
    witness: dict | None = None
    trend: list | None = None


def _grid_eval(method, z, xi):
    if xi is None:
        return method(z)[:, None]
    return method(z[:, None], xi[None, :, :])


def certify(F: MOFunction, condition: str, sample_spec: SampleSpec | None = None,
            partner: MOFunction | None = None) -> CertifyReport:
    """Sampled check of a class condition.

    Conditions
    ----------
    ``"GI0"``      F(0) = 0, F_z > 0, z F_z -> 0 as z -> 0.
    ``"psi_comp"`` F(s) -> infinity as s -> infinity.
    ``"good1"``    s G_z / psi -> infinity as s -> 0 for every sampled direction.
    ``"good2"``    s G_z / psi stays bounded as s -> 0 for some sampled direction.

    For the last two ``F`` is G and ``partner`` is Psi.
    """
    spec = sample_spec or SampleSpec()
    xi = None if F.direction_free and (partner is None or partner.direction_free) \
        else direction_sample(spec.dim, spec.n_xi)
    probe = 2.0 ** -np.arange(1, spec.k_max + 1, dtype=float)

    if condition == GI0:
        at_zero = _grid_eval(F.eval, np.zeros(1), xi)[0]
        if not np.all(np.abs(at_zero) <= 1e-14) or not np.all(np.isfinite(at_zero)):
            return CertifyReport(condition, False, "value at z = 0 is not 0",
                                 {"z": 0.0, "value": float(np.nan_to_num(at_zero[0], nan=np.inf))})
        z = np.geomspace(spec.z_min, spec.z_max, spec.n_z)
        d = _grid_eval(F.deriv, z, xi)
        if not np.all(d > 0):
            i, j = np.unravel_index(np.argmin(np.where(np.isnan(d), -np.inf, d)), d.shape)
            return CertifyReport(condition, False, "derivative not positive",
                                 {"z": float(z[i]), "xi_index": int(j), "value": float(d[i, j])})
        zd = _grid_eval(F.zderiv, probe, xi)
        tail = zd[10:]
        slope = np.polyfit(np.log(probe[10:]), np.log(np.maximum(tail, 1e-300)), 1)[0] \
            if xi is None else min(np.polyfit(np.log(probe[10:]), np.log(np.maximum(tail[:, j], 1e-300)), 1)[0]
                                   for j in range(tail.shape[1]))
        decreasing = np.all(np.diff(tail, axis=0) <= 1e-15 * np.abs(tail[:-1]))
        passed = bool(decreasing and (slope > 1e-3 or np.all(tail[-1] == 0.0)))
        return CertifyReport(condition, passed,
                             "" if passed else f"z G_z does not decay to 0 (log-slope {slope:.3g})",
                             None if passed else {"z": float(probe[-1]), "value": float(np.max(zd[-1]))},
                             trend=[float(v) for v in np.max(zd, axis=1)])

    if condition == "psi_comp":
        s = 2.0 ** np.arange(0, spec.k_max + 1, dtype=float)
        values = _grid_eval(F.eval, s, xi)
        inc = np.diff(values, axis=0)
        if not np.all(inc > 0):
            return CertifyReport(condition, False, "not increasing along s = 2^k",
                                 {"s": float(s[1 + int(np.argmin(inc.min(axis=1)))])})
        ratio = inc[-1] / inc[-11]
        big = values[-1] > 1e6 * np.maximum(1.0, np.abs(values[0]))
        passed = bool(np.all((ratio >= 0.9) | big))
        return CertifyReport(condition, passed, "" if passed else "appears bounded as s grows",
                             None if passed else {"s": float(s[-1]), "value": float(values[-1].min())},
                             trend=[float(v) for v in values.min(axis=1)])

    if condition in ("good1", "good2"):
        if partner is None:
            raise ValueError("growth conditions need the partner Psi")
        psi = psi_from_Psi(partner)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = _grid_eval(F.zderiv, probe, xi) / _grid_eval(psi.eval, probe, xi)
        window = ratio[-21:]
        diverging = np.all(np.diff(window, axis=0) >= 0, axis=0) & (window[-1] > 10.0 * window[0])
        diverging |= np.isinf(window[-1])
        trend = [float(v) for v in np.min(ratio, axis=1)]
        if condition == "good1":
            passed = bool(np.all(diverging))
            witness = None if passed else {"xi_index": int(np.argmin(diverging)), "ratio": float(window[-1].min())}
            detail = "s G_z / psi diverges as s -> 0" if passed else "s G_z / psi stays bounded as s -> 0"
        else:
            passed = bool(np.any(~diverging))
            witness = None if passed else {"ratio": float(window[-1].min())}
            detail = "s G_z / psi stays bounded as s -> 0" if passed else "s G_z / psi diverges as s -> 0"
        return CertifyReport(condition, passed, detail, witness, trend)

    raise ValueError(f"unknown condition {condition!r}")


def flow_mode(G: MOFunction, Psi: MOFunction, dim: int = 1) -> str:
    """'plain' when s G_z / psi diverges at 0, otherwise 'regularized'."""
    report = certify(G, "good1", SampleSpec(dim=dim), partner=Psi)
    return "plain" if report.passed else "regularized"
