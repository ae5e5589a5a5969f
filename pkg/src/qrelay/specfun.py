"""Combinatorial kernels shared by the amplitude formulas.

Everything here is a pure function of its arguments.  The integer kernels
(``binomial``, ``omega``) are exact; the detector kernel ``g_kernel`` is a
float series with an explicit stopping rule.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational

#: Largest ``n`` accepted by :func:`binomial` (4 * n_max * N + 8 at n_max=6, N=4).
MAX_BINOMIAL_N = 4 * 6 * 4 + 8

G_TOL = 1e-12
G_MAX_TERMS = 10**6
_KEY_QUANTUM = 1e-12


def binomial(n: int, k: int) -> int:
    """Binomial coefficient with the convention C(n, k) = 0 outside 0 <= k <= n.

    A negative ``n`` also yields 0, which is what the beamsplitter sums need
    when a photon-number difference goes negative.
    """
    if n > MAX_BINOMIAL_N:
        raise ValueError(f"binomial argument n={n} exceeds supported range {MAX_BINOMIAL_N}")
    if n < 0 or k < 0 or k > n:
        return 0
    return math.comb(n, k)


def log_factorial(n: int) -> float:
    if n < 0:
        raise ValueError("log_factorial of a negative integer")
    return math.lgamma(n + 1)


def _termination_index(a, b):
    idx = [-p for p in (a, b) if isinstance(p, int) and p <= 0]
    if not idx:
        raise ValueError(f"2F1({a}, {b}; ...) is not a terminating series")
    return min(idx)


def hyp2f1_terminating(a: int, b: int, c: int, z):
    """Terminating Gauss series sum_n (a)_n (b)_n / ((c)_n n!) z^n.

    At least one of ``a``, ``b`` must be a nonpositive integer.  Exact rational
    arithmetic is used when ``z`` is rational (int or Fraction), so integer
    identities such as the beamsplitter kernel come out exact; otherwise the
    sum is accumulated in floating point.
    """
    m = _termination_index(a, b)
    if isinstance(c, int) and c <= 0 and -c < m:
        raise ValueError(f"2F1 lower parameter c={c} hits a zero Pochhammer before termination")
    exact = isinstance(z, Rational) and not isinstance(z, bool)
    term = Fraction(1) if exact else 1.0
    zz = Fraction(z) if exact else float(z)
    total = term
    for n in range(m):
        term = term * (a + n) * (b + n) / ((c + n) * (n + 1)) * zz
        total += term
    return total


def b_ratio(eta: float, dark: float) -> float:
    """Dark-count ratio [1 + (1 - eta) / (eta * dark)]^-1, zero when dark == 0."""
    if not 0.0 <= dark < 1.0:
        raise ValueError(f"dark-count probability {dark} outside [0, 1)")
    if dark == 0.0:
        return 0.0
    if eta <= 0.0:
        return 0.0
    return eta * dark / (eta * dark + 1.0 - eta)


def g_kernel(kappa: int, lam: int, eta: float, dark: float, tol: float = G_TOL) -> float:
    """Detector series G(kappa, lam; eta, dark); zero for kappa < lam.

    The n-sum is stopped once three consecutive terms fall below ``tol``
    times the running sum.  The test is made on an envelope of each term
    (the 2F1 factor evaluated at |z|, which bounds it because its series
    coefficients are nonnegative): the 2F1 factor itself is a polynomial in
    n with real zeros, and a run of tiny terms near such a zero would
    otherwise stop the sum long before the geometric tail has decayed.
    The neglected tail is then added as a geometric series in the ratio of
    the last two terms, which matters when b is close to 1.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if kappa < lam:
        return 0.0
    b = b_ratio(eta, dark)
    d = kappa - lam
    pref = float(math.comb(kappa, lam))
    if b == 0.0:
        return pref
    z = (eta - 1.0) / eta
    total = 0.0
    small = 0
    prev = 0.0
    weight = 1.0  # C(d + n, d) * b**n, updated by recurrence
    for n in range(G_MAX_TERMS):
        if n:
            weight *= b * (d + n) / n
        term = weight * hyp2f1_terminating(-n, -lam, d + 1, z) ** 2
        total += term
        env = weight * hyp2f1_terminating(-n, -lam, d + 1, abs(z)) ** 2
        if env < tol * abs(total):
            small += 1
            if small == 3:
                ratio = term / prev if prev > 0.0 else 0.0
                if 0.0 < ratio < 1.0:
                    total += term * ratio / (1.0 - ratio)
                return pref * total
        else:
            small = 0
        prev = term
    raise ArithmeticError(
        f"G({kappa}, {lam}) did not converge in {G_MAX_TERMS} terms (b={b}); inputs corrupt?"
    )


def omega_direct(m: int, i3: int, l3: int) -> int:
    """Alternating gamma-sum form of the beamsplitter kernel."""
    return sum(
        binomial(m, g) * binomial(i3 + l3 - m, i3 - g) * (-1) ** (m - g)
        for g in range(m + 1)
    )


def omega_hyp(m: int, i3: int, l3: int) -> int:
    """Same kernel through the two closed 2F1 branches (split on l3 - m)."""
    if i3 + l3 < m:
        return 0
    if l3 >= m:
        val = (-1) ** m * binomial(i3 + l3 - m, i3) * hyp2f1_terminating(-m, -i3, l3 - m + 1, -1)
    else:
        val = (-1) ** l3 * binomial(m, m - l3) * hyp2f1_terminating(m - i3 - l3, -l3, m - l3 + 1, -1)
    if val.denominator != 1:
        raise ArithmeticError(f"non-integer beamsplitter kernel at {(m, i3, l3)}")
    return int(val)


class KernelCache:
    """Memo tables for the kernels evaluated inside the amplitude loops.

    Float-parameter keys are quantized to 1e-12 so that equal inputs passed
    as slightly different floats share an entry.  Writes are idempotent, so
    the dicts can be shared between threads after a warm-up.
    """

    def __init__(self, check: bool = False):
        self.check = check
        self.omega_table: dict[tuple[int, int, int], int] = {}
        self.g_table: dict[tuple[int, int, int, int], float] = {}
        self.binom_table: dict[tuple[int, int], int] = {}
        self.logfact_table: dict[int, float] = {}

    @staticmethod
    def _q(x: float) -> int:
        return round(x / _KEY_QUANTUM)

    def omega(self, m: int, i3: int, l3: int) -> int:
        key = (m, i3, l3)
        val = self.omega_table.get(key)
        if val is None:
            val = omega_direct(m, i3, l3)
            if self.check:
                alt = omega_hyp(m, i3, l3)
                assert alt == val, f"omega branch mismatch at {key}: {val} vs {alt}"
            self.omega_table[key] = val
        return val

    def g(self, kappa: int, lam: int, eta: float, dark: float) -> float:
        key = (kappa, lam, self._q(eta), self._q(dark))
        val = self.g_table.get(key)
        if val is None:
            val = g_kernel(kappa, lam, eta, dark)
            self.g_table[key] = val
        return val

    def binomial(self, n: int, k: int) -> int:
        key = (n, k)
        val = self.binom_table.get(key)
        if val is None:
            val = binomial(n, k)
            self.binom_table[key] = val
        return val

    def log_factorial(self, n: int) -> float:
        val = self.logfact_table.get(n)
        if val is None:
            val = log_factorial(n)
            self.logfact_table[n] = val
        return val


#: Process-wide cache.  Branch cross-checking is on: it costs little and the
#: tables are small.
DEFAULT_CACHE = KernelCache(check=True)


def omega(mu_plus_lambda: int, i3: int, l3: int, cache: KernelCache | None = None) -> int:
    """Integer beamsplitter kernel.

    Depends on the two photon-number indices of the incoming mode only through
    their sum, which is the first argument here.
    """
    if min(mu_plus_lambda, i3, l3) < 0:
        raise ValueError("omega arguments must be nonnegative")
    return (cache or DEFAULT_CACHE).omega(mu_plus_lambda, i3, l3)
