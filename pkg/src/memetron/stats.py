"""Two-sample statistics used to compare generations.

Shapiro-Wilk follows Royston's AS R94 approximation (3 <= n <= 5000). The
Student t tail uses the regularised incomplete beta function evaluated by
Lentz's continued fraction; normal quantiles come from
``statistics.NormalDist`` (Wichura's AS 241).
"""

from __future__ import annotations

import math
import statistics
from typing import Sequence

from .errors import DegenerateSampleError, StatsError
from .kernels import dominance_counts, mann_whitney_null_counts

TWO_SIDED = "two-sided"
LESS = "less"
GREATER = "greater"
ALTERNATIVES = (TWO_SIDED, LESS, GREATER)

_STD_NORMAL = statistics.NormalDist()


def norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _betacf(a: float, b: float, x: float) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10_000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise StatsError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper tail ``P(T > t)`` of Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise StatsError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, df: float) -> float:
    return t_sf(-t, df)


def _finite_list(sample: Sequence[float], name: str) -> list[float]:
    xs = [float(v) for v in sample]
    if any(not math.isfinite(v) for v in xs):
        raise StatsError(f"{name} contains non-finite values")
    return xs


def _check_alternative(alternative: str) -> None:
    if alternative not in ALTERNATIVES:
        raise StatsError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


# -- Shapiro-Wilk ------------------------------------------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coeffs: Sequence[float], x: float) -> float:
    result = 0.0
    for c in reversed(coeffs):
        result = result * x + c
    return result


def _sw_coefficients(n: int) -> list[float]:
    half = n // 2
    if n == 3:
        return [math.sqrt(0.5)]
    m = [_STD_NORMAL.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)]
    summ2 = 2.0 * sum(v * v for v in m)
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a1 = _poly(_C1, rsn) - m[0] / ssumm2
    if n > 5:
        first = 2
        a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2) / (1.0 - 2.0 * a1**2 - 2.0 * a2**2))
        head = [a1, a2]
    else:
        first = 1
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
        head = [a1]
    return head + [-m[i] / fac for i in range(first, half)]


def shapiro_wilk(sample: Sequence[float]) -> tuple[float, float]:
    """Return ``(W, p)`` for the null hypothesis that ``sample`` is normal."""
    xs = sorted(_finite_list(sample, "sample"))
    n = len(xs)
    if not 3 <= n <= 5000:
        raise StatsError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if xs[-1] - xs[0] <= 0:
        raise DegenerateSampleError("all values are equal")
    a = _sw_coefficients(n)
    mean = math.fsum(xs) / n
    ss = math.fsum((v - mean) ** 2 for v in xs)
    num = math.fsum(a[i] * (xs[n - 1 - i] - xs[i]) for i in range(len(a)))
    w = min(num * num / ss, 1.0)
    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return w, min(max(p, 0.0), 1.0)
    w1 = math.log1p(-w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if w1 >= gamma:
            return w, 1e-99
        y = -math.log(gamma - w1)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        ln_n = math.log(n)
        y = w1
        mu = _poly(_C5, ln_n)
        sigma = math.exp(_poly(_C6, ln_n))
    if math.isinf(y):
        return w, 1.0
    return w, norm_sf((y - mu) / sigma)


# -- location tests ------------------------------------------------------------


def welch_t(a: Sequence[float], b: Sequence[float], alternative: str = TWO_SIDED) -> tuple[float, float, float]:
    """Welch's unequal-variance t test; returns ``(t, df, p)``."""
    _check_alternative(alternative)
    a, b = _finite_list(a, "a"), _finite_list(b, "b")
    if len(a) < 2 or len(b) < 2:
        raise StatsError("Welch's t test needs at least two observations per sample")
    va, vb = statistics.variance(a), statistics.variance(b)
    if va == 0 and vb == 0:
        raise StatsError("Welch's t test needs non-zero variance in at least one sample")
    sa, sb = va / len(a), vb / len(b)
    se = math.sqrt(sa + sb)
    t = (statistics.fmean(a) - statistics.fmean(b)) / se
    df = (sa + sb) ** 2 / (sa**2 / (len(a) - 1) + sb**2 / (len(b) - 1))
    if alternative == LESS:
        p = t_cdf(t, df)
    elif alternative == GREATER:
        p = t_sf(t, df)
    else:
        p = min(1.0, 2.0 * t_sf(abs(t), df))
    return t, df, p


def midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def mann_whitney_u(
    a: Sequence[float], b: Sequence[float], alternative: str = TWO_SIDED, exact_limit: int = 20
) -> tuple[float, float]:
    """Mann-Whitney U for sample ``a`` and its p-value.

    Exact (enumerated null distribution) when there are no ties and
    ``len(a) + len(b) <= exact_limit``; otherwise the tie-corrected normal
    approximation with continuity correction.
    """
    _check_alternative(alternative)
    a, b = _finite_list(a, "a"), _finite_list(b, "b")
    na, nb = len(a), len(b)
    if not na or not nb:
        raise StatsError("Mann-Whitney U needs non-empty samples")
    pooled = a + b
    ranks = midranks(pooled)
    u = math.fsum(ranks[:na]) - na * (na + 1) / 2.0
    n = na + nb
    tie_sizes = _tie_sizes(pooled)
    if not tie_sizes and n <= exact_limit:
        counts = mann_whitney_null_counts(na, nb)
        total = math.comb(n, na)
        k = int(round(u))
        p_le = sum(counts[: k + 1]) / total
        p_ge = sum(counts[k:]) / total
        if alternative == LESS:
            return u, p_le
        if alternative == GREATER:
            return u, p_ge
        return u, min(1.0, 2.0 * min(p_le, p_ge))
    mu = na * nb / 2.0
    tie_term = sum(t**3 - t for t in tie_sizes) / (n * (n - 1)) if n > 1 else 0.0
    var = na * nb / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return u, 1.0
    sigma = math.sqrt(var)
    if alternative == LESS:
        return u, min(1.0, norm_cdf((u - mu + 0.5) / sigma))
    if alternative == GREATER:
        return u, min(1.0, norm_sf((u - mu - 0.5) / sigma))
    z = (abs(u - mu) - 0.5) / sigma
    return u, min(1.0, 2.0 * norm_sf(z))


def _tie_sizes(values: Sequence[float]) -> list[int]:
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return [c for c in counts.values() if c > 1]


# -- effect sizes --------------------------------------------------------------


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """``(mean(a) - mean(b)) / pooled SD`` with ``n - 1`` weights."""
    a, b = _finite_list(a, "a"), _finite_list(b, "b")
    if len(a) < 2 or len(b) < 2:
        raise StatsError("Cohen's d needs at least two observations per sample")
    pooled = ((len(a) - 1) * statistics.variance(a) + (len(b) - 1) * statistics.variance(b)) / (
        len(a) + len(b) - 2
    )
    if pooled <= 0:
        raise StatsError("Cohen's d is undefined for zero pooled variance")
    return (statistics.fmean(a) - statistics.fmean(b)) / math.sqrt(pooled)


def cliffs_delta(a: Sequence[float], b: Sequence[float]) -> float:
    a, b = _finite_list(a, "a"), _finite_list(b, "b")
    if not a or not b:
        raise StatsError("Cliff's delta needs non-empty samples")
    gt, lt = dominance_counts(a, b)
    return (gt - lt) / (len(a) * len(b))


# -- multiple testing ------------------------------------------------------------


def bh_fdr(p_values: Sequence[float], q: float = 0.05) -> tuple[list[float], list[bool]]:
    """Benjamini-Hochberg step-up adjustment; returns ``(adjusted, reject)``."""
    if not 0 < q < 1:
        raise StatsError(f"q must lie in (0, 1), got {q}")
    ps = [float(p) for p in p_values]
    if any(not 0.0 <= p <= 1.0 for p in ps):
        raise StatsError("p-values must lie in [0, 1]")
    m = len(ps)
    order = sorted(range(m), key=lambda i: ps[i])
    adjusted = [0.0] * m
    running = 1.0
    for rank in range(m, 0, -1):
        i = order[rank - 1]
        running = min(running, ps[i] * (m / rank))
        adjusted[i] = running
    return adjusted, [p <= q for p in adjusted]
