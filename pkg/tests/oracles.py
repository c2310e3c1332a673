"""Independent scalar reference implementations used as test oracles.

Everything here is written from the textbook definitions with plain Python
loops and integers, sharing no code with the package.  The incomplete gamma
function is evaluated by series / continued fraction so the oracles do not
depend on scipy either.
"""

from __future__ import annotations

import cmath
import math
from itertools import product


# -- special functions ---------------------------------------------------------------

def igamc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if x <= 0:
        return 1.0
    if x < a + 1:
        # series for P(a, x)
        term = total = 1.0 / a
        ap = a
        for _ in range(10_000):
            ap += 1
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        return 1.0 - total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    # Lentz continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1 - a
    c = 1 / tiny
    d = 1 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def erfc(x: float) -> float:
    return math.erfc(x)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2))


def chi2_p(observed, expected_probs, total) -> tuple[float, float]:
    chi2 = sum((o - total * p) ** 2 / (total * p) for o, p in zip(observed, expected_probs))
    return chi2, igamc((len(observed) - 1) / 2, chi2 / 2)


def bits_of(text: str) -> list[int]:
    return [int(c) for c in text if c in "01"]


# -- the fifteen tests -----------------------------------------------------------------

def frequency(bits) -> float:
    n = len(bits)
    s = sum(2 * b - 1 for b in bits)
    return erfc(abs(s) / math.sqrt(n) / math.sqrt(2))


def block_frequency(bits, M: int) -> float:
    N = len(bits) // M
    chi2 = 4 * M * sum((sum(bits[i * M:(i + 1) * M]) / M - 0.5) ** 2 for i in range(N))
    return igamc(N / 2, chi2 / 2)


def cumulative_sums(bits, reverse: bool = False) -> float:
    n = len(bits)
    seq = list(reversed(bits)) if reverse else list(bits)
    s, z = 0, 0
    for b in seq:
        s += 2 * b - 1
        z = max(z, abs(s))
    sq = math.sqrt(n)
    total = 1.0
    for k in range(int((-n / z + 1) / 4), int((n / z - 1) / 4) + 1):
        total -= normal_cdf((4 * k + 1) * z / sq) - normal_cdf((4 * k - 1) * z / sq)
    for k in range(int((-n / z - 3) / 4), int((n / z - 1) / 4) + 1):
        total += normal_cdf((4 * k + 3) * z / sq) - normal_cdf((4 * k + 1) * z / sq)
    return min(1.0, max(0.0, total))


def runs(bits) -> float:
    n = len(bits)
    pi = sum(bits) / n
    if abs(pi - 0.5) >= 2 / math.sqrt(n) or pi in (0, 1):
        return 0.0
    v = 1 + sum(1 for i in range(n - 1) if bits[i] != bits[i + 1])
    return erfc(abs(v - 2 * n * pi * (1 - pi)) / (2 * math.sqrt(2 * n) * pi * (1 - pi)))


LONGEST_RUN_TABLES = {
    # M: (category lower bounds, probabilities)
    8: ((1, 2, 3, 4), (55 / 256, 94 / 256, 59 / 256, 48 / 256)),
    128: ((4, 5, 6, 7, 8, 9), (0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847)),
    10_000: ((10, 11, 12, 13, 14, 15, 16), (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
}


def longest_run(bits, M: int) -> float:
    bounds, probs = LONGEST_RUN_TABLES[M]
    counts = [0] * len(bounds)
    N = len(bits) // M
    for i in range(N):
        best = run = 0
        for b in bits[i * M:(i + 1) * M]:
            run = run + 1 if b else 0
            best = max(best, run)
        k = 0
        while k + 1 < len(bounds) and best >= bounds[k + 1]:
            k += 1
        counts[k] += 1
    return chi2_p(counts, probs, N)[1]


def gf2_rank(rows: list[int]) -> int:
    rows = list(rows)
    rank = 0
    width = max((r.bit_length() for r in rows), default=0)
    for col in reversed(range(width)):
        pivot = next((i for i in range(rank, len(rows)) if rows[i] >> col & 1), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i] >> col & 1:
                rows[i] ^= rows[rank]
        rank += 1
    return rank


def rank_prob(r: int, M: int, Q: int) -> float:
    prod = 1.0
    for i in range(r):
        prod *= (1 - 2.0 ** (i - Q)) * (1 - 2.0 ** (i - M)) / (1 - 2.0 ** (i - r))
    return 2.0 ** (r * (Q + M - r) - M * Q) * prod


def binary_matrix_rank(bits, M: int = 32, Q: int = 32) -> float:
    N = len(bits) // (M * Q)
    full = M
    counts = [0, 0, 0]
    for k in range(N):
        chunk = bits[k * M * Q:(k + 1) * M * Q]
        rows = [int("".join(map(str, chunk[i * Q:(i + 1) * Q])), 2) for i in range(M)]
        r = gf2_rank(rows)
        counts[0 if r == full else 1 if r == full - 1 else 2] += 1
    p_full = rank_prob(full, M, Q)
    p_minus = rank_prob(full - 1, M, Q)
    probs = [p_full, p_minus, 1 - p_full - p_minus]
    chi2 = sum((c - N * p) ** 2 / (N * p) for c, p in zip(counts, probs))
    return math.exp(-chi2 / 2)


def spectral(bits) -> float:
    n = len(bits)
    x = [2 * b - 1 for b in bits]
    T = math.sqrt(math.log(1 / 0.05) * n)
    n1 = 0
    for j in range(n // 2):
        s = sum(x[k] * cmath.exp(-2j * math.pi * j * k / n) for k in range(n))
        if abs(s) < T:
            n1 += 1
    n0 = 0.95 * n / 2
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4)
    return erfc(abs(d) / math.sqrt(2))


def non_overlapping_template(bits, template: list[int], N: int) -> float:
    m = len(template)
    M = len(bits) // N
    mu = (M - m + 1) / 2 ** m
    var = M * (1 / 2 ** m - (2 * m - 1) / 2 ** (2 * m))
    chi2 = 0.0
    for i in range(N):
        block = bits[i * M:(i + 1) * M]
        j = count = 0
        while j <= M - m:
            if block[j:j + m] == template:
                count += 1
                j += m
            else:
                j += 1
        chi2 += (count - mu) ** 2 / var
    return igamc(N / 2, chi2 / 2)


def aperiodic(template: list[int]) -> bool:
    m = len(template)
    return all(template[:m - s] != template[s:] for s in range(1, m))


def overlapping_probs(m: int, M: int) -> list[float]:
    eta = (M - m + 1) / 2 ** m / 2
    pis = []
    for u in range(5):
        if u == 0:
            pis.append(math.exp(-eta))
        else:
            pis.append(sum(math.exp(-eta) * 2.0 ** -u * eta ** l / math.factorial(l) * math.comb(u - 1, l - 1)
                           for l in range(1, u + 1)))
    pis.append(1 - sum(pis))
    return pis


def overlapping_template(bits, m: int, M: int) -> float:
    N = len(bits) // M
    template = [1] * m
    counts = [0] * 6
    for i in range(N):
        block = bits[i * M:(i + 1) * M]
        c = sum(1 for j in range(M - m + 1) if block[j:j + m] == template)
        counts[min(c, 5)] += 1
    return chi2_p(counts, overlapping_probs(m, M), N)[1]


UNIVERSAL_TABLE = {2: (1.5374383, 1.338), 5: (4.2534266, 2.705), 6: (5.2177052, 2.954), 7: (6.1962507, 3.125)}


def universal(bits, L: int, Q: int) -> tuple[float, float]:
    total = len(bits) // L
    K = total - Q
    last: dict[int, int] = {}
    fn = 0.0
    for i in range(1, total + 1):
        v = int("".join(map(str, bits[(i - 1) * L:i * L])), 2)
        if i > Q:
            fn += math.log2(i - last.get(v, 0))
        last[v] = i
    fn /= K
    expected, variance = UNIVERSAL_TABLE[L]
    c = 0.7 - 0.8 / L + (4 + 32 / L) * K ** (-3 / L) / 15
    sigma = c * math.sqrt(variance / K)
    return fn, erfc(abs(fn - expected) / (math.sqrt(2) * sigma))


def _pattern_counts(bits, m: int) -> dict[tuple, int]:
    n = len(bits)
    ext = list(bits) + list(bits[:m - 1])
    counts: dict[tuple, int] = {}
    for i in range(n):
        key = tuple(ext[i:i + m])
        counts[key] = counts.get(key, 0) + 1
    return counts


def approximate_entropy(bits, m: int) -> float:
    n = len(bits)

    def phi(mm):
        if mm == 0:
            return 0.0
        return sum(c / n * math.log(c / n) for c in _pattern_counts(bits, mm).values())

    apen = phi(m) - phi(m + 1)
    chi2 = 2 * n * (math.log(2) - apen)
    return igamc(2 ** (m - 1), chi2 / 2)


def serial(bits, m: int) -> tuple[float, float]:
    n = len(bits)

    def psi(mm):
        if mm <= 0:
            return 0.0
        return 2 ** mm / n * sum(c * c for c in _pattern_counts(bits, mm).values()) - n

    d1 = psi(m) - psi(m - 1)
    d2 = psi(m) - 2 * psi(m - 1) + psi(m - 2)
    return igamc(2 ** (m - 2), d1 / 2), igamc(2 ** (m - 3), d2 / 2)


def berlekamp_massey(s: list[int]) -> int:
    n = len(s)
    c = [1] + [0] * n
    b = [1] + [0] * n
    L, m = 0, -1
    for i in range(n):
        d = s[i]
        for j in range(1, L + 1):
            d ^= c[j] & s[i - j]
        if d:
            t = c[:]
            shift = i - m
            for j in range(n + 1 - shift):
                c[j + shift] ^= b[j]
            if 2 * L <= i:
                L, m, b = i + 1 - L, i, t
    return L


# the reference suite's constants (its first class probability is 0.01047)
LC_PI = (0.01047, 0.03125, 0.125, 0.5, 0.25, 0.0625, 0.020833)


def linear_complexity(bits, M: int) -> float:
    N = len(bits) // M
    mu = M / 2 + (9 + (-1) ** (M + 1)) / 36 - (M / 3 + 2 / 9) / 2 ** M
    counts = [0] * 7
    for i in range(N):
        L = berlekamp_massey(bits[i * M:(i + 1) * M])
        t = (-1) ** M * (L - mu) + 2 / 9
        if t <= -2.5:
            k = 0
        elif t <= -1.5:
            k = 1
        elif t <= -0.5:
            k = 2
        elif t <= 0.5:
            k = 3
        elif t <= 1.5:
            k = 4
        elif t <= 2.5:
            k = 5
        else:
            k = 6
        counts[k] += 1
    return chi2_p(counts, LC_PI, N)[1]


def _walk_cycles(bits):
    s, walk = 0, []
    for b in bits:
        s += 2 * b - 1
        walk.append(s)
    cycles, cur = [], []
    for v in walk:
        if v == 0:
            cycles.append(cur)
            cur = []
        else:
            cur.append(v)
    if walk and walk[-1] != 0:
        cycles.append(cur)  # close the last cycle; a walk ending at zero has none open
    return walk, cycles


def excursion_probs(x: int) -> list[float]:
    a = abs(x)
    pis = [1 - 1 / (2 * a)]
    for k in range(1, 5):
        pis.append(1 / (4 * x * x) * (1 - 1 / (2 * a)) ** (k - 1))
    pis.append(1 / (2 * a) * (1 - 1 / (2 * a)) ** 4)
    return pis


def random_excursions(bits) -> dict[int, float]:
    _, cycles = _walk_cycles(bits)
    J = len(cycles)
    out = {}
    for x in (-4, -3, -2, -1, 1, 2, 3, 4):
        counts = [0] * 6
        for cyc in cycles:
            counts[min(sum(1 for v in cyc if v == x), 5)] += 1
        out[x] = chi2_p(counts, excursion_probs(x), J)[1]
    return out


def random_excursions_variant(bits) -> dict[int, float]:
    walk, cycles = _walk_cycles(bits)
    J = len(cycles)
    out = {}
    for x in list(range(-9, 0)) + list(range(1, 10)):
        xi = sum(1 for v in walk if v == x)
        out[x] = erfc(abs(xi - J) / math.sqrt(2 * J * (4 * abs(x) - 2)))
    return out


def all_templates(m: int) -> list[list[int]]:
    return [list(t) for t in product((0, 1), repeat=m) if aperiodic(list(t))]


# -- parity embedding --------------------------------------------------------------------

def schedule_segments(entries, block_len: int):
    """(start, K, mask) of every segment in a block; ``entries`` = [(K, G, mask, count)]."""
    out, cursor, e, used = [], 0, 0, 0
    while True:
        K, G, mask, count = entries[e]
        if cursor + K - 1 >= block_len:
            return out
        out.append((cursor, K, mask))
        cursor += K + G
        used += 1
        if used == count:
            e, used = (e + 1) % len(entries), 0


def naive_embed(block: list[int], entries, data=None) -> list[int]:
    """Sequential definition: target_n := (xor of masked bits, as modified so far) xor d_n."""
    x = list(block)
    for n, (start, K, mask) in enumerate(schedule_segments(entries, len(x))):
        p = 0
        for off in mask:
            p ^= x[start + off - 1]
        x[start + K - 1] = p ^ (data[n] if data is not None else 0)
    return x


def naive_extract(block: list[int], entries) -> list[int]:
    out = []
    for start, K, mask in schedule_segments(entries, len(block)):
        p = 0
        for off in mask:
            p ^= block[start + off - 1]
        out.append(p ^ block[start + K - 1])
    return out
