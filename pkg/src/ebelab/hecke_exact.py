"""Exact local calculus of Hecke modifications over the formal disk.

Matrices of truncated power series in z with Gaussian-rational (exact)
coefficients.  The type of a modification germ is read off from
determinantal-divisor valuations: d_i = min valuation over i x i minors,
k_i = d_i - d_{i-1}.  Exactness makes this the unimpeachable oracle for
the floating-point extraction in ``scatter``.

Meromorphic germs are handled by a global power offset: a matrix with
``offset = m`` represents z^(-m) times its stored regular part.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations


class SingularToPrecision(Exception):
    pass


class TruncationInsufficient(Exception):
    pass


class GR:
    """Gaussian rational a + b i with exact Fraction components."""

    __slots__ = ("a", "b")

    def __init__(self, a=0, b=0):
        self.a = Fraction(a)
        self.b = Fraction(b)

    def __add__(self, o):
        return GR(self.a + o.a, self.b + o.b)

    def __sub__(self, o):
        return GR(self.a - o.a, self.b - o.b)

    def __neg__(self):
        return GR(-self.a, -self.b)

    def __mul__(self, o):
        return GR(self.a * o.a - self.b * o.b, self.a * o.b + self.b * o.a)

    def __truediv__(self, o):
        n = o.a * o.a + o.b * o.b
        return GR((self.a * o.a + self.b * o.b) / n,
                  (self.b * o.a - self.a * o.b) / n)

    def __eq__(self, o):
        return self.a == o.a and self.b == o.b

    def __bool__(self):
        return bool(self.a) or bool(self.b)

    def __complex__(self):
        return float(self.a) + 1j * float(self.b)

    def __repr__(self):
        if not self.b:
            return str(self.a)
        if not self.a:
            return f"{self.b}i"
        sign = "+" if self.b >= 0 else "-"
        return f"{self.a}{sign}{abs(self.b)}i"


GR_ZERO = GR()
GR_ONE = GR(1)


class Series:
    """Power series in z truncated at order n (coefficients c[0..n-1])."""

    __slots__ = ("c", "n")

    def __init__(self, coeffs, n):
        self.n = n
        c = list(coeffs)[:n]
        c += [GR_ZERO] * (n - len(c))
        self.c = c

    @classmethod
    def zero(cls, n):
        return cls([], n)

    @classmethod
    def const(cls, v, n):
        return cls([v if isinstance(v, GR) else GR(v)], n)

    @classmethod
    def monomial(cls, power, n, coeff=GR_ONE):
        c = [GR_ZERO] * n
        if 0 <= power < n:
            c[power] = coeff
        return cls(c, n)

    def __add__(self, o):
        n = min(self.n, o.n)
        return Series([self.c[i] + o.c[i] for i in range(n)], n)

    def __sub__(self, o):
        n = min(self.n, o.n)
        return Series([self.c[i] - o.c[i] for i in range(n)], n)

    def __neg__(self):
        return Series([-v for v in self.c], self.n)

    def __mul__(self, o):
        n = min(self.n, o.n)
        out = [GR_ZERO] * n
        for i, ci in enumerate(self.c[:n]):
            if not ci:
                continue
            for j in range(n - i):
                cj = o.c[j]
                if cj:
                    out[i + j] = out[i + j] + ci * cj
        return Series(out, n)

    def shift(self, m):
        """Multiply by z^m (m >= 0), keeping the truncation order."""
        return Series([GR_ZERO] * m + self.c[:self.n - m], self.n)

    def val(self):
        """Valuation; None when zero to truncation."""
        for i, v in enumerate(self.c):
            if v:
                return i
        return None

    def is_zero(self):
        return self.val() is None

    def inverse(self):
        """Series inverse; requires a unit (nonzero constant term)."""
        if not self.c[0]:
            raise SingularToPrecision("inverting a non-unit series")
        inv = [GR_ZERO] * self.n
        inv[0] = GR_ONE / self.c[0]
        for m in range(1, self.n):
            acc = GR_ZERO
            for i in range(1, m + 1):
                if self.c[i] and inv[m - i]:
                    acc = acc + self.c[i] * inv[m - i]
            inv[m] = -(acc / self.c[0])
        return Series(inv, self.n)

    def divide_exact(self, d):
        """self / d when val(d) <= val(self); raises otherwise."""
        vd = d.val()
        if vd is None:
            raise SingularToPrecision("division by zero series")
        vs = self.val()
        if vs is None:
            return Series.zero(self.n)
        if vs < vd:
            raise TruncationInsufficient(
                f"quotient not regular: val {vs} < divisor val {vd}")
        num = Series(self.c[vd:], self.n - vd)
        den = Series(d.c[vd:], self.n - vd)
        q = num * den.inverse()
        return Series(q.c, self.n - vd)

    def __repr__(self):
        terms = [f"({v})z^{i}" for i, v in enumerate(self.c) if v]
        return " + ".join(terms) if terms else "0"


@dataclass
class PolySeriesMatrix:
    """r x r matrix of truncated series, representing z^(-offset) * entries."""

    entries: list
    n_trunc: int
    offset: int = 0

    @property
    def r(self):
        return len(self.entries)

    @classmethod
    def diag_z_powers(cls, k, n_trunc):
        """diag(z^{k_1}, ..., z^{k_r}); negative powers via the offset."""
        k = [int(v) for v in k]
        m = max(0, -min(k))
        r = len(k)
        rows = [[Series.monomial(k[i] + m, n_trunc) if i == j else Series.zero(n_trunc)
                 for j in range(r)] for i in range(r)]
        return cls(rows, n_trunc, offset=m)

    @classmethod
    def identity(cls, r, n_trunc):
        rows = [[Series.const(1 if i == j else 0, n_trunc) for j in range(r)]
                for i in range(r)]
        return cls(rows, n_trunc)

    def __matmul__(self, o):
        n = min(self.n_trunc, o.n_trunc)
        r = self.r
        rows = []
        for i in range(r):
            row = []
            for j in range(r):
                acc = Series.zero(n)
                for l in range(r):
                    acc = acc + self.entries[i][l] * o.entries[l][j]
                row.append(acc)
            rows.append(row)
        return PolySeriesMatrix(rows, n, self.offset + o.offset)

    def minor(self, rows, cols):
        """Determinant of the submatrix on the given index tuples."""
        sub = [[self.entries[i][j] for j in cols] for i in rows]
        return _det(sub, self.n_trunc)

    def det(self):
        return self.minor(tuple(range(self.r)), tuple(range(self.r)))


def _det(sub, n):
    m = len(sub)
    if m == 1:
        return sub[0][0]
    acc = Series.zero(n)
    for j in range(m):
        if sub[0][j].is_zero():
            continue
        rest = [row[:j] + row[j + 1:] for row in sub[1:]]
        term = sub[0][j] * _det(rest, n)
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def smith_type(eta: PolySeriesMatrix):
    """Hecke type from determinantal-divisor valuations.

    d_i = min over i x i minors of val (offset-corrected), d_0 = 0;
    k_i = d_i - d_{i-1}, returned increasing.  Guarantees sum(k) equals
    val(det); raises SingularToPrecision / TruncationInsufficient.
    """
    r = eta.r
    d = [0]
    for i in range(1, r + 1):
        best = None
        for rows in combinations(range(r), i):
            for cols in combinations(range(r), i):
                v = eta.minor(rows, cols).val()
                if v is not None and (best is None or v < best):
                    best = v
        if best is None:
            if i == r:
                raise SingularToPrecision("det vanishes to truncation order")
            raise TruncationInsufficient(
                f"every {i}x{i} minor vanishes to order {eta.n_trunc}")
        d.append(best - i * eta.offset)
    k = sorted(d[i] - d[i - 1] for i in range(1, r + 1))
    if sum(k) != d[r]:
        raise TruncationInsufficient("divisor chain inconsistent")
    if eta.n_trunc < 2 * max((abs(v) for v in k), default=0) * r + 4:
        raise TruncationInsufficient(
            f"n_trunc={eta.n_trunc} below the precision guard for |k|<= "
            f"{max(abs(v) for v in k)}, r={r}")
    return tuple(k)


def compose_sequence(etas):
    """Total and per-step types of an ordered product of germs at one point.

    Also verifies val(det(prod)) = sum val(det(eta_i)) exactly.
    """
    per_step = [smith_type(e) for e in etas]
    prod = etas[0]
    for e in etas[1:]:
        prod = prod @ e
    total = smith_type(prod)
    lhs = prod.det().val() - prod.r * prod.offset
    rhs = sum(e.det().val() - e.r * e.offset for e in etas)
    if lhs != rhs:
        raise TruncationInsufficient("det valuation not additive: truncation loss")
    return total, per_step


def check_higgs_compat(eta: PolySeriesMatrix, phi0: PolySeriesMatrix,
                       phi1: PolySeriesMatrix = None):
    """Is eta an intertwiner of Higgs germs?

    With phi1 given: checks eta phi0 - phi1 eta = 0 to truncation; the
    defect order is the first order at which it fails (None when clean).
    Without phi1: forms eta phi0 eta^(-1) via the adjugate and reports the
    worst negative-power defect; when regular, the induced phi1 is
    returned.
    """
    if phi1 is not None:
        resid = eta @ phi0
        other = phi1 @ eta
        worst = None
        for i in range(eta.r):
            for j in range(eta.r):
                diffv = (resid.entries[i][j] - other.entries[i][j]).val()
                if diffv is not None:
                    worst = diffv if worst is None else min(worst, diffv)
        return (worst is None), worst, None

    r = eta.r
    n = eta.n_trunc
    det = eta.det()
    dv = det.val()
    if dv is None:
        raise SingularToPrecision("det vanishes to truncation order")
    # adjugate via (r-1)-minors with cofactor signs
    adj = [[None] * r for _ in range(r)]
    idx = tuple(range(r))
    for i in range(r):
        for j in range(r):
            rows = tuple(x for x in idx if x != j)
            cols = tuple(x for x in idx if x != i)
            m = eta.minor(rows, cols) if r > 1 else Series.const(1, n)
            adj[i][j] = m if (i + j) % 2 == 0 else -m
    adjm = PolySeriesMatrix(adj, n)
    num = (eta @ phi0) @ adjm
    defect = 0
    for i in range(r):
        for j in range(r):
            v = num.entries[i][j].val()
            if v is not None:
                defect = max(defect, dv - v)
    if defect > 0:
        return False, defect, None
    out = [[num.entries[i][j].divide_exact(det) for j in range(r)]
           for i in range(r)]
    nn = min(s.n for row in out for s in row)
    out = [[Series(s.c, nn) for s in row] for row in out]
    return True, 0, PolySeriesMatrix(out, nn, offset=num.offset - eta.offset)


# ---------------------------------------------------------------------------
# plain-text polynomial matrix syntax
# ---------------------------------------------------------------------------
#
# Rows separated by ';', entries by ','.  Each entry is a sum of terms
#     coeff | coeff*z^p | z^p | z
# where coeff is an integer, a rational a/b, the unit i (as 1i, -2i, 3i/5),
# or a parenthesized Gaussian rational (a+bi), and p may be negative
# (meromorphic germs are folded into the global offset).

_TERM = re.compile(
    r"""^(?P<coef>[+-]?\(.*?\)|[+-]?[0-9]+(?:/[0-9]+)?i?|[+-]?i|[+-])?
         \s*\*?\s*
         (?P<z>z(?:\^(?P<pow>[+-]?\d+))?)?$""", re.X)


def _parse_gauss(text):
    text = text.strip()
    if text in ("", "+"):
        return GR(1)
    if text == "-":
        return GR(-1)
    if text.startswith("+("):
        return _parse_gauss(text[1:])
    if text.startswith("-("):
        return -_parse_gauss(text[1:])
    if text.startswith("(") and text.endswith(")"):
        inner = text[1:-1].replace(" ", "")
        m = re.match(r"^([+-]?[0-9]+(?:/[0-9]+)?)?([+-][0-9]*(?:/[0-9]+)?)?i?$",
                     inner)
        if inner.endswith("i"):
            body = inner[:-1]
            mm = re.match(r"^([+-]?[0-9]+(?:/[0-9]+)?)?([+-][0-9]*(?:/[0-9]+)?)$",
                          body)
            if mm:
                re_part = mm.group(1) or "0"
                im_part = mm.group(2)
                if im_part in ("+", "-"):
                    im_part += "1"
                return GR(Fraction(re_part), Fraction(im_part))
            return GR(0, Fraction(body if body not in ("", "+", "-") else body + "1"))
        return GR(Fraction(inner))
    if text.endswith("i"):
        body = text[:-1]
        if body in ("", "+"):
            return GR(0, 1)
        if body == "-":
            return GR(0, -1)
        return GR(0, Fraction(body))
    return GR(Fraction(text))


def _split_terms(text):
    terms, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if (ch in "+-" and depth == 0 and not cur.rstrip().endswith("^")
                and cur.strip() not in ("", "*")):
            terms.append(cur)
            cur = ch
        else:
            cur += ch
    if cur.strip():
        terms.append(cur)
    return terms


def parse_entry(text):
    """Parse one polynomial entry into {power: GR}."""
    out = {}
    for term in _split_terms(text.replace(" ", "")):
        m = _TERM.match(term.strip())
        if not m or (m.group("coef") is None and m.group("z") is None):
            raise ValueError(f"cannot parse term {term!r}")
        coef = _parse_gauss(m.group("coef") or "")
        power = 0
        if m.group("z"):
            power = int(m.group("pow")) if m.group("pow") is not None else 1
        out[power] = out.get(power, GR_ZERO) + coef
    return out


def parse_matrix(text, n_trunc=None):
    """Parse 'p11, p12; p21, p22' into a PolySeriesMatrix."""
    rows = [r for r in text.strip().split(";") if r.strip()]
    parsed = [[parse_entry(e) for e in row.split(",")] for row in rows]
    r = len(parsed)
    if any(len(row) != r for row in parsed):
        raise ValueError("matrix must be square")
    min_pow = min((p for row in parsed for e in row for p in e), default=0)
    max_pow = max((p for row in parsed for e in row for p in e), default=0)
    offset = max(0, -min_pow)
    if n_trunc is None:
        n_trunc = 2 * (abs(max_pow) + offset + 1) * r + 4
    ent = []
    for row in parsed:
        out_row = []
        for e in row:
            c = [GR_ZERO] * n_trunc
            for p, v in e.items():
                if p + offset < n_trunc:
                    c[p + offset] = c[p + offset] + v
            out_row.append(Series(c, n_trunc))
        ent.append(out_row)
    return PolySeriesMatrix(ent, n_trunc, offset=offset)
