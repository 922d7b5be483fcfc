"""
Exact engine for Markov triples, their lattice triangles and integral affine
geometry in the plane.

Everything here runs on Python integers and ``fractions.Fraction``; no float
ever enters a comparison. Markov numbers grow doubly exponentially along a
branch, so big integers are load-bearing, not a convenience.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .exceptions import DomainError, InternalError

logger = logging.getLogger('nonsqueeze')

ROOT_TRIPLE = (1, 1, 1)


def as_rational(value, name='value'):
    """Parse an int, Fraction or "p/q" string exactly. Floats are refused."""
    if isinstance(value, bool):
        raise DomainError(f"{name} must be rational, got a boolean.")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise DomainError(f"{name} '{value}' is not a rational of the form p/q.")
    raise DomainError(f"{name} must be an int, Fraction or 'p/q' string, got {type(value).__name__}.")


def as_point(p):
    x, y = p
    return (as_rational(x, 'x'), as_rational(y, 'y'))


def _sub(p, q):
    return (p[0] - q[0], p[1] - q[1])


def _det(u, v):
    return u[0] * v[1] - u[1] * v[0]


def _ext_gcd(a, b):
    """Return (g, x, y) with a*x + b*y = g = gcd(a, b) >= 0."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        quotient = old_r // r
        old_r, r = r, old_r - quotient * r
        old_s, s = s, old_s - quotient * s
        old_t, t = t, old_t - quotient * t
    if old_r < 0:
        return -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def primitive_vector(direction):
    """
    Split a rational direction d into (v, gamma) with d = gamma * v and v the
    primitive integer vector pointing the same way.
    """
    dx, dy = as_point(direction)
    if dx == 0 and dy == 0:
        raise DomainError("Zero direction has no primitive vector.")
    denom = math.lcm(dx.denominator, dy.denominator)
    nx, ny = int(dx * denom), int(dy * denom)
    g = math.gcd(nx, ny)
    return (nx // g, ny // g), Fraction(g, denom)


def unimodular_to_e1(v):
    """Integer matrix of determinant 1 sending the primitive vector v to (1, 0)."""
    g, s, t = _ext_gcd(v[0], v[1])
    if g != 1:
        raise DomainError(f"Vector {v} is not primitive.")
    return ((s, t), (-v[1], v[0]))


# --- Markov triples ---

def is_markov(a, b, c):
    for entry in (a, b, c):
        if isinstance(entry, bool) or not isinstance(entry, int):
            raise DomainError(f"Markov entries must be integers, got {entry!r}.")
        if entry < 1:
            raise DomainError(f"Markov entries must be positive, got {entry}.")
    return a * a + b * b + c * c == 3 * a * b * c


@dataclass(frozen=True, order=True)
class MarkovTriple:
    a: int
    b: int
    c: int

    def __post_init__(self):
        a, b, c = sorted((self.a, self.b, self.c))
        if not is_markov(a, b, c):
            raise DomainError(f"({a}, {b}, {c}) does not satisfy a^2 + b^2 + c^2 = 3abc.")
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', b)
        object.__setattr__(self, 'c', c)

    @property
    def entries(self):
        return (self.a, self.b, self.c)

    @property
    def product(self):
        return self.a * self.b * self.c

    def weights(self):
        return (self.a ** 2, self.b ** 2, self.c ** 2)

    def is_root(self):
        return self.entries == ROOT_TRIPLE

    def __str__(self):
        return f"({self.a}, {self.b}, {self.c})"


def mutate(t, slot):
    if slot not in (0, 1, 2):
        raise DomainError(f"Mutation slot must be 0, 1 or 2, got {slot}.")
    entries = list(t.entries)
    others = [entries[k] for k in range(3) if k != slot]
    entries[slot] = 3 * others[0] * others[1] - entries[slot]
    return MarkovTriple(*entries)


def enumerate_tree(max_entry):
    """All Markov triples with largest entry <= max_entry, by breadth-first mutation."""
    if max_entry < 1:
        raise DomainError(f"max_entry must be at least 1, got {max_entry}.")
    root = MarkovTriple(*ROOT_TRIPLE)
    seen = {root}
    queue = deque([root])
    while queue:
        current = queue.popleft()
        for slot in range(3):
            child = mutate(current, slot)
            if child.c <= max_entry and child not in seen:
                seen.add(child)
                queue.append(child)
    logger.debug(f"Markov tree up to {max_entry}: {len(seen)} triples")
    return sorted(seen, key=lambda t: (t.c, t.b, t.a))


def descent_path(t):
    """Mutations from t down to (1, 1, 1); each step lowers the largest entry."""
    path = [t]
    current = t
    while not current.is_root():
        smaller = [m for m in (mutate(current, slot) for slot in range(3)) if m.c < current.c]
        if len(set(smaller)) != 1:
            raise InternalError(f"Triple {current} has {len(set(smaller))} descending mutations.")
        current = smaller[0]
        path.append(current)
    return path


def branch_sequence(n):
    """[m_0, ..., m_n] with m_0 = m_1 = m_2 = 1 and m_{k+2} = 3 m_{k+1} m_k - m_{k-1}."""
    if n < 0:
        raise DomainError(f"Branch length must be non-negative, got {n}.")
    m = [1, 1, 1]
    while len(m) < n + 1:
        m.append(3 * m[-1] * m[-2] - m[-3])
    return m[:n + 1]


# --- Integral affine geometry ---

def affine_length(p, q):
    p, q = as_point(p), as_point(q)
    if p == q:
        raise DomainError("Affine length of a degenerate segment is undefined.")
    _, gamma = primitive_vector(_sub(q, p))
    return gamma


def affine_distance(p, line):
    point, direction = line
    p, point = as_point(p), as_point(point)
    v, _ = primitive_vector(direction)
    return abs(_det(v, _sub(point, p)))


@dataclass(frozen=True)
class IntAffineMap2:
    A: tuple
    t: tuple = (Fraction(0), Fraction(0))

    def __post_init__(self):
        rows = tuple(tuple(int(entry) for entry in row) for row in self.A)
        object.__setattr__(self, 'A', rows)
        object.__setattr__(self, 't', as_point(self.t))
        if self.det not in (1, -1):
            raise DomainError(f"Matrix {rows} has determinant {self.det}, not +-1.")

    @property
    def det(self):
        (a, b), (c, d) = self.A
        return a * d - b * c

    @classmethod
    def identity(cls):
        return cls(((1, 0), (0, 1)))

    @classmethod
    def translation(cls, v):
        return cls(((1, 0), (0, 1)), v)

    def apply(self, p):
        x, y = as_point(p)
        (a, b), (c, d) = self.A
        return (a * x + b * y + self.t[0], c * x + d * y + self.t[1])

    def apply_triangle(self, tri):
        return RationalTriangle(*(self.apply(v) for v in tri.vertices))

    def compose(self, other):
        """self after other."""
        (a, b), (c, d) = self.A
        (e, f), (g, h) = other.A
        matrix = ((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h))
        return IntAffineMap2(matrix, self.apply(other.t))

    def inverse(self):
        (a, b), (c, d) = self.A
        det = self.det
        inv = ((d * det, -b * det), (-c * det, a * det))
        linear = IntAffineMap2(inv)
        tx, ty = linear.apply(self.t)
        return IntAffineMap2(inv, (-tx, -ty))

    def is_identity(self):
        return self.A == ((1, 0), (0, 1)) and self.t == (0, 0)


@dataclass(frozen=True)
class RationalTriangle:
    v1: tuple
    v2: tuple
    v3: tuple

    def __post_init__(self):
        for name in ('v1', 'v2', 'v3'):
            object.__setattr__(self, name, as_point(getattr(self, name)))
        if _det(_sub(self.v2, self.v1), _sub(self.v3, self.v1)) == 0:
            raise DomainError(f"Degenerate triangle {self.vertices}.")

    @property
    def vertices(self):
        return (self.v1, self.v2, self.v3)

    def edge(self, i):
        """Edge E_i, opposite vertex i, as an ordered (start, end) pair."""
        v = self.vertices
        return v[(i + 1) % 3], v[(i + 2) % 3]

    def area(self):
        return abs(_det(_sub(self.v2, self.v1), _sub(self.v3, self.v1))) / 2

    def affine_lengths(self):
        return tuple(affine_length(*self.edge(i)) for i in range(3))

    def affine_perimeter(self):
        return sum(self.affine_lengths())

    def affine_heights(self):
        """d_aff(v_i, E_i) for each vertex."""
        heights = []
        for i in range(3):
            start, end = self.edge(i)
            heights.append(affine_distance(self.vertices[i], (start, _sub(end, start))))
        return tuple(heights)

    def vertex_set(self):
        return frozenset(self.vertices)

    def scaled(self, s):
        s = as_rational(s, 'scale')
        return RationalTriangle(*((s * x, s * y) for x, y in self.vertices))

    def translated(self, v):
        return IntAffineMap2.translation(v).apply_triangle(self)


# --- Charts and Markov triangles ---

def _chart_residue(a, b, c):
    """Smallest positive q with b*q = 3c (mod a); q = 1 when a = 1."""
    if a == 1:
        return 1
    if math.gcd(a, b) != 1:
        raise InternalError(f"No residue solves {b}q = {3 * c} mod {a}: gcd({a}, {b}) != 1.")
    q = (3 * c * pow(b, -1, a)) % a
    if q == 0:
        raise InternalError(f"Residue for ({a}, {b}, {c}) collapsed to zero.")
    return q


@dataclass(frozen=True)
class ChartEmbedding3:
    A3: tuple
    t3: tuple
    vertex: int
    q: int

    def minors(self):
        rows = self.A3
        return tuple(
            rows[i][0] * rows[j][1] - rows[i][1] * rows[j][0]
            for i, j in ((0, 1), (0, 2), (1, 2))
        )

    def is_saturated(self):
        return math.gcd(*self.minors()) == 1

    def apply(self, x):
        x = as_point(x)
        return tuple(row[0] * x[0] + row[1] * x[1] + t for row, t in zip(self.A3, self.t3))

    def pull_back(self, y):
        """The unique x with apply(x) = y; y must lie on the chart plane."""
        r = tuple(as_rational(yk) - tk for yk, tk in zip(y, self.t3))
        rows = self.A3
        for i, j in ((0, 1), (0, 2), (1, 2)):
            det = rows[i][0] * rows[j][1] - rows[i][1] * rows[j][0]
            if det:
                break
        else:
            raise InternalError(f"Chart matrix {rows} is not injective.")
        x0 = Fraction(r[i] * rows[j][1] - rows[i][1] * r[j], det)
        x1 = Fraction(rows[i][0] * r[j] - r[i] * rows[j][0], det)
        if self.apply((x0, x1)) != tuple(Fraction(yk) for yk in y):
            raise DomainError(f"Point {y} is not on the chart plane.")
        return (x0, x1)


def chart_embedding(t, vertex=0):
    """
    The integral affine chart of the plane a^2 y1 + b^2 y2 + c^2 y3 = (abc)^2
    centred at the vertex whose weight has index ``vertex`` (0, 1, 2 for
    a^2, b^2, c^2). The other two weights are relabelled cyclically and the
    rows are returned in the original coordinate order.
    """
    if vertex not in (0, 1, 2):
        raise DomainError(f"Chart vertex must be 0, 1 or 2, got {vertex}.")
    entries = t.entries
    a, b, c = entries[vertex], entries[(vertex + 1) % 3], entries[(vertex + 2) % 3]
    q = _chart_residue(a, b, c)
    top = b * (b * q - 3 * c)
    if top % a:
        raise InternalError(f"Chart entry {top}/{a} is not integral for {t}, q={q}.")
    col1 = (-b * b, a * a, 0)
    col2 = (1 + top // a, 1 - a * q, 1)
    shift = (b * b * c * c, 0, 0)

    rows = [None] * 3
    t3 = [None] * 3
    for local in range(3):
        original = (vertex + local) % 3
        rows[original] = (col1[local], col2[local])
        t3[original] = Fraction(shift[local])
    chart = ChartEmbedding3(A3=tuple(rows), t3=tuple(t3), vertex=vertex, q=q)
    if not chart.is_saturated():
        raise InternalError(f"Chart for {t} at vertex {vertex} is not lattice-saturating: minors {chart.minors()}.")
    return chart


def simplex_vertices(t):
    """Vertices of the weighted simplex, vertex k on the k-th axis."""
    a, b, c = t.entries
    return (
        (Fraction(b * b * c * c), Fraction(0), Fraction(0)),
        (Fraction(0), Fraction(a * a * c * c), Fraction(0)),
        (Fraction(0), Fraction(0), Fraction(a * a * b * b)),
    )


@dataclass(frozen=True)
class MarkovTriangle:
    triple: MarkovTriple
    alpha: Fraction
    realization: RationalTriangle
    q_chart: int
    edge_weights: tuple
    vertex: int = 0

    @property
    def scale(self):
        return self.alpha / self.triple.product


def build_triangle(t, alpha, vertex=0):
    alpha = as_rational(alpha, 'alpha')
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}.")
    chart = chart_embedding(t, vertex)
    pulled = [chart.pull_back(y) for y in simplex_vertices(t)]
    scale = alpha / t.product
    realization = RationalTriangle(*((scale * x, scale * y) for x, y in pulled))
    triangle = MarkovTriangle(
        triple=t,
        alpha=alpha,
        realization=realization,
        q_chart=chart.q,
        edge_weights=t.weights(),
        vertex=vertex,
    )
    _check_markov_identities(triangle)
    return triangle


def _check_markov_identities(triangle):
    tri = triangle.realization
    alpha = triangle.alpha
    lengths = tri.affine_lengths()
    expected = tuple(triangle.scale * w for w in triangle.edge_weights)
    if lengths != expected:
        raise InternalError(f"Edge lengths {lengths} differ from {expected} for {triangle.triple}.")
    if tri.area() != alpha * alpha / 2:
        raise InternalError(f"Area {tri.area()} differs from alpha^2/2 for {triangle.triple}.")
    if sum(lengths) != 3 * alpha:
        raise InternalError(f"Affine perimeter {sum(lengths)} differs from 3*alpha for {triangle.triple}.")


# --- Normal forms and strip fitting ---

_REFLECT_Y = ((1, 0), (0, -1))


def _base_on_axis(tri, i, reverse=False):
    """Map edge E_i onto the positive x-axis from the origin, apex above."""
    start, end = tri.edge(i)
    if reverse:
        start, end = end, start
    v, _ = primitive_vector(_sub(end, start))
    M = IntAffineMap2(unimodular_to_e1(v)).compose(
        IntAffineMap2.translation((-start[0], -start[1]))
    )
    if M.apply(tri.vertices[i])[1] < 0:
        M = IntAffineMap2(_REFLECT_Y).compose(M)
    return M, start, end


def _shear(k):
    return IntAffineMap2(((1, k), (0, 1)))


def canonical_form(tri):
    lengths = tri.affine_lengths()
    longest = max(lengths)
    candidates = []
    for i in range(3):
        if lengths[i] != longest:
            continue
        for reverse in (False, True):
            M, start, end = _base_on_axis(tri, i, reverse)
            ax, ay = M.apply(tri.vertices[i])
            M = _shear(-math.floor(ax / ay)).compose(M)
            image = (M.apply(start), M.apply(end), M.apply(tri.vertices[i]))
            candidates.append((image, M))
    image, M = min(candidates, key=lambda candidate: candidate[0])
    return RationalTriangle(*image), M


def is_aff_equivalent(t1, t2):
    c1, m1 = canonical_form(t1)
    c2, m2 = canonical_form(t2)
    if c1 != c2:
        return None
    return m2.inverse().compose(m1)


@dataclass(frozen=True)
class HalfStripFit:
    map: IntAffineMap2
    image: RationalTriangle
    height: Fraction
    base_edge_index: int


def fit_in_strip(tri):
    """First edge (by index) along which tri fits in [0, inf) x [0, 1)."""
    for i in range(3):
        M, start, end = _base_on_axis(tri, i)
        ax, height = M.apply(tri.vertices[i])
        if height >= 1:
            continue
        if ax < 0:
            M = _shear(-math.floor(ax / height)).compose(M)
        image = M.apply_triangle(tri)
        if any(x < 0 or y < 0 or y >= 1 for x, y in image.vertices):
            raise InternalError(f"Normalized triangle {image.vertices} escaped the strip.")
        return HalfStripFit(map=M, image=image, height=height, base_edge_index=i)
    return None


@dataclass(frozen=True)
class NoFitCertificate:
    alpha: Fraction
    height_lower_bound: Fraction
    chain: tuple


@dataclass(frozen=True)
class FitResult:
    alpha: Fraction
    triple: Optional[MarkovTriple] = None
    fit: Optional[HalfStripFit] = None
    certificate: Optional[NoFitCertificate] = None
    branch_index: Optional[int] = None
    walked: tuple = field(default_factory=tuple)

    @property
    def fits(self):
        return self.fit is not None

    @property
    def height(self):
        return self.fit.height if self.fit else None


def no_fit_certificate(alpha):
    alpha = as_rational(alpha, 'alpha')
    if alpha < 3:
        raise DomainError(f"No analytic obstruction below alpha = 3, got {alpha}.")
    bound = alpha / 3
    chain = (
        f"affine perimeter = 3*alpha = {3 * alpha}, so the longest edge E has alpha <= l_aff(E) < {3 * alpha}",
        "if E is not parallel to (1,0), the vertical extent of E is at least l_aff(E) >= alpha >= 3",
        f"if E is parallel to (1,0), height = 2*area/l_aff(E) = alpha^2/l_aff(E) > alpha/3 = {bound}",
        f"alpha/3 = {bound} >= 1, so no Markov triangle of size {alpha} fits in [0, inf) x [0, 1)",
    )
    return NoFitCertificate(alpha=alpha, height_lower_bound=bound, chain=chain)


def find_fitting_triple(alpha, iteration_cap=64):
    alpha = as_rational(alpha, 'alpha')
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}.")
    if alpha >= 3:
        logger.info(f"alpha = {alpha} >= 3: returning the analytic no-fit certificate")
        return FitResult(alpha=alpha, certificate=no_fit_certificate(alpha))

    m = branch_sequence(2)
    walked = []
    for n in range(iteration_cap):
        while len(m) < n + 3:
            m.append(3 * m[-1] * m[-2] - m[-3])
        triple = MarkovTriple(m[n + 2], m[n + 1], m[n])
        expected = alpha * m[n + 1] * m[n] / m[n + 2]
        if walked and expected >= walked[-1][1]:
            raise InternalError(f"Branch heights stopped decreasing at n={n}: {walked[-1][1]} -> {expected}.")
        walked.append((triple, expected))
        logger.debug(f"alpha={alpha} n={n} triple={triple} longest-edge height={expected}")

        fit = fit_in_strip(build_triangle(triple, alpha).realization)
        if fit is None:
            continue
        if fit.height != expected:
            raise InternalError(f"Fit height {fit.height} differs from branch formula {expected} at {triple}.")
        logger.info(f"alpha = {alpha} fits via {triple} with height {fit.height}")
        return FitResult(alpha=alpha, triple=triple, fit=fit, branch_index=n, walked=tuple(walked))

    raise InternalError(
        f"No fitting branch triple for alpha = {alpha} within {iteration_cap} steps; "
        f"last height {walked[-1][1] if walked else None}."
    )
