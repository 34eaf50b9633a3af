"""Problem parameters, grids, weights and initial fields.

Everything here is plain data: a :class:`ProblemConfig` holds the scalar
parameters and weight descriptions, :func:`build_grid` lays a uniform grid over
an axis-aligned box, and :class:`DiscreteField` stores nodal coefficients.

Unknown fields live on interior nodes only and are implicitly zero on the
boundary and outside the box. Weight fields do not vanish on the boundary, so
they are sampled on the closed grid (``closed=True``).
"""

from __future__ import annotations

import math
import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidGrid, SpecError

MODES = ("subcritical", "critical", "bn")
STRICTNESS = ("strict", "lab")
WEIGHT_KINDS = ("constant", "sinusoid", "radial_bump", "step", "tabulated")


def _smooth_bump(rho):
    """C-infinity bump of the normalized radius, equal to 1 at 0 and 0 for rho >= 1."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - rho[inside] ** 2))
    return out


@dataclass(frozen=True)
class WeightSpec:
    """Description of a coefficient function a(x) or b(x).

    Attributes:
        kind: one of ``constant``, ``sinusoid``, ``radial_bump``, ``step``,
            ``tabulated``.
        params: keyword parameters of the kind (see :meth:`evaluate`).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise SpecError(f"unknown weight kind {self.kind!r}")

    @classmethod
    def constant(cls, c):
        return cls("constant", {"value": float(c)})

    def evaluate(self, points):
        """Evaluate the weight at an (M, N) array of points.

        ``tabulated`` weights carry nodal values and cannot be evaluated at
        arbitrary points; :func:`sample_weight` handles them directly.
        """
        x = np.atleast_2d(np.asarray(points, dtype=float))
        prm = self.params
        if self.kind == "constant":
            return np.full(x.shape[0], float(prm["value"]))
        if self.kind == "sinusoid":
            freqs = np.broadcast_to(np.asarray(prm.get("freqs", 1.0), dtype=float), (x.shape[1],))
            phases = np.broadcast_to(np.asarray(prm.get("phases", 0.0), dtype=float), (x.shape[1],))
            val = np.ones(x.shape[0])
            for d in range(x.shape[1]):
                if freqs[d] != 0.0 or phases[d] != 0.0:
                    val = val * np.sin(2.0 * math.pi * freqs[d] * x[:, d] + phases[d])
            return float(prm.get("offset", 0.0)) + float(prm.get("amplitude", 1.0)) * val
        if self.kind == "radial_bump":
            center = np.asarray(prm["center"], dtype=float)
            rho = np.linalg.norm(x - center, axis=1) / float(prm["radius"])
            return float(prm.get("amplitude", 1.0)) * _smooth_bump(rho)
        if self.kind == "step":
            z = (x[:, int(prm.get("axis", 0))] - float(prm.get("at", 0.5))) / float(prm.get("width", 0.02))
            low, high = float(prm.get("low", 0.0)), float(prm.get("high", 1.0))
            return low + (high - low) * 0.5 * (1.0 + np.tanh(z))
        raise SpecError("tabulated weights have nodal values only")

    def describe(self):
        """Single-line config-file form of the weight."""
        if self.kind == "tabulated":
            return f"tabulated path={self.params.get('path', '<inline>')}"
        parts = [self.kind]
        for key, val in self.params.items():
            if isinstance(val, (list, tuple, np.ndarray)):
                val = ",".join(f"{float(v):g}" for v in val)
            parts.append(f"{key}={val}")
        return " ".join(parts)


@dataclass(frozen=True)
class ProblemConfig:
    """Scalar parameters of the mixed local/nonlocal problem.

    Attributes:
        dim_N: space dimension.
        p, q: exponents of the local and nonlocal operators.
        s: fractional order of the nonlocal operator.
        delta: concave exponent (sublinear term).
        r: convex exponent (superlinear term).
        lam: the parameter multiplying the sublinear term (and the
            superlinear term outside ``bn`` mode). Serialized as ``lambda``.
        mode: ``subcritical``, ``critical`` or ``bn``.
        weight_a, weight_b: coefficient functions of the two nonlinear terms.
        domain: side lengths of the box ``[0, L_1] x ... x [0, L_N]``.
        grid_n: subdivisions per axis.
        strictness: ``strict`` checks every standing assumption, ``lab``
            only checks that the quantities are defined.
    """

    dim_N: int = 2
    p: float = 1.5
    q: float = 1.8
    s: float = 0.5
    delta: float = 1.2
    r: float = 3.0
    lam: float = 1.0
    mode: str = "subcritical"
    weight_a: WeightSpec = field(default_factory=lambda: WeightSpec.constant(1.0))
    weight_b: WeightSpec = field(default_factory=lambda: WeightSpec.constant(1.0))
    domain: tuple = (1.0, 1.0)
    grid_n: int = 32
    strictness: str = "strict"

    @property
    def p_star(self):
        N, p = self.dim_N, self.p
        return math.inf if p >= N else N * p / (N - p)

    @property
    def q_star_s(self):
        N, sq = self.dim_N, self.s * self.q
        return math.inf if sq >= N else N * self.q / (N - sq)

    @property
    def c_r(self):
        """Coefficient of the superlinear term: lambda, or 1 in ``bn`` mode."""
        return 1.0 if self.mode == "bn" else self.lam

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {
            "dim_N": self.dim_N,
            "p": self.p,
            "q": self.q,
            "s": self.s,
            "delta": self.delta,
            "r": self.r,
            "lambda": self.lam,
            "mode": self.mode,
            "weight_a": self.weight_a.describe(),
            "weight_b": self.weight_b.describe(),
            "domain": list(self.domain),
            "grid_n": self.grid_n,
            "strictness": self.strictness,
        }


def validate_config(cfg):
    """Return the list of violated standing assumptions (empty when admissible)."""
    out = []
    N, p, q, s, d, r = cfg.dim_N, cfg.p, cfg.q, cfg.s, cfg.delta, cfg.r
    if cfg.mode not in MODES:
        out.append(f"mode = {cfg.mode!r} not in {{subcritical, critical, bn}}")
    if cfg.strictness not in STRICTNESS:
        out.append(f"strictness = {cfg.strictness!r} not in {{strict, lab}}")
    if p <= 1:
        out.append(f"p = {p:g} ≤ 1")
    if q <= 1:
        out.append(f"q = {q:g} ≤ 1")
    if not 0 < s < 1:
        out.append(f"s = {s:g} outside (0,1)")
    if cfg.grid_n < 2:
        out.append(f"grid_n = {cfg.grid_n} < 2")
    if len(cfg.domain) != N or any(not L > 0 for L in cfg.domain):
        out.append("domain must list dim_N positive side lengths")
    if cfg.strictness == "lab":
        if cfg.lam < 0:
            out.append(f"λ = {cfg.lam:g} < 0")
        return out

    if N < 2:
        out.append(f"N = {N} < 2")
    if not cfg.lam > 0:
        out.append(f"λ = {cfg.lam:g} ≤ 0")
    if s * q >= p:
        out.append(f"s·q = {s * q:g} ≥ p")
    if p >= N:
        out.append(f"p = {p:g} ≥ N")
    if d <= 1:
        out.append("δ ≤ 1")
    if d >= min(p, q):
        out.append("δ ≥ min{p,q}")
    crit = max(cfg.p_star, cfg.q_star_s)
    if r < max(p, q):
        out.append("r < max{p,q}")
    if r > crit:
        out.append(f"r > max{{p*, q*_s}} = {crit:g}")
    if cfg.mode == "subcritical":
        if p >= q:
            out.append("p ≥ q (subcritical mode needs p < q)")
        if math.isclose(r, crit, rel_tol=1e-12):
            out.append(f"r = max{{p*, q*_s}} = {crit:g} (subcritical mode needs r below it)")
    elif cfg.mode in ("critical", "bn"):
        if q >= p:
            out.append("q ≥ p (critical/bn mode needs q < p)")
        if not math.isclose(r, cfg.p_star, rel_tol=1e-12):
            out.append(f"r ≠ p* = {cfg.p_star:g}")
    return out


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid over ``[0, L_1] x ... x [0, L_N]``.

    Attributes:
        dim: space dimension.
        n: subdivisions per axis.
        lengths: side lengths of the box.
        h: spacing per axis.
        cell_volume: volume of one grid cell.
        interior_count: number of unknowns, ``(n-1)^dim``.
        node_count: number of nodes of the closed grid, ``(n+1)^dim``.
        coords: (interior_count, dim) coordinates of the interior nodes in
            C order (last axis fastest).
    """

    dim: int
    n: int
    lengths: tuple
    h: tuple
    cell_volume: float
    interior_count: int
    node_count: int
    coords: np.ndarray

    @property
    def key(self):
        return (self.dim, self.n, self.lengths)

    @property
    def interior_shape(self):
        return (self.n - 1,) * self.dim

    @property
    def closed_shape(self):
        return (self.n + 1,) * self.dim

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    @property
    def center(self):
        return np.asarray(self.lengths, dtype=float) / 2.0

    def closed_coords(self):
        axes = [np.linspace(0.0, L, self.n + 1) for L in self.lengths]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.key == other.key

    def __hash__(self):
        return hash(self.key)


def build_grid(domain, n):
    """Uniform grid with ``n`` subdivisions per axis over a box of the given side lengths."""
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidGrid(f"need n >= 2 subdivisions, got {n!r}")
    lengths = tuple(float(L) for L in domain)
    if not lengths or any(not L > 0 for L in lengths):
        raise InvalidGrid(f"invalid box side lengths {domain!r}")
    dim = len(lengths)
    h = tuple(L / n for L in lengths)
    axes = [np.arange(1, n) * hd for hd in h]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1) if n > 1 else np.zeros((0, dim))
    coords.setflags(write=False)
    return Grid(
        dim=dim,
        n=int(n),
        lengths=lengths,
        h=h,
        cell_volume=float(np.prod(h)),
        interior_count=(n - 1) ** dim,
        node_count=(n + 1) ** dim,
        coords=coords,
    )


def grid_for(cfg):
    return build_grid(cfg.domain, cfg.grid_n)


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """Nodal coefficients of a piecewise-multilinear function.

    With ``closed=False`` (unknowns) there is one value per interior node and
    the function vanishes on the boundary and outside the box. With
    ``closed=True`` (weights) there is one value per node of the closed grid.
    """

    grid: Grid
    values: np.ndarray
    closed: bool = False

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float).ravel()
        expected = self.grid.node_count if self.closed else self.grid.interior_count
        if vals.size != expected:
            raise SpecError(f"field has {vals.size} values, grid expects {expected}")
        if not np.all(np.isfinite(vals)):
            raise SpecError("field has non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size

    def scaled(self, t):
        return DiscreteField(self.grid, t * self.values, self.closed)

    def like(self, values):
        return DiscreteField(self.grid, values, self.closed)

    def as_array(self):
        shape = self.grid.closed_shape if self.closed else self.grid.interior_shape
        return self.values.reshape(shape)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.interior_count))


def sample_weight(spec, grid):
    """Nodal samples of a weight on the closed grid."""
    if spec.kind == "tabulated":
        vals = np.asarray(spec.params["values"], dtype=float).ravel()
        if vals.size != grid.node_count:
            raise SpecError(f"tabulated weight has {vals.size} values, grid has {grid.node_count} nodes")
        return DiscreteField(grid, vals, closed=True)
    if spec.kind == "constant":
        return DiscreteField(grid, np.full(grid.node_count, float(spec.params["value"])), closed=True)
    return DiscreteField(grid, spec.evaluate(grid.closed_coords()), closed=True)


def make_bump(grid, center, radius, amplitude=1.0):
    """Smooth nonnegative bump supported in the open ball ``|x - center| < radius``."""
    center = np.asarray(center, dtype=float)
    if radius <= 0:
        raise SpecError("bump radius must be positive")
    rho = np.linalg.norm(grid.coords - center, axis=1) / radius
    if not np.any(rho < 1.0):
        raise SpecError("bump support contains no interior node")
    return DiscreteField(grid, amplitude * _smooth_bump(rho))


# -- config files -----------------------------------------------------------

_FLOAT_KEYS = {"p", "q", "s", "delta", "r", "lambda"}
_INT_KEYS = {"dim_N", "grid_n"}


def _parse_value(text):
    if "," in text:
        return [float(v) for v in text.split(",") if v.strip()]
    try:
        return float(text)
    except ValueError:
        return text


def parse_weight(text, base_dir=None):
    """Parse ``kind key=value ...`` (or ``kind value`` for constants)."""
    tokens = shlex.split(text)
    if not tokens:
        raise SpecError("empty weight specification")
    kind, rest = tokens[0], tokens[1:]
    if kind not in WEIGHT_KINDS:
        raise SpecError(f"unknown weight kind {kind!r}")
    params = {}
    for tok in rest:
        if "=" not in tok:
            if kind == "constant" and "value" not in params:
                params["value"] = float(tok)
                continue
            raise SpecError(f"malformed weight parameter {tok!r}")
        key, val = tok.split("=", 1)
        params[key] = val if key == "path" else _parse_value(val)
    if kind == "constant":
        params.setdefault("value", 1.0)
    if kind == "step":
        params["axis"] = int(params.get("axis", 0))
    if kind == "tabulated":
        path = Path(params["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        params["values"] = np.loadtxt(path, delimiter=",", ndmin=1).ravel()
    return WeightSpec(kind, params)


def parse_config_text(text, base_dir=None):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"line {lineno}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        if key in _FLOAT_KEYS:
            kwargs["lam" if key == "lambda" else key] = float(val)
        elif key in _INT_KEYS:
            kwargs[key] = int(val)
        elif key in ("mode", "strictness"):
            kwargs[key] = val
        elif key in ("weight_a", "weight_b"):
            kwargs[key] = parse_weight(val, base_dir)
        elif key == "domain":
            kwargs[key] = tuple(float(v) for v in val.split(","))
        else:
            raise SpecError(f"line {lineno}: unknown key {key!r}")
    if "domain" not in kwargs:
        kwargs["domain"] = (1.0,) * kwargs.get("dim_N", 2)
    return ProblemConfig(**kwargs)


def load_config(path):
    path = Path(path)
    return parse_config_text(path.read_text(), base_dir=path.parent)
