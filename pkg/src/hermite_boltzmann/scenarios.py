"""Benchmark configurations, nondimensionalisation and Krook-Wu references."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .basis import ExpansionCenter, basis_values, gauss_hermite, index_set, n_coeffs
from .moments import SpectralDistribution
from .solver import SolverConfig, Wall
from .tensor import KernelSpec

K_BOLTZMANN = 1.380649e-23
MASS_AR = 6.63e-26
MASS_KR = 13.91e-26

# collision-model tables for the Ar-Kr mixture (row species 1 = Ar)
MODEL_TABLES = {
    "vss": {
        "omega": [[0.81, 0.805], [0.805, 0.8]],
        "alpha": [[1.4, 1.36], [1.36, 1.32]],
        "d_ref": [[4.11e-10, 4.405e-10], [4.405e-10, 4.7e-10]],
    },
    "vhs": {
        "omega": [[0.81, 0.805], [0.805, 0.8]],
        "alpha": [[1.0, 1.0], [1.0, 1.0]],
        "d_ref": [[4.17e-10, 4.465e-10], [4.465e-10, 4.76e-10]],
    },
    "hs": {
        "omega": [[0.5, 0.5], [0.5, 0.5]],
        "alpha": [[1.0, 1.0], [1.0, 1.0]],
        "d_ref": [[3.63e-10, 3.895e-10], [3.895e-10, 4.16e-10]],
    },
}


class UnknownCaseError(KeyError):
    pass


@dataclass
class GasMixtureSpec:
    """Physical species data and the characteristic scales."""

    masses: list  # kg
    omega: list
    alpha: list
    d_ref: list  # m
    T_ref: list  # K
    x0: float = 1e-3
    n0: float = 1.68e21
    T0: float = 273.0
    m0: float = MASS_AR
    k_B: float = K_BOLTZMANN

    def __post_init__(self):
        s = len(self.masses)
        for name in ("omega", "alpha", "d_ref", "T_ref"):
            tab = np.asarray(getattr(self, name), dtype=float)
            if tab.shape != (s, s):
                raise ValueError(f"{name} must be an {s}x{s} table")
            if np.any(tab <= 0):
                raise ValueError(f"{name} entries must be positive")
        if min(self.masses) <= 0 or min(self.x0, self.n0, self.T0, self.m0) <= 0:
            raise ValueError("masses and scales must be positive")

    @property
    def u0(self) -> float:
        return math.sqrt(self.k_B * self.T0 / self.m0)

    @property
    def t0(self) -> float:
        return self.x0 / self.u0

    @property
    def species_masses(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=float) / self.m0

    def kernel(self, i: int, j: int) -> KernelSpec:
        m = self.species_masses
        return KernelSpec.vss(self.omega[i][j], self.alpha[i][j], m[i], m[j])

    @classmethod
    def ar_kr(cls, model: str, n0: float, **scales) -> "GasMixtureSpec":
        tab = MODEL_TABLES[model]
        return cls([MASS_AR, MASS_KR], tab["omega"], tab["alpha"], tab["d_ref"], [[273.0] * 2] * 2, n0=n0, **scales)


def knudsen_matrix(spec: GasMixtureSpec) -> np.ndarray:
    m = np.asarray(spec.masses, dtype=float)
    s = len(m)
    kn = np.empty((s, s))
    for i in range(s):
        for j in range(s):
            kn[i, j] = 1.0 / (
                math.sqrt(1 + m[i] / m[j])
                * math.pi
                * spec.n0
                * spec.d_ref[i][j] ** 2
                * (spec.T_ref[i][j] / spec.T0) ** (spec.omega[i][j] - 0.5)
                * spec.x0
            )
    return kn


# --- Krook-Wu ------------------------------------------------------------------


@dataclass(frozen=True)
class KrookWu2:
    """Two-species parameters; defaults are the classical test values."""

    n: tuple = (1.0, 1.0)
    m: tuple = (1.0, 2.0)
    lam: tuple = ((1.0, 0.5), (0.5, 1.0))
    t0: float = 3.0

    @property
    def mu(self) -> float:
        m1, m2 = self.m
        return 4 * m1 * m2 / (m1 + m2) ** 2

    @property
    def p(self) -> tuple:
        mu, l = self.mu, self.lam
        return (l[1][1] - l[1][0] * mu * (3 - 2 * mu), l[0][0] - l[0][1] * mu * (3 - 2 * mu))

    @property
    def A(self) -> float:
        mu, l = self.mu, self.lam
        p1, p2 = self.p
        return (l[0][0] + l[1][0] * mu * (3 - 2 * mu * p2 / p1)) / 6

    def constraint(self) -> float:
        """Residual of the admissibility condition (zero when satisfied)."""
        mu, l = self.mu, self.lam
        p1, p2 = self.p
        return (p1 - p2) * (2 * mu**2 * (l[1][0] / p1 - l[0][1] / p2) - 1)

    def Q(self, t):
        A = self.A
        return A / (A * math.exp(A * (t + self.t0)) - 2 * self.p[0] * A)

    def kernels(self):
        return [[KernelSpec.constant(self.lam[i][j] / (4 * math.pi * self.n[j])) for j in range(2)] for i in range(2)]


@dataclass(frozen=True)
class KrookWuS:
    """s-species family with unit densities and masses 1..s."""

    s: int = 5
    t0: float = 20.0
    A: float = 1.0 / 6.0

    @property
    def masses(self) -> list:
        return [float(i + 1) for i in range(self.s)]

    def mu(self, i: int, j: int) -> float:
        # the pairing weight of the two-species case; the symmetric-sum form
        # 4 m_i m_j / (m_i^2 + m_j^2) does not produce a solution of the equation
        mi, mj = self.masses[i], self.masses[j]
        return 4 * mi * mj / (mi + mj) ** 2

    def lam(self, i: int, j: int) -> float:
        mu = self.mu(i, j)
        return 1.0 / (self.s * mu * (3 - 2 * mu))

    def Q(self, t):
        return 1.0 / (math.exp(self.A * (t + self.t0)) - 2)

    def kernels(self):
        return [[KernelSpec.constant(self.lam(i, j) / (4 * math.pi)) for j in range(self.s)] for i in range(self.s)]


def _kw_pattern(M: int):
    """(1 - |a|/2) / a! * prod (a_j - 1)!! over all-even multi-indices, else 0."""
    iset = index_set(M)
    out = np.zeros(iset.size)
    half = np.zeros(iset.size)
    for k, a in enumerate(iset):
        if any(x % 2 for x in a):
            continue
        df = 1
        for x in a:
            for y in range(x - 1, 0, -2):
                df *= y
        o = sum(a)
        out[k] = (1 - o / 2) / iset.factorials[k] * df
        half[k] = o / 2
    return out, half


def krook_wu_reference(s: int, t: float, M: int, params=None):
    """Analytic coefficient vectors at centers [0, 1 / m_i].

    ``params`` is a KrookWu2 (s = 2) or KrookWuS instance.
    """
    if params is None:
        params = KrookWu2() if s == 2 else KrookWuS(s=s)
    pat, half = _kw_pattern(M)
    out = []
    if isinstance(params, KrookWu2):
        if s != 2:
            raise ValueError("two-species parameters need s = 2")
        A = params.A
        q = params.Q(t)
        for i in range(2):
            if 1 - 3 * params.p[i] * q < 0 or q < 0:
                warnings.warn("Krook-Wu solution is not positive near v = 0 at the requested time", stacklevel=2)
            c = params.n[i] * pat * (-2 * params.p[i]) ** half * np.exp(-half * A * (t + params.t0))
            out.append(c)
        return out
    if params.s != s:
        raise ValueError("species count mismatch")
    q = params.Q(t)
    if q < 0 or 1 - 3 * q < 0:
        warnings.warn("Krook-Wu solution is not positive near v = 0 at the requested time", stacklevel=2)
    c = pat * (-2.0) ** half * np.exp(-half * params.A * (t + params.t0))
    return [c.copy() for _ in range(s)]


def l2_errors(numerical: SpectralDistribution, reference: SpectralDistribution, n_points: int = 10):
    """Relative L2 error and the 1/M-weighted relative L2 error.

    Both integrals use an ``n_points`` Gauss-Hermite rule per direction in
    the variable of the reference's expansion center.
    """
    if numerical.center != reference.center:
        raise ValueError("distributions must share the expansion center")
    M = max(numerical.M, reference.M)
    a = np.zeros(n_coeffs(M))
    b = np.zeros(n_coeffs(M))
    a[: numerical.coeffs.size] = numerical.coeffs
    b[: reference.coeffs.size] = reference.coeffs
    rule = gauss_hermite(n_points)  # weight exp(-y^2)
    y = np.stack(np.meshgrid(rule.nodes, rule.nodes, rule.nodes, indexing="ij"), -1).reshape(-1, 3)
    w = np.prod(np.stack(np.meshgrid(rule.weights, rule.weights, rule.weights, indexing="ij"), -1).reshape(-1, 3), -1)
    unit = ExpansionCenter((0.0, 0.0, 0.0), 1.0)

    def poly(coeffs, x):
        return coeffs @ basis_values(M, unit, x)

    # |f|^2: f = p(x) M, M^2 ~ exp(-|x|^2) -> x = y
    # |f|^2 / M: p^2 M ~ exp(-|x|^2 / 2) -> x = sqrt(2) y
    d1 = poly(a - b, y)
    r1 = poly(b, y)
    d2 = poly(a - b, math.sqrt(2) * y)
    r2 = poly(b, math.sqrt(2) * y)
    den1, den2 = np.sum(w * r1**2), np.sum(w * r2**2)
    if den1 == 0 or den2 == 0:
        raise ZeroDivisionError("reference distribution is identically zero")
    return math.sqrt(np.sum(w * d1**2) / den1), math.sqrt(np.sum(w * d2**2) / den2)


# --- scenario catalogue ----------------------------------------------------------


@dataclass
class ScenarioConfig:
    """Fully nondimensional run description."""

    kind: str
    case: int
    masses: list
    kn: list
    kernels: list  # KernelSpec matrix
    solver: SolverConfig
    densities: list = field(default_factory=list)
    temperature: float = 1.0
    velocity: tuple = (0.0, 0.0, 0.0)
    centers: list = field(default_factory=list)  # (u, T) per species
    cells: tuple = ()
    length: tuple = ()
    walls: list = field(default_factory=list)  # per direction: pair of Wall or "periodic"
    dt: float | None = None
    kw: dict | None = None
    scales: dict | None = None
    nu: list | None = None

    def validate(self):
        s = len(self.masses)
        if self.kind not in ("krook_wu", "couette", "fourier", "cavity", "custom"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if np.shape(self.kn) != (s, s) or np.shape(self.kernels) != (s, s):
            raise ValueError("Knudsen and kernel tables must be s x s")
        if self.kind == "krook_wu":
            if self.dt is None or self.dt <= 0:
                raise ValueError("homogeneous runs need a positive time step")
        else:
            if len(self.cells) not in (1, 2) or len(self.length) != len(self.cells):
                raise ValueError("spatial runs need cells and lengths per direction")
            if len(self.walls) != len(self.cells):
                raise ValueError("one boundary description per direction is required")
            if len(self.densities) != s:
                raise ValueError("initial densities missing")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernels"] = [[asdict(k) for k in row] for row in self.kernels]
        d["walls"] = [w if w == "periodic" else [asdict(x) for x in w] for w in self.walls]
        d["kn"] = np.asarray(self.kn, dtype=float).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        d["kernels"] = [[KernelSpec(**k) for k in row] for row in d["kernels"]]
        d["solver"] = SolverConfig(**d["solver"])
        d["walls"] = [w if w == "periodic" else tuple(Wall(x["T"], tuple(x["u"])) for x in w) for w in d.get("walls", [])]
        d["velocity"] = tuple(d.get("velocity", (0.0, 0.0, 0.0)))
        d["cells"] = tuple(d.get("cells", ()))
        d["length"] = tuple(d.get("length", ()))
        d["centers"] = [(tuple(u), float(T)) for u, T in d.get("centers", [])]
        return cls(**d).validate()


COUETTE_DENSITIES = {1: (1.68e21, 8.009e20), 2: (5.6e20, 2.667e20), 3: (1.68e20, 8.009e19)}
COUETTE_ORDERS = {1: (40, 10), 2: (40, 10), 3: (60, 10)}
FOURIER_DENSITIES = {1: (1.68e21, 8.009e20), 2: (5.6e20, 2.667e20), 3: (1.68e21, 8.009e20), 4: (5.6e20, 2.667e20)}
FOURIER_WALLS = {1: (223.0, 323.0), 2: (223.0, 323.0), 3: (109.2, 436.8), 4: (109.2, 436.8)}
CAVITY_DENSITIES = {1: (1.708e22, 8.141e21), 2: (1.708e21, 8.141e20)}
CAVITY_ORDERS = {1: (25, 10), 2: (30, 10)}


def _gas_case(kind, case, model, n_phys, orders, walls_phys, cells, cfl, recon, n0):
    spec = GasMixtureSpec.ar_kr(model, n0)
    m = spec.species_masses
    kn = knudsen_matrix(spec)
    u0 = spec.u0
    walls = []
    for lo, hi in walls_phys:
        walls.append(
            (Wall(lo[0] / spec.T0, tuple(v / u0 for v in lo[1])), Wall(hi[0] / spec.T0, tuple(v / u0 for v in hi[1])))
        )
    M, M0 = orders
    scales = {
        "x0": spec.x0, "n0": spec.n0, "T0": spec.T0, "m0": spec.m0, "u0": u0, "t0": spec.t0, "k_B": spec.k_B,
        "model": model,
    }
    return ScenarioConfig(
        kind=kind,
        case=case,
        masses=m.tolist(),
        kn=kn.tolist(),
        kernels=[[spec.kernel(i, j) for j in range(2)] for i in range(2)],
        solver=SolverConfig(M, M0, cfl=cfl, reconstruction=recon, t_end=10.0),
        densities=[n / n0 for n in n_phys],
        temperature=273.0 / spec.T0,
        centers=[((0.0, 0.0, 0.0), 1.0 / mi) for mi in m],
        cells=cells,
        length=tuple(1.0 for _ in cells),
        walls=walls,
        scales=scales,
    ).validate()


def build_case(kind: str, case: int = 1) -> ScenarioConfig:
    """Catalogue of the built-in benchmarks, fully nondimensional."""
    if kind == "couette":
        if case not in COUETTE_DENSITIES:
            raise UnknownCaseError(f"couette case {case}")
        n = COUETTE_DENSITIES[case]
        walls = [((273.0, (0.0, -50.0, 0.0)), (273.0, (0.0, 50.0, 0.0)))]
        return _gas_case(kind, case, "vss", n, COUETTE_ORDERS[case], walls, (25,), 0.45, "weno3", n[0])
    if kind == "fourier":
        if case not in FOURIER_DENSITIES:
            raise UnknownCaseError(f"fourier case {case}")
        n = FOURIER_DENSITIES[case]
        tl, tr = FOURIER_WALLS[case]
        walls = [((tl, (0.0, 0.0, 0.0)), (tr, (0.0, 0.0, 0.0)))]
        return _gas_case(kind, case, "vhs", n, (40, 10), walls, (25,), 0.45, "weno3", n[0])
    if kind == "cavity":
        if case not in CAVITY_DENSITIES:
            raise UnknownCaseError(f"cavity case {case}")
        n = CAVITY_DENSITIES[case]
        still = (273.0, (0.0, 0.0, 0.0))
        walls = [(still, still), (still, (273.0, (50.0, 0.0, 0.0)))]
        # Knudsen values of the cavity runs follow from n0 = n_Ar
        return _gas_case(kind, case, "hs", n, CAVITY_ORDERS[case], walls, (100, 100), 0.3, "linear", n[0])
    if kind == "krook_wu":
        if case == 2:
            p = KrookWu2()
            masses, kernels = list(p.m), p.kernels()
            kw = {"s": 2, "t0": p.t0}
        elif case >= 3:
            p = KrookWuS(s=case)
            masses, kernels = p.masses, p.kernels()
            kw = {"s": case, "t0": p.t0}
        else:
            raise UnknownCaseError(f"krook_wu case {case} (use 2 for the two-species test or s >= 3)")
        s = len(masses)
        return ScenarioConfig(
            kind="krook_wu",
            case=case,
            masses=masses,
            kn=np.ones((s, s)).tolist(),
            kernels=kernels,
            solver=SolverConfig(20, 10, t_end=5.0 if s == 2 else 1.0),
            densities=[1.0] * s,
            centers=[((0.0, 0.0, 0.0), 1.0 / m) for m in masses],
            dt=0.01,
            kw=kw,
        ).validate()
    raise UnknownCaseError(f"unknown scenario kind {kind!r}")


def with_solver(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    return replace(cfg, solver=replace(cfg.solver, **changes))


def kw_params(cfg: ScenarioConfig):
    s = cfg.kw["s"]
    if s == 2:
        return KrookWu2(t0=cfg.kw.get("t0", 3.0))
    return KrookWuS(s=s, t0=cfg.kw.get("t0", 20.0))
