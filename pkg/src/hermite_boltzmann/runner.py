"""Scenario driver shared by the CLI and the experiment scripts."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import ExpansionCenter, index_set, n_coeffs, project_coefficients
from .collision import CollisionSetup
from .moments import SpectralDistribution, moments_batch
from .scenarios import ScenarioConfig, kw_params, krook_wu_reference, l2_errors
from .solver import (
    GridField, build_transport, cell_frames, cfl_dt, collision_step, convection_step, integrate_homogeneous_rk4,
    wall_mass_flux,
)
from .tensor import TensorCache, cache_filename

log = logging.getLogger(__name__)

CSV_FMT = "{:.17g}"


@dataclass
class RunManifest:
    config: dict
    tensors: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "tensors": self.tensors,
                "timings": self.timings,
                "diagnostics": self.diagnostics,
                "outputs": self.outputs,
            },
            indent=2,
            default=_json_default,
        )

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        missing = {"config", "tensors", "timings", "diagnostics"} - set(d)
        if missing:
            raise ValueError(f"manifest lacks fields: {sorted(missing)}")
        return cls(d["config"], d["tensors"], d["timings"], d["diagnostics"], d.get("outputs", []))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o)}")


def distinct_ratios(masses) -> list:
    """Mass ratios m_j / m_i of all ordered pairs, de-duplicated."""
    out = []
    for mi in masses:
        for mj in masses:
            r = float(mj / mi)
            if not any(r == x for x in out):
                out.append(r)
    return out


def load_tensors(cfg: ScenarioConfig, cache: TensorCache, M0: int, manifest: RunManifest | None = None):
    """Fetch or assemble every tensor the mixture needs."""
    s = len(cfg.masses)
    tensors = {}
    for i in range(s):
        for j in range(s):
            k = cfg.kernels[i][j]
            r = cfg.masses[j] / cfg.masses[i]
            path = cache.path_for(M0, r, k)
            was_cached = path is not None and path.exists()
            t0 = time.perf_counter()
            t = cache.get(M0, r, k, with_damping=cfg.solver.M > M0)
            dt = time.perf_counter() - t0
            tensors[i, j] = t
            if manifest is not None:
                manifest.tensors.append(
                    {
                        "pair": [i, j],
                        "file": cache_filename(M0, r, k),
                        "r": r,
                        "M0": M0,
                        "kernel": k.kind,
                        "entries": t.nnz,
                        "bytes": t.nbytes,
                        "status": "cached" if was_cached else "assembled",
                        "seconds": dt,
                        "damping_rate": t.damping,
                    }
                )
    return tensors


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([CSV_FMT.format(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_coefficients(path: Path, f_list):
    iset = index_set(_order(f_list[0]))
    rows = []
    for i, f in enumerate(f_list):
        f = np.asarray(f)
        flat = f.reshape(-1, f.shape[-1])
        for cell, vec in enumerate(flat):
            for k, a in enumerate(iset):
                rows.append([i, cell, *a, float(vec[k])])
    _write_csv(path, ["species", "cell", "alpha1", "alpha2", "alpha3", "coefficient (dimensionless)"], rows)


def _order(f):
    from .basis import order_of

    return order_of(np.asarray(f).shape[-1])


# --- homogeneous runs -----------------------------------------------------------


def run_krook_wu(cfg: ScenarioConfig, cache: TensorCache, out_dir: Path | None = None, manifest=None,
                 record_every: int = 1):
    """RK4 integration of a Krook-Wu case with analytic comparison."""
    s = cfg.kw["s"]
    M, M0 = cfg.solver.M, cfg.solver.M0
    params = kw_params(cfg)
    manifest = manifest or RunManifest(cfg.to_dict())
    t0 = time.perf_counter()
    tensors = load_tensors(cfg, cache, M0, manifest)
    manifest.timings["tensors_s"] = time.perf_counter() - t0
    setup = CollisionSetup(cfg.masses, cfg.kn, tensors, M, M0, cfg.nu)
    f0 = krook_wu_reference(s, 0.0, M, params)
    i400 = index_set(M).index((4, 0, 0))
    history = []
    step = [0]

    def record(t, f):
        if step[0] % record_every == 0:
            history.append((t, [float(a[i400]) for a in f]))
        step[0] += 1

    t1 = time.perf_counter()
    final = integrate_homogeneous_rk4(f0, 1.0, setup, cfg.dt, cfg.solver.t_end, callback=record)
    elapsed = time.perf_counter() - t1
    n_steps = int(round(cfg.solver.t_end / cfg.dt))
    manifest.timings["integrate_s"] = elapsed
    manifest.timings["collision_terms"] = 4 * n_steps * s * s
    manifest.timings["per_collision_term_s"] = elapsed / max(1, 4 * n_steps * s * s)
    exact = krook_wu_reference(s, cfg.solver.t_end, M, params)
    errs = []
    for i in range(s):
        c = ExpansionCenter((0.0, 0.0, 0.0), 1.0 / cfg.masses[i])
        E, Ew = l2_errors(SpectralDistribution(i, cfg.masses[i], c, M, final[i]),
                          SpectralDistribution(i, cfg.masses[i], c, M, exact[i]))
        errs.append((E, Ew))
    j400 = index_set(4).index((4, 0, 0))
    ref4 = {t: [float(a[j400]) for a in krook_wu_reference(s, t, 4, params)] for t, _ in history}
    f400_err = max(abs(v[i] - ref4[t][i]) / abs(ref4[t][i]) for t, v in history for i in range(s))
    manifest.diagnostics.update(
        {"E": [e[0] for e in errs], "E_w": [e[1] for e in errs], "f400_max_rel_error": f400_err}
    )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        header = ["t (dimensionless)"]
        for i in range(s):
            header += [f"f400_numeric_species{i + 1} (dimensionless)", f"f400_exact_species{i + 1} (dimensionless)"]
        rows = []
        for t, v in history:
            row = [float(t)]
            for i in range(s):
                row += [v[i], ref4[t][i]]
            rows.append(row)
        _write_csv(out_dir / "f400.csv", header, rows)
        _write_csv(
            out_dir / "errors.csv",
            ["species", "E (dimensionless)", "E_w (dimensionless)"],
            [[i + 1, float(e[0]), float(e[1])] for i, e in enumerate(errs)],
        )
        write_coefficients(out_dir / "final_coefficients.csv", final)
        manifest.outputs += ["f400.csv", "errors.csv", "final_coefficients.csv"]
    return final, history, manifest


# --- spatial runs ----------------------------------------------------------------


def initial_grid(cfg: ScenarioConfig) -> GridField:
    M = cfg.solver.M
    centers = [ExpansionCenter(tuple(u), T) for u, T in cfg.centers]
    f = []
    for i, c in enumerate(centers):
        e0 = np.zeros(n_coeffs(M))
        e0[0] = cfg.densities[i]
        own = ExpansionCenter(tuple(cfg.velocity), cfg.temperature / cfg.masses[i])
        vec = project_coefficients(e0, own, c, M)
        f.append(np.broadcast_to(vec, tuple(cfg.cells) + (vec.size,)).copy())
    dx = tuple(L / n for L, n in zip(cfg.length, cfg.cells))
    return GridField(tuple(cfg.cells), dx, cfg.masses, centers, f, list(cfg.walls))


MOMENT_COLUMNS = [
    ("n", "m^-3"), ("u1", "m/s"), ("u2", "m/s"), ("u3", "m/s"), ("T", "K"),
    ("sigma11", "Pa"), ("sigma12", "Pa"), ("sigma13", "Pa"), ("sigma22", "Pa"), ("sigma23", "Pa"), ("sigma33", "Pa"),
    ("q1", "kg/s^3"), ("q2", "kg/s^3"), ("q3", "kg/s^3"),
]


def snapshot_rows(grid: GridField, scales: dict | None):
    """Per-cell, per-species moments in physical units (dimensionless if no scales)."""
    sc = scales or {}
    n0, u0, T0, m0 = sc.get("n0", 1.0), sc.get("u0", 1.0), sc.get("T0", 1.0), sc.get("m0", 1.0)
    x0 = sc.get("x0", 1.0)
    p0 = n0 * m0 * u0**2
    q0 = n0 * m0 * u0**3
    rows = []
    shape = grid.shape
    for i, (f, c) in enumerate(zip(grid.f, grid.centers)):
        mom = moments_batch(f, c.u_array, c.T, grid.masses[i])
        for idx in np.ndindex(*shape):
            pos = [(k + 0.5) * grid.dx[d] * x0 for d, k in enumerate(idx)]
            sg = mom["sigma"][idx]
            rows.append(
                pos
                + [i + 1, float(mom["n"][idx] * n0)]
                + [float(v * u0) for v in mom["u"][idx]]
                + [float(mom["T"][idx] * T0)]
                + [float(sg[a, b] * p0) for a, b in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))]
                + [float(v * q0) for v in mom["q"][idx]]
            )
    return rows


def snapshot_header(ndim: int, physical: bool):
    pos = ["x (m)", "y (m)"][:ndim] if physical else ["x (dimensionless)", "y (dimensionless)"][:ndim]
    cols = [f"{n} ({u})" if physical else f"{n} (dimensionless)" for n, u in MOMENT_COLUMNS]
    return pos + ["species"] + cols


def run_spatial(cfg: ScenarioConfig, cache: TensorCache, out_dir: Path | None = None, threads: int = 1,
                manifest=None, max_steps: int | None = None, progress=None):
    """Split-step time loop with CSV snapshots and a manifest."""
    M, M0 = cfg.solver.M, cfg.solver.M0
    manifest = manifest or RunManifest(cfg.to_dict())
    t0 = time.perf_counter()
    tensors = load_tensors(cfg, cache, M0, manifest)
    manifest.timings["tensors_s"] = time.perf_counter() - t0
    setup = CollisionSetup(cfg.masses, cfg.kn, tensors, M, M0, cfg.nu)
    grid = initial_grid(cfg)
    tr = build_transport(grid, M)
    dt = cfl_dt(cfg.solver, grid) if cfg.dt is None else cfg.dt
    n_steps = int(np.ceil(cfg.solver.t_end / dt - 1e-9))
    if max_steps is not None:
        n_steps = min(n_steps, max_steps)
    every = cfg.solver.output_every
    next_out = every if every else None
    diag = {"steps": 0, "dt": dt, "max_density_drift": 0.0, "max_momentum_drift": 0.0, "max_energy_drift": 0.0,
            "max_wall_mass_flux": 0.0, "snapshots": []}
    t_conv = t_coll = 0.0
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    physical = bool(cfg.scales)
    header = snapshot_header(grid.ndim, physical)

    def dump(g, tag):
        if out_dir is None:
            return
        name = f"moments_{tag}.csv"
        _write_csv(out_dir / name, header, snapshot_rows(g, cfg.scales))
        manifest.outputs.append(name)
        diag["snapshots"].append({"file": name, "t": g.time})

    dump(grid, "t0")

    for step in range(n_steps):
        h = min(dt, cfg.solver.t_end - grid.time) if max_steps is None else dt
        if h <= 0:
            break
        a = time.perf_counter()
        mid = convection_step(grid, tr, h, cfg.solver)
        b = time.perf_counter()
        new = collision_step(mid, setup, h, cfg.solver.substeps, threads)
        c = time.perf_counter()
        t_conv += b - a
        t_coll += c - b
        new.time = grid.time + h
        # collision-step conservation residuals (cell-wise)
        before = _conserved(mid)
        after = _conserved(new)
        diag["max_density_drift"] = max(diag["max_density_drift"], float(np.max(np.abs(after[0] - before[0]))))
        diag["max_momentum_drift"] = max(diag["max_momentum_drift"], float(np.max(np.abs(after[1] - before[1]))))
        diag["max_energy_drift"] = max(diag["max_energy_drift"], float(np.max(np.abs(after[2] - before[2]))))
        if any(bc != "periodic" for bc in new.boundaries):
            diag["max_wall_mass_flux"] = max(diag["max_wall_mass_flux"], wall_mass_flux(new, tr, cfg.solver))
        grid = new
        diag["steps"] = step + 1
        if progress is not None:
            progress(step, grid)
        if next_out is not None and grid.time >= next_out - 1e-12:
            dump(grid, f"t{grid.time:.6g}")
            next_out += every
    dump(grid, "final")
    if out_dir is not None:
        write_coefficients(out_dir / "final_coefficients.csv", grid.f)
        manifest.outputs.append("final_coefficients.csv")
    cells = int(np.prod(grid.shape))
    s = len(cfg.masses)
    manifest.timings.update(
        {
            "convection_s": t_conv,
            "collision_s": t_coll,
            "collision_terms": diag["steps"] * cells * s * s,
            "per_collision_term_s": t_coll / max(1, diag["steps"] * cells * s * s),
        }
    )
    manifest.diagnostics.update(diag)
    return grid, manifest


def _conserved(grid: GridField):
    N = grid.f[0].shape[-1]
    flat = [f.reshape(-1, N) for f in grid.f]
    parts = [moments_batch(f, c.u_array, c.T, m, need_heat_flux=False) for f, c, m in zip(flat, grid.centers, grid.masses)]
    dens = np.stack([p["n"] for p in parts])
    mom = sum(p["rho"][:, None] * p["u"] for p in parts)
    en = sum(p["E"] for p in parts)
    return dens, mom, en


def run_scenario(cfg: ScenarioConfig, cache: TensorCache, out_dir: Path | None = None, threads: int = 1):
    manifest = RunManifest(cfg.to_dict())
    start = time.perf_counter()
    if cfg.kind == "krook_wu":
        run_krook_wu(cfg, cache, out_dir, manifest)
    else:
        run_spatial(cfg, cache, out_dir, threads, manifest)
    manifest.timings["wall_s"] = time.perf_counter() - start
    if out_dir is not None:
        (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


__all__ = ["RunManifest", "run_scenario", "run_spatial", "run_krook_wu", "distinct_ratios", "cell_frames"]
