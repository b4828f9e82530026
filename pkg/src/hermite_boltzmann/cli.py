"""Batch command line: precompute tensors, run scenarios, report on runs."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .runner import RunManifest, distinct_ratios, run_scenario
from .scenarios import ScenarioConfig, UnknownCaseError, build_case
from .solver import SolverConfig
from .tensor import IncompatibleTensorError, KernelSpec, TensorCache, TensorMemoryError, cache_filename

log = logging.getLogger("hermite_boltzmann")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESOURCE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """JSON run description: a catalogue case plus optional overrides.

    Either ``scenario`` names a built-in case ({"kind": ..., "case": ...})
    or ``custom`` holds a complete scenario dictionary.
    """

    scenario: dict = field(default_factory=dict)
    custom: dict | None = None
    solver: dict = field(default_factory=dict)
    dt: float | None = None
    kn: list | None = None
    nu: list | None = None
    memory_budget_gb: float = 8.0

    KEYS = ("scenario", "custom", "solver", "dt", "kn", "nu", "memory_budget_gb")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        if not d.get("scenario") and not d.get("custom"):
            raise ConfigError("configuration needs 'scenario' or 'custom'")
        cfg = cls(**{k: d[k] for k in cls.KEYS if k in d})
        if cfg.memory_budget_gb <= 0:
            raise ConfigError("memory_budget_gb must be positive")
        return cfg

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def scenario_config(self) -> ScenarioConfig:
        try:
            if self.custom is not None:
                base = ScenarioConfig.from_dict(self.custom)
            else:
                base = build_case(self.scenario["kind"], int(self.scenario.get("case", 1)))
            changes = {}
            if self.solver:
                fields = set(SolverConfig.__dataclass_fields__)
                bad = set(self.solver) - fields
                if bad:
                    raise ConfigError(f"unknown solver keys: {sorted(bad)}")
                changes["solver"] = replace(base.solver, **self.solver)
            if self.dt is not None:
                changes["dt"] = float(self.dt)
            if self.kn is not None:
                changes["kn"] = self.kn
            if self.nu is not None:
                changes["nu"] = self.nu
            return replace(base, **changes).validate()
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed configuration: {exc}") from exc


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


# --- subcommands -------------------------------------------------------------------


def cli_precompute(cfg: RunConfig, cache_dir, out=None) -> list:
    """Assemble (or find) every tensor the scenario needs; one line per tensor."""
    out = out or sys.stdout
    sc = cfg.scenario_config()
    cache = TensorCache(cache_dir, int(cfg.memory_budget_gb * 2**30))
    M0 = sc.solver.M0
    need_damping = sc.solver.M > M0
    seen = set()
    report = []
    s = len(sc.masses)
    for i in range(s):
        for j in range(s):
            k: KernelSpec = sc.kernels[i][j]
            r = sc.masses[j] / sc.masses[i]
            name = cache_filename(M0, r, k)
            if name in seen:
                continue
            seen.add(name)
            path = cache.path_for(M0, r, k)
            status = "cached" if path.exists() else "assembled"
            t0 = time.perf_counter()
            t = cache.get(M0, r, k, with_damping=need_damping)
            row = {
                "file": name, "r": r, "M0": M0, "kernel": k.kind, "entries": t.nnz,
                "bytes": path.stat().st_size, "status": status, "seconds": time.perf_counter() - t0,
            }
            report.append(row)
            print(
                f"{status:10s} {name}  r={r:.6g}  entries={t.nnz}  bytes={row['bytes']}  "
                f"time={row['seconds']:.3f}s",
                file=out,
            )
    ratios = distinct_ratios(sc.masses)
    print(f"{len(report)} tensor(s) for {len(ratios)} distinct mass ratio(s)", file=out)
    return report


def cli_run(cfg: RunConfig, cache_dir, output_dir, threads: int = 1, out=None) -> RunManifest:
    out = out or sys.stdout
    sc = cfg.scenario_config()
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    cache = TensorCache(cache_dir, int(cfg.memory_budget_gb * 2**30))
    out_dir = Path(output_dir)
    manifest = run_scenario(sc, cache, out_dir, threads)
    manifest.config["run_config"] = cfg.to_dict()
    (out_dir / "manifest.json").write_text(manifest.to_json())
    print(f"wrote {len(manifest.outputs)} file(s) and manifest.json to {out_dir}", file=out)
    return manifest


def _flatten(d, prefix=""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            yield f"{prefix}{k}", v


def cli_report(manifests, out=None) -> dict:
    """Summarise one manifest, or compare two side by side."""
    out = out or sys.stdout
    loaded = []
    for p in manifests:
        try:
            loaded.append(RunManifest.from_json(Path(p).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read manifest {p}: {exc}") from exc
        except (json.JSONDecodeError, ValueError) as exc:
            raise ConfigError(f"{p} is not a run manifest: {exc}") from exc
    if not 1 <= len(loaded) <= 2:
        raise ConfigError("report takes one or two manifests")
    rows = {}
    for idx, m in enumerate(loaded):
        vals = dict(_flatten({"timings": m.timings}))
        diag = {k: v for k, v in m.diagnostics.items() if k != "snapshots"}
        vals.update(_flatten({"diagnostics": {k: (max(v) if isinstance(v, list) and v else v) for k, v in diag.items()}}))
        vals["tensors.bytes"] = sum(t["bytes"] for t in m.tensors)
        vals["tensors.count"] = len(m.tensors)
        vals["tensors.cached"] = sum(t["status"] == "cached" for t in m.tensors)
        for k, v in vals.items():
            rows.setdefault(k, [None] * len(loaded))[idx] = v
    width = max(len(k) for k in rows)
    heads = [str(p) for p in manifests]
    print(f"{'quantity':{width}s}  " + "  ".join(f"{h[-24:]:>24s}" for h in heads), file=out)
    for k, vs in rows.items():
        cells = ["-" if v is None else f"{v:.6g}" for v in vs]
        print(f"{k:{width}s}  " + "  ".join(f"{c:>24s}" for c in cells), file=out)
    return rows


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hermite-boltzmann", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    pre = sub.add_parser("precompute", help="assemble collision tensors into the cache")
    pre.add_argument("--config", required=True)
    pre.add_argument("--cache-dir", required=True)
    run = sub.add_parser("run", help="run a scenario")
    run.add_argument("--config", required=True)
    run.add_argument("--cache-dir", required=True)
    run.add_argument("--output-dir", required=True)
    run.add_argument("--threads", type=int, default=1)
    rep = sub.add_parser("report", help="summarise or compare run manifests")
    rep.add_argument("manifests", nargs="+")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "precompute":
            cli_precompute(load_config(args.config), args.cache_dir)
        elif args.command == "run":
            cli_run(load_config(args.config), args.cache_dir, args.output_dir, args.threads)
        else:
            cli_report(args.manifests)
    except (TensorMemoryError, MemoryError) as exc:
        print(f"error: out of memory: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, IncompatibleTensorError, UnknownCaseError, ValueError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
