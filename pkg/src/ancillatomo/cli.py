"""Command-line runner: bases, Hamiltonians, maps, sampling, estimation and experiments.

Units: Omega = 1 for Rydberg arrays and J = 1 for Hubbard-type models; all
times are in inverse energy units.
"""
from __future__ import annotations

import argparse
import inspect
import json
import logging
import sys
import traceback
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml
from jsonschema import Draft202012Validator

from . import io, presets
from .experiments import DRIVERS, ExperimentResult

log = logging.getLogger("ancillatomo")

UNITS = "Omega = 1 (Rydberg), J = 1 (Hubbard, HBH); times in inverse energy units"

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": sorted(DRIVERS)},
        "seed": {"type": "integer", "minimum": 0},
        "m": {"type": "integer", "minimum": 1},
        "params": {"type": "object"},
        "out": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "budget_mb": {"type": "number", "exclusiveMinimum": 0},
    },
}

# one command per acceptance-style run
EXPERIMENT_PRESETS = {
    "fidelity": {"kind": "rydberg-fidelity", "m": 2000, "seed": 0,
                 "params": {"n_sys": 8, "n_anc": 10}},
    "energy": {"kind": "rydberg-energy", "m": 2000, "seed": 0, "params": {"n_sys": 12}},
    "energy-24": {"kind": "rydberg-energy", "m": 2000, "seed": 0, "params": {"n_sys": 24}},
    "entropy": {"kind": "rydberg-entropy", "m": 100000, "seed": 0, "params": {"n_sys": 12, "patch_size": 6}},
    "bcs": {"kind": "bcs-dwave", "m": 2000, "seed": 0, "params": {"repetitions": 200}},
    "mbcn-4x4": {"kind": "hbh-mbcn", "m": 2000, "seed": 0,
                 "params": {"preset_name": "hbh-4x4", "repetitions": 100}},
    "currents": {"kind": "hbh-currents", "m": 5000, "seed": 0, "params": {"preset_name": "hbh-6x6"}},
    "lr": {"kind": "lr-scan", "params": {}},
    "noise": {"kind": "noise-scan", "seed": 0, "params": {}},
    "dephasing-bound": {"kind": "systematic-bound", "seed": 0, "params": {"preset": "rydberg-6+7"}},
    "custom": {"kind": "custom", "m": 1000, "seed": 0, "params": {"n_sys": 4}},
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(source) -> dict:
    """Parse a YAML file, a preset name or a dict, and validate it."""
    if isinstance(source, dict):
        cfg = dict(source)
    elif str(source) in EXPERIMENT_PRESETS:
        cfg = json.loads(json.dumps(EXPERIMENT_PRESETS[str(source)]))
    else:
        try:
            cfg = yaml.safe_load(Path(source).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    errors = sorted(Draft202012Validator(CONFIG_SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        msg = "; ".join(f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors)
        raise ConfigError(msg)
    sig = inspect.signature(DRIVERS[cfg["kind"]])
    unknown = set(cfg.get("params", {})) - set(sig.parameters)
    if unknown:
        raise ConfigError(f"params: unknown keys {sorted(unknown)} for {cfg['kind']}; "
                          f"allowed {sorted(sig.parameters)}")
    for key in ("m", "seed"):
        if key in cfg.get("params", {}):
            raise ConfigError(f"params/{key}: give {key} at the top level")


def driver_kwargs(cfg: dict) -> dict:
    sig = inspect.signature(DRIVERS[cfg["kind"]])
    kw = dict(cfg.get("params", {}))
    for key in ("m", "seed"):
        if key in cfg and key in sig.parameters:
            kw[key] = cfg[key]
    return kw


def provenance(cfg: dict) -> dict:
    versions = {}
    for pkg in ("ancillatomo", "numpy", "scipy"):
        try:
            versions[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            versions[pkg] = "unknown"
    return {"config": cfg, "seed": cfg.get("seed"), "units": UNITS, "versions": versions}


# ---------------------------------------------------------------------------
# experiment bundles
# ---------------------------------------------------------------------------

def write_bundle(result: ExperimentResult, out: Path, cfg: dict) -> list[str]:
    """results.csv, summary.json, extra tables, figure; returns file names written."""
    from .plotting import render

    names = ["config.json", "results.csv", "summary.json"]
    io.write_json(out / "config.json", cfg)
    io.write_csv(out / "results.csv", result.rows)
    io.write_json(out / "summary.json", {"kind": result.kind, **result.summary})
    for key, rows in sorted(result.extra.items()):
        io.write_csv(out / f"{key}.csv", rows)
        names.append(f"{key}.csv")
    render(result, out / "figure.png")
    names.append("figure.png")
    return names


def run_experiment(source, out) -> ExperimentResult:
    """Validate, compute, write.  Failures leave a FAILED.json naming the stage."""
    out = Path(out)
    stage = "config"
    try:
        cfg = load_config(source)
        out.mkdir(parents=True, exist_ok=True)
        failed = out / "FAILED.json"
        if failed.exists():
            failed.unlink()
        stage = "compute"
        result = DRIVERS[cfg["kind"]](**driver_kwargs(cfg))
        stage = "write"
        names = write_bundle(result, out, cfg)
        io.write_json(out / "manifest.json", io.build_manifest(out, names, provenance(cfg)))
        return result
    except Exception as exc:
        if out.exists():
            io.write_json(out / "FAILED.json", {"stage": stage, "error": f"{type(exc).__name__}: {exc}",
                                                "traceback": traceback.format_exc()})
        raise StageError(stage, exc) from exc


def load_bundle(bundle) -> ExperimentResult:
    bundle = Path(bundle)
    for name in ("results.csv", "summary.json", "manifest.json"):
        if not (bundle / name).exists():
            raise io.ArtifactError(f"bundle {bundle} lacks {name}")
    summary = io.read_json(bundle / "summary.json")
    rows = [{k: _parse_cell(v) for k, v in r.items()} for r in io.read_csv(bundle / "results.csv")]
    return ExperimentResult(summary.pop("kind"), rows, summary)


def _parse_cell(v: str):
    if v in ("true", "false"):
        return v == "true"
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def report_bundle(bundle) -> dict:
    """Re-render the figure from stored tables and check the manifest chain."""
    from .plotting import render

    bundle = Path(bundle)
    result = load_bundle(bundle)
    bad = io.verify_manifest(bundle)
    render(result, bundle / "figure.png")
    return {"kind": result.kind, "rows": len(result.rows), "manifest_ok": not bad, "mismatched": bad,
            **result.summary}


# ---------------------------------------------------------------------------
# quench presets for the low-level commands
# ---------------------------------------------------------------------------

def quench_for(name: str, t: float | None = None):
    """(config, system state or None) for a named quench."""
    if name in presets.RYDBERG_PRESETS:
        psi = presets.rydberg_preset_state(name)
        return presets.rydberg_preset(name, t), np.outer(psi, psi.conj())
    if name == "rydberg-atom+3":
        return presets.rydberg_single_atom_patch(3, t or 4 * presets.TWO_PI), None
    if name.startswith("fermion-bridged-"):
        return presets.fermion_bridged(int(name.rsplit("-", 1)[1])), None
    if name == "fermion-two-patch":
        return presets.fermion_two_patch(), None
    if name in presets.MBCN_PRESETS:
        return presets.mbcn_quench(presets.MBCN_PRESETS[name]), None
    choices = sorted(presets.RYDBERG_PRESETS) + ["rydberg-atom+3", "fermion-bridged-N", "fermion-two-patch"] \
        + sorted(presets.MBCN_PRESETS)
    raise ConfigError(f"unknown quench {name!r}; choose from {choices}")


def _print(obj) -> None:
    print(json.dumps(io._jsonable(obj), indent=2, sort_keys=True))


def cmd_basis(a) -> int:
    from .hilbert import blockaded_basis, boson_basis, chain_edges, fermion_basis

    if a.model == "rydberg":
        b = blockaded_basis(a.sites, chain_edges(a.sites))
    elif a.model == "boson":
        b = boson_basis(a.sites, a.particles)
    else:
        b = fermion_basis(a.sites, a.up, a.down)
    _print({"model": a.model, "sites": a.sites, "dim": b.dim})
    if a.out:
        io.write_csv(Path(a.out), [{"index": i, "config": "".join(map(str, c))} for i, c in enumerate(b.configs)])
    return 0


def cmd_hamiltonian(a) -> int:
    from .hamiltonians import RydbergParams, ground_state, rydberg_hamiltonian

    basis = presets.rydberg_chain(a.sites)
    h = rydberg_hamiltonian(basis, RydbergParams(a.omega, a.delta, a.v2))
    gs = ground_state(h)
    _print({"dim": basis.dim, "nnz": int(h.nnz), "ground_energy": gs.energy})
    return 0


def cmd_map(a) -> int:
    from .diagnostics import singular_spectrum
    from .recovery import moore_penrose, optimal_recovery
    from .scrambling import born_distribution

    if a.action == "build":
        config, _ = quench_for(a.preset, a.t)
        if a.out:
            from .scrambling import build_scrambling_map
            smap = build_scrambling_map(config, a.budget_mb)
            io.save_map(a.out, smap)
            hit = False
        else:
            smap, hit = io.cached_map(config, a.budget_mb)
        _print({"config_hash": smap.config_hash, "d_sys": smap.d_sys, "d_ext": smap.d_ext, "cache_hit": hit})
    elif a.action == "inspect":
        smap = io.load_map(a.map)
        _print({"config_hash": smap.config_hash, **singular_spectrum(smap).to_dict()})
    else:
        smap = io.load_map(a.map)
        if a.flavor == "moore-penrose":
            rec = moore_penrose(smap)
        else:
            _, rho = quench_for(a.preset)
            if rho is None:
                raise ConfigError("gamma-optimal inversion needs a preset with a reference state")
            rec = optimal_recovery(smap, born_distribution(smap, rho))
        io.save_recovery(a.out, rec)
        _print({"flavor": rec.flavor, "sigma_min": rec.sigma_min, "sigma_max": rec.sigma_max,
                "identity_defect": rec.identity_defect()})
    return 0


def cmd_sample(a) -> int:
    from .sampling import sample_snapshots, write_snapshots
    from .scrambling import born_distribution

    config, rho = quench_for(a.preset)
    if rho is None:
        raise ConfigError("sampling from the command line needs a Rydberg preset")
    smap, _ = io.cached_map(config, a.budget_mb)
    snaps = sample_snapshots(born_distribution(smap, rho), a.m, a.seed, config_hash=smap.config_hash)
    write_snapshots(a.out, snaps)
    _print({"m": snaps.m, "seed": a.seed, "config_hash": smap.config_hash, "out": a.out})
    return 0


def cmd_estimate(a) -> int:
    from .recovery import moore_penrose, optimal_recovery
    from .sampling import estimate_values, read_snapshots
    from .scrambling import born_distribution

    config, rho = quench_for(a.preset)
    smap, _ = io.cached_map(config, a.budget_mb)
    snaps = read_snapshots(a.snapshots, expect_hash=smap.config_hash)
    rec = moore_penrose(smap) if a.flavor == "moore-penrose" else optimal_recovery(smap, born_distribution(smap, rho))
    if a.observable == "fidelity":
        op, exact = rho, 1.0
    else:
        dens = config.system.configs.sum(axis=1) / config.system.n_sites
        op, exact = np.diag(dens.astype(float)), float(np.real(np.trace(np.diag(dens) @ rho)))
    o = rec.estimator(op)
    est = estimate_values(o[snaps.outcomes], rec.flavor, a.observable)
    _print({**est.to_dict(), "exact": exact})
    return 0


def cmd_experiment(a) -> int:
    if a.action == "run":
        source = a.config or a.preset
        if source is None:
            raise ConfigError("give --config FILE or --preset NAME")
        cfg = load_config(source)
        if a.seed is not None:
            cfg["seed"] = a.seed
        out = Path(a.out or cfg.get("out") or f"runs/{cfg['kind']}")
        result = run_experiment(cfg, out)
        _print({"out": str(out), **result.summary})
    else:
        _print(report_bundle(a.bundle))
    return 0


def cmd_scan(a) -> int:
    out = Path(a.out or f"runs/{a.kind}-scan")
    cfg = {"kind": "lr-scan" if a.kind == "lr" else "noise-scan", "params": {}}
    if a.kind == "noise":
        cfg["seed"] = a.seed or 0
    result = run_experiment(cfg, out)
    _print({"out": str(out), **result.summary})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    common.add_argument("--budget-mb", type=float, default=None, dest="budget_mb",
                        help="refuse to materialize maps larger than this")
    common.add_argument("--config", default=None, help="YAML experiment config")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ancillatomo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("basis", parents=[common], help="enumerate a configuration basis")
    b.add_argument("--model", choices=["rydberg", "boson", "fermion"], default="rydberg")
    b.add_argument("--sites", type=int, required=True)
    b.add_argument("--particles", type=int, default=1)
    b.add_argument("--up", type=int, default=None)
    b.add_argument("--down", type=int, default=None)
    b.set_defaults(func=cmd_basis)

    h = sub.add_parser("hamiltonian", parents=[common], help="Rydberg chain Hamiltonian summary")
    h.add_argument("--sites", type=int, required=True)
    h.add_argument("--omega", type=float, default=1.0)
    h.add_argument("--delta", type=float, default=-1.0)
    h.add_argument("--v2", type=float, default=0.0)
    h.set_defaults(func=cmd_hamiltonian)

    m = sub.add_parser("map", parents=[common], help="build, invert or inspect scrambling maps")
    m.add_argument("action", choices=["build", "invert", "inspect"])
    m.add_argument("--preset", default="rydberg-4+5")
    m.add_argument("--t", type=float, default=None, help="quench time")
    m.add_argument("--map", default=None, help="map container file")
    m.add_argument("--flavor", choices=["moore-penrose", "gamma-optimal"], default="gamma-optimal")
    m.set_defaults(func=cmd_map)

    s = sub.add_parser("sample", parents=[common], help="draw snapshots for a Rydberg preset")
    s.add_argument("--preset", default="rydberg-4+5")
    s.add_argument("--m", type=int, default=1000)
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("estimate", parents=[common], help="estimate an observable from snapshots")
    e.add_argument("--preset", default="rydberg-4+5")
    e.add_argument("--snapshots", required=True)
    e.add_argument("--observable", choices=["fidelity", "density"], default="fidelity")
    e.add_argument("--flavor", choices=["moore-penrose", "gamma-optimal"], default="gamma-optimal")
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("experiment", parents=[common], help="run experiments or re-render reports")
    x.add_argument("action", choices=["run", "report"])
    x.add_argument("--preset", default=None, choices=sorted(EXPERIMENT_PRESETS))
    x.add_argument("--bundle", default=None, help="result directory for report")
    x.set_defaults(func=cmd_experiment)

    sc = sub.add_parser("scan", parents=[common], help="quench-time or noise scans")
    sc.add_argument("kind", choices=["lr", "noise"])
    sc.set_defaults(func=cmd_scan)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sample" and args.seed is None:
        args.seed = 0
    if args.command == "sample" and not args.out:
        args.out = "snapshots.atsn"
    if args.command == "map" and args.action == "invert" and not args.out:
        args.out = "recovery.atar"
    if args.command == "map" and args.action in ("invert", "inspect") and not args.map:
        print("error: --map is required", file=sys.stderr)
        return 2
    if args.command == "experiment" and args.action == "report" and not args.bundle:
        print("error: --bundle is required", file=sys.stderr)
        return 2
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except (ConfigError, StageError, io.ArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
