"""Command-line front end.

Subcommands ``gen``, ``fit``, ``sample``, ``closure`` and ``diag``. Settings
come from a flat ``key = value`` config file (``--config``); command-line
flags override it. Errors are reported as one JSON object per line on
stderr and a nonzero exit status.
"""

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import diagnostics, io, testbeds
from .bridge import SchrodingerBridge
from .exceptions import (BlowUpError, ConvergenceError, LocBridgeError,
                         ParameterError)
from .kde import KernelDenoiser, LocalizedKernelDenoiser
from .localization import (LocalizedSchrodingerBridge, closure_pair_sets,
                           full_window_sets, periodic_stencil_sets,
                           temporal_markov_sets)
from .samplers import SCHEMES, SamplerConfig, closure_simulate, generate

__all__ = ["ExperimentConfig", "main"]

EXPERIMENTS = ("gauss_tridiag", "gauss_laplacian", "bimodal", "lorenz96")
SET_FAMILIES = ("auto", "stencil", "temporal", "closure", "full")
METRICS = ("auto", "unit", "sigma")


@dataclass
class ExperimentConfig:
    """Every setting a command may read; config-file keys use these names.

    ``sets = auto`` picks the family from the experiment: periodic stencils
    of ``radius`` for the Gaussians, Markov pairs for the bimodal
    trajectories, closure sets for Lorenz-96. ``metric = auto`` uses the
    ``sigma_z``/``sigma_psi`` scales when the dataset sidecar provides them.
    """

    experiment: str = "gauss_tridiag"
    scheme: str = "localized_split_step"
    epsilon: float = 1.0
    radius: int = 1
    sets: str = "auto"
    metric: str = "auto"
    d: int = 101
    L: Optional[float] = None
    M: int = 100
    N: int = 1000
    n_c: int = 10
    mode: str = "restart"
    batch_size: int = 64
    seed: int = 0
    sinkhorn_tol: float = 1e-8
    max_iter: int = 10_000
    n_jobs: Optional[int] = None
    data: Optional[str] = None
    model: Optional[str] = None
    out: Optional[str] = None
    csv: bool = False
    dt: float = 5e-3
    n_steps: int = 10_000
    forcing: float = 20.0
    zero_closure: bool = False
    bins: int = diagnostics.DEFAULT_BINS
    tau_max: int = 100

    @classmethod
    def from_mapping(cls, mapping):
        """Build from string values (config file or flags); unknown keys fail."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in types:
                raise ParameterError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, types[key])
        return cls(**kwargs).validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"experiment must be one of {EXPERIMENTS}")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}")
        if self.sets not in SET_FAMILIES:
            raise ParameterError(f"sets must be one of {SET_FAMILIES}")
        if self.metric not in METRICS:
            raise ParameterError(f"metric must be one of {METRICS}")
        for name in ("epsilon", "sinkhorn_tol", "dt"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("d", "M", "max_iter", "batch_size", "bins"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be at least 1")
        for name in ("N", "n_c", "radius", "n_steps", "tau_max"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        return self


def _coerce(key, raw, typ):
    if not isinstance(raw, str):
        return raw
    optional = typ in (Optional[int], Optional[float], Optional[str])
    if optional and raw.lower() in ("", "none"):
        return None
    base = {Optional[int]: int, Optional[float]: float, Optional[str]: str}.get(typ, typ)
    try:
        if base is bool:
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        if base is int:
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        return base(raw)
    except ValueError:
        raise ParameterError(f"config key {key!r}: cannot parse {raw!r}") from None


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------
def _family(scheme):
    if scheme in ("em", "data_aware", "split_step"):
        return "bridge"
    if scheme == "kde_split_step":
        return "kde"
    if scheme == "localized_kde":
        return "localized_kde"
    return "localized"


def _build_sets(cfg, d, experiment):
    family = cfg.sets
    if family == "auto":
        family = {"bimodal": "temporal", "lorenz96": "closure"}.get(experiment, "stencil")
    if family == "stencil":
        return periodic_stencil_sets(d, cfg.radius)
    if family == "temporal":
        return temporal_markov_sets(1, d - 1)
    if family == "closure":
        if d % 2:
            raise ParameterError(f"closure sets need an even dimension, got d={d}")
        return closure_pair_sets(d // 2)
    return full_window_sets(d)


def _metric_scales(cfg, meta, d):
    if cfg.metric == "unit":
        return None
    has_sigma = "sigma_z" in meta and "sigma_psi" in meta
    if cfg.metric == "sigma" and not has_sigma:
        raise ParameterError("metric=sigma needs sigma_z/sigma_psi in the dataset sidecar")
    if not has_sigma:
        return None
    K = d // 2
    return np.r_[np.full(K, meta["sigma_z"]), np.full(d - K, meta["sigma_psi"])]


def _require(cfg, name):
    value = getattr(cfg, name)
    if value is None:
        raise ParameterError(f"--{name} (or config key {name!r}) is required")
    return value


def _stem(path):
    return os.path.splitext(path)[0]


def _config_record(cfg):
    return {k: v for k, v in dataclasses.asdict(cfg).items() if v is not None}


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------
def cmd_gen(cfg):
    """Generate a training dataset for ``cfg.experiment``."""
    out = cfg.out or f"{cfg.experiment}.lsbs"
    meta = {"experiment": cfg.experiment, "seed": cfg.seed}
    if cfg.experiment in ("gauss_tridiag", "gauss_laplacian"):
        spec = (testbeds.PeriodicGaussianSpec.tridiagonal(cfg.d)
                if cfg.experiment == "gauss_tridiag"
                else testbeds.PeriodicGaussianSpec.laplacian(cfg.d, cfg.L))
        X = testbeds.sample_periodic_gaussian(spec, cfg.M, cfg.seed)
        meta["spec"] = dataclasses.asdict(spec)
    elif cfg.experiment == "bimodal":
        spec = testbeds.BimodalSdeSpec(intervals=cfg.d - 1)
        X = testbeds.bimodal_trajectories(spec, cfg.M, cfg.seed)
        meta["spec"] = dataclasses.asdict(spec)
    else:
        spec = testbeds.Lorenz96Spec()
        data = testbeds.lorenz96_generate(spec, cfg.M + 1, cfg.seed)
        X = data.samples
        meta.update(spec=dataclasses.asdict(spec), sigma_z=data.sigma_z,
                    sigma_psi=data.sigma_psi, y_std=data.y_std, K=spec.K)
    digest = io.write_dataset(out, X, meta, csv=cfg.csv)
    return {"out": out, "d": X.shape[1], "M": X.shape[0], "sha256": digest}


def cmd_fit(cfg):
    """Fit the model family required by ``cfg.scheme`` and save it."""
    data_path = _require(cfg, "data")
    X = io.read_dataset(data_path)
    meta = io.read_metadata(data_path)
    experiment = meta.get("experiment", cfg.experiment)
    M, d = X.shape
    scales = _metric_scales(cfg, meta, d)
    family = _family(cfg.scheme)
    common = dict(epsilon=cfg.epsilon, metric_scales=scales)
    if family == "bridge":
        model = SchrodingerBridge(sinkhorn_tol=cfg.sinkhorn_tol, max_iter=cfg.max_iter,
                                  **common)
    elif family == "kde":
        model = KernelDenoiser(**common)
    elif family == "localized_kde":
        model = LocalizedKernelDenoiser(sets=_build_sets(cfg, d, experiment), **common)
    else:
        model = LocalizedSchrodingerBridge(
            sets=_build_sets(cfg, d, experiment), sinkhorn_tol=cfg.sinkhorn_tol,
            max_iter=cfg.max_iter, n_jobs=cfg.n_jobs, **common)
    model.fit(X)
    out = cfg.out or _stem(data_path) + ".model"
    io.save_model(out, model, dataset_path=os.path.abspath(data_path))
    n_weights = len(getattr(model, "sets_", [None]))
    return {"out": out, "model": type(model).__name__, "n_sets": n_weights}


def _load(cfg):
    model_path = _require(cfg, "model")
    samples = io.read_dataset(cfg.data) if cfg.data else None
    return io.load_model(model_path, samples)


def cmd_sample(cfg):
    """Generate ``cfg.N`` samples and their diagnostics CSVs."""
    model = _load(cfg)
    config = SamplerConfig(scheme=cfg.scheme, epsilon=None, n_decorrelation=cfg.n_c,
                           n_samples=cfg.N, seed=cfg.seed, mode=cfg.mode,
                           batch_size=cfg.batch_size)
    S = generate(model, config)
    out = cfg.out or "samples.lsbs"
    io.write_dataset(out, S, {"command": "sample", "config": _config_record(cfg)},
                     csv=cfg.csv)
    result = {"out": out, "N": S.shape[0], "d": S.shape[1]}
    if S.shape[0] >= 2:
        rep = diagnostics.report(S, bins=cfg.bins)
        result["diagnostics"] = rep.to_csv(_stem(out))
    return result


def cmd_closure(cfg):
    """Integrate the closure model; writes the z trajectory and diagnostics."""
    model = _load(cfg)
    d = model.n_features_in_
    K = d // 2
    z0 = model.data_[0, :K]
    closure = (lambda z: np.zeros_like(z)) if cfg.zero_closure else None
    zs, psi = closure_simulate(model, z0, cfg.dt, cfg.n_steps, n_c=cfg.n_c,
                               seed=cfg.seed, forcing=cfg.forcing, scheme=cfg.scheme,
                               closure=closure, return_psi=True)
    out = cfg.out or "closure.lsbs"
    io.write_dataset(out, zs, {"command": "closure", "config": _config_record(cfg)},
                     csv=cfg.csv)
    rep = diagnostics.report(zs, series=zs, tau_max=min(cfg.tau_max, len(zs) - 1),
                             bins=cfg.bins)
    rep.extras.update(z_variance=float(zs.var()), max_abs_z=float(np.abs(zs).max()))
    return {"out": out, "steps": cfg.n_steps, "diagnostics": rep.to_csv(_stem(out))}


def cmd_diag(cfg):
    """Diagnostics CSVs for an existing dataset file."""
    data_path = _require(cfg, "data")
    X = io.read_dataset(data_path)
    meta = io.read_metadata(data_path)
    experiment = meta.get("experiment", cfg.experiment)
    trajectories = X if experiment == "bimodal" else None
    series = X if experiment == "lorenz96" or meta.get("command") == "closure" else None
    if experiment == "lorenz96":
        series = X[:, :X.shape[1] // 2]
    tau_max = None if series is None else min(cfg.tau_max, len(series) - 1)
    rep = diagnostics.report(X, series=series, tau_max=tau_max,
                             trajectories=trajectories, bins=cfg.bins)
    prefix = _stem(cfg.out or data_path)
    return {"diagnostics": rep.to_csv(prefix)}


COMMANDS = {
    "gen": cmd_gen,
    "fit": cmd_fit,
    "sample": cmd_sample,
    "closure": cmd_closure,
    "diag": cmd_diag,
}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------
class _JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)
        sys.exit(2)


def _emit_error(kind, message, **extra):
    record = {"error": kind, "message": message}
    record.update({k: v for k, v in extra.items() if v is not None})
    sys.stderr.write(json.dumps(record, default=str) + "\n")


def build_parser():
    parser = _JsonArgumentParser(prog="locbridge",
                                 description="Localized Schrödinger bridge sampler")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_JsonArgumentParser)
    for name, func in COMMANDS.items():
        p = sub.add_parser(name, help=func.__doc__.splitlines()[0])
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--scheme", choices=SCHEMES)
        p.add_argument("--radius", type=int)
        p.add_argument("--out")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="any other config key (repeatable)")
    return parser


def resolve_config(args):
    """Defaults, then the config file, then ``--set`` pairs, then named flags."""
    values = io.read_config(args.config) if args.config else {}
    for pair in args.set:
        if "=" not in pair:
            raise ParameterError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        values[key.strip()] = value.strip()
    for flag in ("seed", "epsilon", "scheme", "radius", "out"):
        value = getattr(args, flag)
        if value is not None:
            values[flag] = value
    return ExperimentConfig.from_mapping(values)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        result = COMMANDS[args.command](cfg)
    except ConvergenceError as exc:
        _emit_error("ConvergenceError", str(exc), command=args.command,
                    alpha=exc.alpha, residual=exc.residual, n_iter=exc.n_iter)
        return 3
    except BlowUpError as exc:
        _emit_error("BlowUpError", str(exc), command=args.command, step=exc.step)
        return 3
    except (LocBridgeError, ValueError) as exc:
        _emit_error(type(exc).__name__, str(exc), command=args.command)
        return 2
    except OSError as exc:
        _emit_error(type(exc).__name__, str(exc), command=args.command,
                    path=getattr(exc, "filename", None))
        return 1
    sys.stdout.write(json.dumps(result) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
