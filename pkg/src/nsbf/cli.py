"""Command-line front end.

::

    python3 -m nsbf run --case lshape --refine adaptive --steps 10 --format json --out amr.json
    python3 -m nsbf verify inverse-estimate --samples 1000 --seed 42

Every flag may also be given in a JSON config file (``--config``) under its
flag name (``"theta-r"`` or ``"theta_r"``); flags on the command line win.
Log verbosity is read from ``NSBF_LOG_LEVEL`` (default ``WARNING``).

Exit codes: 0 success, 1 usage error, 2 solver failure, 3 invariant-check
failure.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .adapt import AdaptConfig, run_amr
from .bench import CASES, emit_report, run_uniform
from .forms import Discretization, dump_matrix
from .invest import AffineField, BubbleContext, dumps_report, inverse_report, quotient_Q, sample_slice
from .mesh import dump_mesh
from .solver import SolverError
from .spaces import ModelParams

__all__ = ["main", "build_parser", "merge_config", "EXIT_OK", "EXIT_USAGE", "EXIT_SOLVER", "EXIT_INVARIANT"]

log = logging.getLogger("nsbf")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_INVARIANT = 0, 1, 2, 3
LOG_ENV = "NSBF_LOG_LEVEL"
KERNEL_TOL = 1e-10
SCALING_TOL = 1e-10

RUN_DEFAULTS = {
    "case": "smooth2d",
    "scheme": "modified",
    "refine": "uniform",
    "nu": 1.0,
    "kappa": 1.0,
    "forchheimer": 1.0,
    "theta_stab": 10.0,
    "levels": 7,
    "theta_r": 0.275,
    "theta_c": 0.0,
    "out": None,
    "format": "csv",
    "dump_mesh": None,
    "dump_matrix": None,
}
VERIFY_DEFAULTS = {"samples": 1000, "seed": 0, "out": None, "refine_max": True}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="nsbf", description="Pressure-robust Brinkman-Forchheimer solver benchmarks.")
    p.add_argument("--version", action="version", version=f"nsbf {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    r = sub.add_parser("run", help="uniform or adaptive convergence study", argument_default=S)
    r.add_argument("--config", help="JSON file with flag values")
    r.add_argument("--case", choices=sorted(CASES))
    r.add_argument("--scheme", choices=["standard", "modified"])
    r.add_argument("--refine", choices=["uniform", "adaptive"])
    r.add_argument("--nu", type=float)
    r.add_argument("--kappa", type=float)
    r.add_argument("--forchheimer", type=float)
    r.add_argument("--theta-stab", dest="theta_stab", type=float)
    r.add_argument("--levels", "--steps", dest="levels", type=int,
                   help="number of solves (mesh levels or adaptive steps)")
    r.add_argument("--theta-r", dest="theta_r", type=float)
    r.add_argument("--theta-c", dest="theta_c", type=float)
    r.add_argument("--out", help="report path (stdout if omitted)")
    r.add_argument("--format", choices=["csv", "json"])
    r.add_argument("--dump-mesh", dest="dump_mesh", help="write the finest mesh here")
    r.add_argument("--dump-matrix", dest="dump_matrix", help="write the final Newton matrix here")

    v = sub.add_parser("verify", help="property checks")
    vsub = v.add_subparsers(dest="check", required=True, parser_class=_Parser)
    ie = vsub.add_parser("inverse-estimate", help="sample the bubble inverse-estimate quotient",
                         argument_default=S)
    ie.add_argument("--config", help="JSON file with flag values")
    ie.add_argument("--samples", type=int)
    ie.add_argument("--seed", type=int)
    ie.add_argument("--out", help="report path (stdout if omitted)")
    ie.add_argument("--no-refine", dest="refine_max", action="store_false",
                    help="skip the local maximisation after sampling")
    return p


def merge_config(defaults, file_values, cli_values):
    """Defaults, then config-file values, then command-line values."""
    merged = dict(defaults)
    for key, val in (file_values or {}).items():
        k = key.replace("-", "_")
        if k == "steps":
            k = "levels"
        if k not in defaults:
            raise UsageError(f"unknown config key {key!r}")
        merged[k] = val
    merged.update({k: v for k, v in cli_values.items() if k in defaults})
    return merged


def _read_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _write(path, data):
    if isinstance(data, str):
        data = data.encode()
    if path is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def cmd_run(cfg):
    try:
        params = ModelParams(
            nu=float(cfg["nu"]),
            kappa=float(cfg["kappa"]),
            forchheimer=float(cfg["forchheimer"]),
            theta_stab=float(cfg["theta_stab"]),
            scheme=cfg["scheme"],
        )
        levels = int(cfg["levels"])
        if levels < 0:
            raise ValueError("levels must be non-negative")
        if cfg["case"] not in CASES:
            raise ValueError(f"unknown case {cfg['case']!r}")
        if cfg["refine"] not in ("uniform", "adaptive"):
            raise ValueError("refine must be 'uniform' or 'adaptive'")
        if cfg["format"] not in ("csv", "json"):
            raise ValueError("format must be 'csv' or 'json'")
        amr = None
        if cfg["refine"] == "adaptive":
            amr = AdaptConfig(theta_r=float(cfg["theta_r"]), theta_c=float(cfg["theta_c"]),
                              l_max=max(levels - 1, 0))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if amr is not None and cfg["case"] == "smooth2d":
        log.warning("adaptive refinement on the smooth case is not one of the reference studies")

    last = {}

    def keep_last(level, mesh, state, eta):
        last.update(mesh=mesh, state=state)

    try:
        if amr is None:
            records = run_uniform(cfg["case"], params, levels, callback=keep_last)
        else:
            records = run_amr(cfg["case"], amr, params, callback=keep_last)
    except SolverError as exc:
        print(f"nsbf: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    meta = {"case": cfg["case"], "scheme": cfg["scheme"], "refine": cfg["refine"], "config": cfg}
    _write(cfg["out"], emit_report(records, cfg["format"], metadata=meta))
    if cfg["dump_mesh"]:
        _write(cfg["dump_mesh"], dump_mesh(last["mesh"]))
    if cfg["dump_matrix"]:
        st = last["state"]
        from .bench import make_case

        disc = Discretization(st.layout, params, make_case(cfg["case"], params).forcing)
        _, J = disc.residual_and_jacobian(st.vector())
        _write(cfg["dump_matrix"], dump_matrix(J))

    bad = [i for i, r in enumerate(records) if r.loss_div > KERNEL_TOL or r.loss_curl > KERNEL_TOL]
    if bad:
        print(f"nsbf: kernel identities violated on levels {bad}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_verify_inverse(cfg):
    try:
        samples, seed = int(cfg["samples"]), int(cfg["seed"])
        if samples < 1:
            raise ValueError("samples must be >= 1")
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    ctx = BubbleContext()
    doc = inverse_report(samples, seed, ctx, refine=bool(cfg["refine_max"]), config=cfg)
    # invariant checks on an independent stream of samples
    rng = np.random.default_rng([seed, 1])
    a, B = sample_slice(samples, rng)
    t = rng.choice([-1.0, 1.0], samples) * 10.0 ** rng.uniform(-3.0, 3.0, samples)
    min_q, dev = np.inf, 0.0
    for i in range(samples):
        q = quotient_Q(AffineField(a[i], B[i]), ctx)
        qt = quotient_Q(AffineField(t[i] * a[i], t[i] * B[i]), ctx)
        min_q = min(min_q, q)
        dev = max(dev, abs(q - qt))
    ok = bool(min_q >= 1.0 - 1e-12 and dev <= SCALING_TOL and np.isfinite(doc["maxQ"]))
    doc["checks"] = {"min_Q": float(min_q), "max_scaling_deviation": float(dev), "passed": ok}
    _write(cfg["out"], dumps_report(doc))
    if not ok:
        print("nsbf: inverse-estimate invariant check failed", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def main(argv=None):
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = vars(build_parser().parse_args(argv))
        file_values = _read_config(args.pop("config", None))
        if args["command"] == "run":
            return cmd_run(merge_config(RUN_DEFAULTS, file_values, args))
        return cmd_verify_inverse(merge_config(VERIFY_DEFAULTS, file_values, args))
    except UsageError as exc:
        print(f"nsbf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"nsbf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
