"""Command-line front end.

    sqfn <command> [--config FILE] [--out DIR] [--seed N] [--threads N] [--set key=value ...]

Exit codes: 0 success, 2 invalid input, 3 the experiment reported a failure,
64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import backend
from .cloudio import cloud_to_csv, read_cloud_csv
from .config import ConfigError, RunConfig, load
from .dyadic import build_lattice, whitney_cover
from .estimates import (TbFamily, TestFamily, atomic_hp_test, big_pieces_witness,
                        bpsfe_pipeline, check_local_tb, cube_indicators,
                        estimate_sfe_constant, lp_sweep, random_signs, smooth_bumps,
                        weak_lp_indicator_test)
from .geometry import generate
from .kernels import kernel_by_name
from .qm import check_adr
from .reports import array_digest, curve_csv, dumps

log = logging.getLogger("sqfn")

COMMANDS = ("gen", "check-adr", "lattice", "cover", "sfe", "tb", "bpsfe", "weak-lp",
            "lp-sweep", "hp-atoms")

EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_USAGE = 0, 2, 3, 64

USAGE = ("usage: sqfn {" + ",".join(COMMANDS) + "} [--config FILE] [--out DIR] "
         "[--seed N] [--threads N] [--set key=value ...]")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser():
    p = _Parser(prog="sqfn", usage=USAGE, add_help=True)
    p.add_argument("command")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    return p


class Run:
    """Shared state of one invocation: config, cloud, lattice and cover."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.t0 = time.perf_counter()
        self._E = self._lat = self._cov = None
        os.makedirs(cfg.output_dir, exist_ok=True)

    @property
    def E(self):
        if self._E is None:
            cfg = self.cfg
            if cfg.cloud:
                with open(cfg.cloud) as fh:
                    E = read_cloud_csv(fh.read(), dim=cfg.dim,
                                       expect_config=cfg.geometry_digest())
                # same data as the configured generator: keep its labels and constants
                gen = generate(cfg.geometry)
                if array_digest(gen.points, gen.weights) == array_digest(E.points, E.weights):
                    E = gen
                self._E = E
            else:
                self._E = generate(cfg.geometry)
        return self._E

    @property
    def theta(self):
        return kernel_by_name(self.cfg.kernel, self.E.m, **self.cfg.kernel_params)

    @property
    def lattice(self):
        if self._lat is None:
            self._lat = build_lattice(self.E, self.cfg.depth)
        return self._lat

    @property
    def cover(self):
        if self._cov is None:
            c = self.cfg
            self._cov = whitney_cover(self.E.space, self.E, c.truncation_radius, c.eps_min,
                                      self.lattice, c.c_assign)
        return self._cov

    def path(self, name):
        return os.path.join(self.cfg.output_dir, name)

    def write(self, name, text):
        if name.endswith(".csv") and not text.startswith("#"):
            text = f"# config-digest: {self.cfg.digest()}\n" + text
        with open(self.path(name), "w") as fh:
            fh.write(text)

    def report(self, result, name=None):
        doc = {"command": self.command, "config": self.cfg.to_dict(),
               "config_digest": self.cfg.digest(), "backend": backend.NAME,
               "wall_time": time.perf_counter() - self.t0, "result": result}
        self.write(name or f"{self.command.replace('-', '_')}.json", dumps(doc) + "\n")


def _family(run: Run) -> TestFamily:
    cfg, E = run.cfg, run.E
    rng = np.random.default_rng(cfg.seed)
    parts = []
    for member in cfg.family:
        if member == "indicators":
            parts.append(cube_indicators(E, run.lattice))
        elif member == "signs" and cfg.n_signs:
            parts.append(random_signs(E, cfg.n_signs, rng))
        elif member == "bumps" and cfg.n_bumps:
            parts.append(smooth_bumps(E, cfg.n_bumps, rng))
        elif member == "zero":
            parts.append(TestFamily(["zero"], np.zeros((len(E), 1)), {"zero": 1}))
    if not parts:
        raise ValueError("empty effective family: no test functions configured")
    return TestFamily(sum((p.names for p in parts), []), np.column_stack([p.values for p in parts]),
                      {k: v for p in parts for k, v in p.spec.items()} | {"seed": cfg.seed})


def cmd_gen(run: Run):
    E = run._E = generate(run.cfg.geometry)
    run.write("cloud.csv", cloud_to_csv(E, run.cfg.geometry_digest()))
    run.report({"name": E.name, "N": len(E), "total_mass": E.total_mass, "diam": E.diam,
                "spacing": E.spacing, "adr_const_declared": E.adr_const,
                "data_digest": array_digest(E.points, E.weights)})
    return EXIT_OK


def cmd_check_adr(run: Run):
    rep = check_adr(run.E)
    run.report(rep.to_dict())
    run.write("adr_curve.csv", curve_csv([r["radius"] for r in rep.per_radius_ratios],
                                         [r["const"] for r in rep.per_radius_ratios],
                                         ("radius", "const")))
    return EXIT_OK if rep.best_const <= run.E.adr_const * (1 + 1e-9) else EXIT_FAILED


def cmd_lattice(run: Run):
    run.write("lattice.json", dumps(run.lattice.to_json() | {"config_digest": run.cfg.digest()})
              + "\n")
    lat = run.lattice
    run.report({"kappa_E": lat.kappa_E, "depth": lat.depth, "n_cubes": len(lat.cubes),
                "per_generation": {k: len(v) for k, v in lat.generations.items()},
                "C_in": lat.C_in, "C_out": lat.C_out, "C_out_measured": lat.C_out_measured,
                "c_ball": lat.c_ball, "truncated": lat.truncated}, "lattice_report.json")
    return EXIT_OK


def cmd_cover(run: Run):
    cov = run.cover
    run.write("cover.csv", cov.to_csv())
    run.report({"n_cells": len(cov), "n_nodes": cov.n_nodes, "eps_min": cov.eps_min,
                "truncation_radius": cov.truncation_radius,
                "unassigned": int(np.sum(cov.assignment < 0)),
                "min_side": float(cov.side.min()), "max_side": float(cov.side.max())})
    return EXIT_OK


def cmd_sfe(run: Run):
    rep = estimate_sfe_constant(run.E, run.theta, _family(run), run.cfg.seed, run.cover,
                                run.lattice)
    run.report(rep.to_dict())
    run.write("sfe_ratios.csv", curve_csv(range(len(rep.per_function)),
                                          [r["ratio"] for r in rep.per_function],
                                          ("index", "ratio")))
    return EXIT_OK


def cmd_tb(run: Run):
    fam = TbFamily.indicators(run.E, run.lattice, C0_claimed=run.cfg.C0, c0_claimed=run.cfg.c0)
    rep = check_local_tb(run.E, run.theta, fam, run.cover)
    run.report(rep.to_dict())
    run.write("tb_cubes.csv", curve_csv([r["cube"] for r in rep.per_cube],
                                        [r["C0_needed"] for r in rep.per_cube],
                                        ("cube", "C0_needed")))
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_bpsfe(run: Run):
    cfg = run.cfg
    wit = big_pieces_witness(run.E, run.lattice, cfg.witness, eps_min=cfg.eps_min, seed=cfg.seed)
    rep = bpsfe_pipeline(run.E, run.theta, wit, run.cover, cfg.eta, cfg.C0, cfg.c0, cfg.seed)
    rep["eta_per_cube"] = wit.eta_per_cube
    run.report(rep)
    ids = sorted(wit.eta_per_cube)
    run.write("bpsfe_eta.csv", curve_csv(ids, [wit.eta_per_cube[i] for i in ids], ("cube", "eta")))
    return EXIT_OK if rep["failures"] == 0 else EXIT_FAILED


def cmd_weak_lp(run: Run):
    E, cfg = run.E, run.cfg
    centre = int(np.argmin(np.sum((E.points - E.points.mean(axis=0)) ** 2, axis=1)))
    balls = [(centre, r) for r in cfg.radii]
    curves = weak_lp_indicator_test(E, run.theta, cfg.kappa, cfg.p, balls, cover=run.cover)
    run.report({"p": cfg.p, "kappa": cfg.kappa, "curves": [c.to_dict() for c in curves]})
    for i, c in enumerate(curves):
        run.write(f"weak_lp_{i}.csv", c.to_csv())
    return EXIT_OK


def cmd_lp_sweep(run: Run):
    cfg = run.cfg
    table = lp_sweep(run.E, run.theta, cfg.kappa, cfg.p_list, _family(run), cfg.seed,
                     run.cover, run.lattice, atoms=cfg.atoms)
    run.report({"kappa": cfg.kappa, "table": {str(p): v for p, v in table.items()}})
    run.write("lp_sweep.csv", curve_csv(list(table), [v["ratio"] for v in table.values()],
                                        ("p", "ratio")))
    return EXIT_OK


def cmd_hp_atoms(run: Run):
    cfg = run.cfg
    rep = atomic_hp_test(run.E, run.theta, cfg.kappa, cfg.hp_p, cfg.atoms, cfg.seed, run.cover)
    run.report(rep)
    run.write("hp_atoms.csv", curve_csv(range(len(rep["values"])), rep["values"],
                                        ("atom", "value")))
    return EXIT_OK


HANDLERS = {"gen": cmd_gen, "check-adr": cmd_check_adr, "lattice": cmd_lattice,
            "cover": cmd_cover, "sfe": cmd_sfe, "tb": cmd_tb, "bpsfe": cmd_bpsfe,
            "weak-lp": cmd_weak_lp, "lp-sweep": cmd_lp_sweep, "hp-atoms": cmd_hp_atoms}


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("SQFN_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def run(command: str, cfg: RunConfig) -> int:
    if command not in HANDLERS:
        print(USAGE, file=sys.stderr)
        return EXIT_USAGE
    if cfg.threads:
        backend.set_threads(cfg.threads)
    return HANDLERS[command](Run(cfg, command))


def main(argv=None) -> int:
    _setup_logging()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"{USAGE}\nerror: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command not in HANDLERS:
        print(f"{USAGE}\nerror: unknown command {args.command!r}", file=sys.stderr)
        return EXIT_USAGE
    overrides = {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            print(f"{USAGE}\nerror: --set expects key=value", file=sys.stderr)
            return EXIT_USAGE
        overrides[key.strip()] = val.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.threads is not None:
        overrides["runtime.threads"] = str(args.threads)
    if args.out is not None:
        overrides["output.dir"] = args.out
    try:
        cfg = load(args.config, overrides)
        return run(args.command, cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
