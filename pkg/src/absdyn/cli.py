"""Command-line experiment runner.

Every output file starts with the run configuration (a ``# config:`` line in
CSV files, a ``"config"`` key in JSON files) and is written to a temporary
file first, then renamed into place, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .drift import drift_u, level_point, y_star
from .measures import (
    AtomicMeasure,
    TailMassError,
    TrivialMeasureError,
    as_atomic,
    exponential_grid,
    load_measure,
    measure_from_dict,
    uniform_grid,
)
from .metric import ABCViolation, abc_check, decrease_experiment, loglog_slopes, wasserstein_p
from .orbits import ReachSetExplosion, lattice_test, random_orbit, reach_set
from .selfmap import GenFun, LatticePMF, blaschke_scan, circle_points, pmf_from_atomic, self_iterate
from .transfer import RepresentationError, iterate_push

EXIT_IO = 3
EXIT_MEASURE = 4
EXIT_TOLERANCE = 5
EXIT_CAP = 6


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.extra = extra


def fmt(x) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# output


def _write_atomic(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent if str(target.parent) else ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_csv(path, config: dict, header: list[str], rows) -> None:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    _write_atomic(path, buf.getvalue())


def write_json(path, config: dict, payload: dict) -> None:
    _write_atomic(path, json.dumps({"config": config, **payload}, sort_keys=True) + "\n")


def _load(path: str):
    try:
        return load_measure(path)
    except OSError as exc:
        raise CliError(EXIT_IO, "io", f"{path}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_MEASURE, "invalid_measure", f"{path}: {exc}") from exc


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# --------------------------------------------------------------------------
# commands


def cmd_measure(a, cfg):
    if a.kind == "exponential":
        m = exponential_grid(a.rate, 30.0 if a.x_max is None else a.x_max, a.n)
    elif a.kind == "uniform":
        m = uniform_grid(a.lo, a.hi, a.x_max, a.n)
    else:
        pairs = [p.split(":") for p in a.atoms.split(",")]
        m = AtomicMeasure([float(x) for x, _ in pairs], [float(w) for _, w in pairs], normalize=True)
    _write_atomic(a.out, json.dumps(m.to_dict()) + "\n")


def cmd_orbit(a, cfg):
    mu = _load(a.mu)
    rec = random_orbit(a.x0, mu, a.steps, a.seed)
    rows = [(0, rec.points[0], "")]
    rows += [(k, rec.points[k], rec.theta_draws[k - 1]) for k in range(1, rec.points.size)]
    write_csv(a.out, cfg, ["step", "x", "theta"], rows)


def cmd_lattice(a, cfg):
    thetas = _floats(a.thetas)
    res = lattice_test(thetas, tol=a.tol)
    payload = {"is_lattice": res.is_lattice, "step": res.step}
    if a.depth:
        pts = reach_set(a.x0, thetas, a.depth, tol=a.tol)
        payload["reach_size"] = int(pts.size)
        if res.is_lattice:
            off = np.abs(pts / res.step - np.rint(pts / res.step)) * res.step
            payload["max_lattice_offset"] = float(off.max())
    write_json(a.out, cfg, payload)


def cmd_drift(a, cfg):
    mu = _load(a.mu)
    ys = np.linspace(0.0, a.ymax, a.n)
    u = drift_u(mu, ys)
    e = mu.mean
    write_csv(a.out, cfg, ["y", "U", "y_minus_E", "identity"], zip(ys, u, ys - e, ys))
    if a.landmarks:
        marks = {
            "mean": e,
            "median": float(mu.quantile(0.5)),
            "y0": level_point(mu, 0.0),
            "y_star": y_star(mu),
        }
        marks["alpha_star"] = marks["y_star"] / e - 1.0
        write_json(a.landmarks, cfg, marks)


def cmd_iterate(a, cfg):
    mu, pi = _load(a.mu), _load(a.pi)
    seq = iterate_push(pi, mu, a.steps, strict=a.strict, renormalize=a.renormalize)
    steps = []
    for k, m in enumerate(seq):
        steps.append(
            {
                "k": k,
                "mass": float(m.cdf_right(m.support_max)),
                "w1_to_previous": None if k == 0 else wasserstein_p(seq[k - 1], m, 1),
                "measure": m.to_dict(),
            }
        )
    write_json(a.out, cfg, {"steps": steps})


def cmd_wasserstein(a, cfg):
    w = wasserstein_p(_load(a.rho), _load(a.pi), a.p)
    write_json(a.out, cfg, {"p": a.p, "wp": w})


def cmd_contract(a, cfg):
    ws = decrease_experiment(_load(a.rho), _load(a.pi), _load(a.mu), a.p, a.steps, strict=a.strict)
    slopes = loglog_slopes(ws)
    write_csv(a.out, cfg, ["k", "Wp", "loglog_slope"], ((k, w, s) for k, (w, s) in enumerate(zip(ws, slopes))))


def cmd_abc(a, cfg):
    mu = _load(a.mu)
    try:
        wit = abc_check(mu, a.A, a.B, a.C, a.probes, a.seed, c=a.c)
    except ABCViolation as exc:
        pr = exc.probe
        raise CliError(EXIT_TOLERANCE, "abc_violation", str(exc), interval=[pr.x, pr.y], candidate=[pr.L, pr.U]) from exc
    probes = wit.interval_probe
    write_json(
        a.out,
        cfg,
        {
            "passed": True,
            "probes": len(probes),
            "min_margin_geom": min(p.margin_geom for p in probes),
            "min_margin_mass": min(p.margin_mass for p in probes),
        },
    )


def cmd_selfmap(a, cfg):
    run = self_iterate(_load(a.mu), a.steps)
    steps = [
        {"k": k, "fit_distance": d, "fit_param": q, "measure": m.to_dict()}
        for k, (m, d, q) in enumerate(zip(run.measures, run.fit_distances, run.fit_params))
    ]
    write_json(a.out, cfg, {"steps": steps})


def _load_pmf(path: str) -> LatticePMF:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise CliError(EXIT_IO, "io", f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_MEASURE, "invalid_measure", f"{path}: {exc}") from exc
    try:
        if "probs" in d:
            return LatticePMF(d["probs"], float(d.get("truncation_mass", 0.0)), float(d.get("step", 1.0)))
        return pmf_from_atomic(as_atomic(measure_from_dict(d)))
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_MEASURE, "invalid_measure", f"{path}: {exc}") from exc


def cmd_genfun(a, cfg):
    gf = GenFun.of(_load_pmf(a.pmf))
    phi = circle_points(a.circle_samples)
    g = gf.g(np.exp(1j * phi))
    write_csv(a.out, cfg, ["phi", "abs_g", "re_g", "im_g"], zip(phi, np.abs(g), g.real, g.imag))


def cmd_scan(a, cfg):
    cands = blaschke_scan(a.factors, a.grid)
    rows = [
        {
            "zeros": [[complex(z).real, complex(z).imag] for z in c.zeros],
            "min_coeff": c.min_coeff,
            "nonnegative": c.nonnegative,
            "hat_residual": None if np.isnan(c.hat_residual) else c.hat_residual,
        }
        for c in cands
    ]
    write_json(a.out, cfg, {"candidates": rows, "nonnegative_count": sum(r["nonnegative"] for r in rows)})


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1, help="accepted for reproducible configs; runs are single-threaded")
    common.add_argument("--strict", action="store_true", help="reject mixed measure representations")
    common.add_argument("--out", default=None, help="output path (stdout when omitted)")

    p = argparse.ArgumentParser(prog="absdyn", description="Experiments with the random map x -> |x - theta|.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("measure", parents=[common], help="write a measure JSON file")
    s.add_argument("kind", choices=["exponential", "uniform", "atomic"])
    s.add_argument("--rate", type=float, default=1.0)
    s.add_argument("--lo", type=float, default=0.0)
    s.add_argument("--hi", type=float, default=1.0)
    s.add_argument("--x-max", type=float, default=None)
    s.add_argument("--n", type=int, default=2**14)
    s.add_argument("--atoms", default="0:1", help="comma-separated x:w pairs")
    s.set_defaults(func=cmd_measure)

    s = sub.add_parser("orbit", parents=[common], help="simulate one random orbit")
    s.add_argument("--x0", type=float, required=True)
    s.add_argument("--mu", required=True)
    s.add_argument("--steps", type=int, required=True)
    s.set_defaults(func=cmd_orbit)

    s = sub.add_parser("lattice", parents=[common], help="lattice test for a translation set")
    s.add_argument("--thetas", required=True)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--depth", type=int, default=0, help="also build the reach set to this depth")
    s.add_argument("--x0", type=float, default=0.0)
    s.set_defaults(func=cmd_lattice)

    s = sub.add_parser("drift", parents=[common], help="tabulate the drift function")
    s.add_argument("--mu", required=True)
    s.add_argument("--ymax", type=float, required=True)
    s.add_argument("--n", type=int, default=512)
    s.add_argument("--landmarks", default=None, help="JSON path for mean, median, fixed point and threshold")
    s.set_defaults(func=cmd_drift)

    s = sub.add_parser("iterate", parents=[common], help="iterate the averaged pushforward")
    s.add_argument("--mu", required=True)
    s.add_argument("--pi", required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--renormalize", action="store_true")
    s.set_defaults(func=cmd_iterate)

    s = sub.add_parser("wasserstein", parents=[common], help="p-Wasserstein distance")
    s.add_argument("--rho", required=True)
    s.add_argument("--pi", required=True)
    s.add_argument("--p", type=float, default=1.0)
    s.set_defaults(func=cmd_wasserstein)

    s = sub.add_parser("contract", parents=[common], help="Wasserstein decrease under iteration")
    s.add_argument("--mu", required=True)
    s.add_argument("--rho", required=True)
    s.add_argument("--pi", required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--p", type=float, default=1.0)
    s.set_defaults(func=cmd_contract)

    s = sub.add_parser("abc", parents=[common], help="probe the (A,B,C) condition")
    s.add_argument("--mu", required=True)
    s.add_argument("--A", type=float, required=True)
    s.add_argument("--B", type=float, required=True)
    s.add_argument("--C", type=float, required=True)
    s.add_argument("--probes", type=int, default=1000)
    s.add_argument("--c", type=float, default=None, help="left shift of the unbounded-support candidate")
    s.set_defaults(func=cmd_abc)

    s = sub.add_parser("selfmap", parents=[common], help="iterate mu -> T*_mu mu")
    s.add_argument("--mu", required=True)
    s.add_argument("--steps", type=int, required=True)
    s.set_defaults(func=cmd_selfmap)

    s = sub.add_parser("genfun", parents=[common], help="g = 2f - 1 on the unit circle")
    s.add_argument("--pmf", required=True)
    s.add_argument("--circle-samples", type=int, default=256)
    s.set_defaults(func=cmd_genfun)

    s = sub.add_parser("scan", parents=[common], help="Blaschke product coefficient scan")
    s.add_argument("--factors", type=int, default=2)
    s.add_argument("--grid", type=int, default=32)
    s.set_defaults(func=cmd_scan)
    return p


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _config(args)
    try:
        try:
            args.func(args, cfg)
        except CliError:
            raise
        except OSError as exc:
            raise CliError(EXIT_IO, "io", str(exc)) from exc
        except ReachSetExplosion as exc:
            raise CliError(EXIT_CAP, "cap", str(exc)) from exc
        except (TailMassError, ArithmeticError) as exc:
            raise CliError(EXIT_TOLERANCE, "tolerance", str(exc)) from exc
        except (TrivialMeasureError, RepresentationError, ValueError, TypeError) as exc:
            raise CliError(EXIT_MEASURE, "invalid_measure", str(exc)) from exc
    except CliError as err:
        record = {"error": err.kind, "message": str(err), "exit_code": err.code, **err.extra}
        sys.stderr.write(json.dumps(record) + "\n")
        return err.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
