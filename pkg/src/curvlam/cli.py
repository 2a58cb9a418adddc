"""Command line: ``curvlam run|sweep|export-mesh``."""

import argparse
import logging
import os
import sys
from pathlib import Path

from . import io
from .config import load_config, load_preset, preset_names
from .errors import CurvlamError
from .runner import SWEEP_PARAMETERS, make_mesh, run, sweep

THREADS_ENV = "CURVLAM_THREADS"
log = logging.getLogger("curvlam")


def _threads(value):
    if value is not None:
        return value
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _config(args):
    if bool(args.config) == bool(args.preset):
        raise SystemExit("give exactly one of --config or --preset")
    return load_config(args.config) if args.config else load_preset(args.preset)


def _parse_values(parameter, text):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if parameter == "refinement" and "x" in item:
            out.append(tuple(int(v) for v in item.split("x")))
        elif parameter in ("n_sub",):
            out.append(int(item))
        else:
            out.append(float(item))
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="curvlam", description="Curved laminate corner-unfolding solver")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="configuration file")
        sp.add_argument("--preset", help=f"shipped preset ({', '.join(preset_names())})")
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default ${THREADS_ENV} or 1)")
        sp.add_argument("--out", type=Path, default=None, help="output directory")

    common(sub.add_parser("run", help="build, solve and post-process one model"))
    sw = sub.add_parser("sweep", help="repeat a run over a list of parameter values")
    common(sw)
    sw.add_argument("--parameter", required=True, choices=SWEEP_PARAMETERS)
    sw.add_argument("--values", required=True,
                    help="comma separated; refinement levels as ARCxWIDTHxPERLAYER or PERLAYER")
    sw.add_argument("--preconditioners", default=None,
                    help="comma separated list to compare (default: the configured one)")
    sw.add_argument("--concurrent", type=int, default=1,
                    help="sweep points run at once, each in its own process and output directory")
    common(sub.add_parser("export-mesh", help="write the mesh as legacy VTK"))
    sub.add_parser("presets", help="list shipped presets")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return 0
    try:
        cfg = _config(args)
        threads = _threads(args.threads)
        out = args.out if args.out is not None else Path(cfg.output.directory)
        if args.command == "run":
            res = run(cfg, out, threads)
            try:
                from .plotting import plot_profiles
                plot_profiles(out)
            except ImportError:
                log.warning("matplotlib missing; skipping figures")
            print(f"converged={res.converged} iterations={res.iterations} "
                  f"F_max={res.failure.F_max:.4f} M_fail={res.failure.M_fail:.4f} kN mm/mm")
            return 0 if res.converged else 2
        if args.command == "sweep":
            values = _parse_values(args.parameter, args.values)
            precs = args.preconditioners.split(",") if args.preconditioners else None
            rows = sweep(cfg, args.parameter, values, out, threads, precs, write_runs=True,
                         concurrent=args.concurrent)
            try:
                from .plotting import plot_sweep
                plot_sweep(out / f"sweep_{args.parameter}.csv")
            except ImportError:
                log.warning("matplotlib missing; skipping figures")
            failed = [r for r in rows if r.get("status") != "ok"]
            print(f"{len(rows)} runs, {len(failed)} failed -> {out / f'sweep_{args.parameter}.csv'}")
            return 1 if failed else 0
        if args.command == "export-mesh":
            mesh = make_mesh(cfg)
            out.mkdir(parents=True, exist_ok=True)
            path = out / "mesh.vtk"
            io.write_vtk(path, mesh)
            w = mesh.wrinkle
            print(f"{mesh.n_elements} elements, {mesh.n_nodes} nodes"
                  + (f", wrinkle amplitude {w.amplitude:.4f} mm" if w is not None else "") + f" -> {path}")
            return 0
    except CurvlamError as exc:
        log.error("%s", exc)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
