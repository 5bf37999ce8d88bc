"""Command-line front end, config parsing, and file exporters.

Config files are plain ``key = value`` lines (``#`` comments).  Outputs are
deliberately diff-friendly: P5 PGM density snapshots, a CSV convergence
log, a plain-text quadtree structure listing, and an SVG edge rendering.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import fea, filters, greedy, optimizer, problems
from .filters import DesignField
from .greedy import BinaryQuadtree
from .hierarchy import QuadtreeHierarchy
from .mapping import _parse_pgm, read_mask_pgm
from .optimizer import RunConfig
from .problems import ProblemSpec

CSV_HEADER = "iter,compliance,volume,sharpness,change,beta"


class ConfigError(ValueError):
    """Malformed or inconsistent configuration file."""


_PROBLEMS = ("cantilever", "mbb", "bracket", "masked")

_INT_KEYS = {"n0x", "n0y", "m", "kbar", "max_iters", "beta_every",
             "snapshot_every"}
_FLOAT_KEYS = {"volfrac", "p_n", "eta", "beta_start", "beta_max", "tol",
               "move", "x_min"}
_STR_KEYS = {"problem", "mask", "quadtree", "optimizer", "solver",
             "output_dir"}
_LIST_KEYS = {"fix", "load"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _LIST_KEYS

_DEFAULT_N0 = {"cantilever": (8, 4), "mbb": (12, 4), "bracket": (6, 4)}
_DEFAULT_VOLFRAC = {"cantilever": 0.4, "mbb": 0.3}


def _read_entries(path):
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _ALL_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            entries.append((lineno, key, value))
    return entries


def _parse_scalar(path, lineno, key, value):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        kind = "integer" if key in _INT_KEYS else "number"
        raise ConfigError(f"{path}:{lineno}: {key} must be a {kind}, "
                          f"got {value!r}") from None
    return value


def parse_config(path) -> tuple[ProblemSpec, RunConfig, dict]:
    """Parse a run config; returns (problem, run config, output options)."""
    values: dict = {}
    fixes, loads = [], []
    for lineno, key, value in _read_entries(path):
        if key == "fix":
            fixes.append((lineno, value))
        elif key == "load":
            loads.append((lineno, value))
        else:
            values[key] = _parse_scalar(path, lineno, key, value)

    problem_name = values.get("problem")
    if problem_name is None:
        raise ConfigError(f"{path}: missing required key 'problem'")
    if problem_name not in _PROBLEMS:
        raise ConfigError(f"{path}: problem must be one of {_PROBLEMS}, "
                          f"got {problem_name!r}")

    m = values.get("m", 5)
    n0_default = _DEFAULT_N0.get(problem_name, (8, 4))
    n0 = (values.get("n0x", n0_default[0]), values.get("n0y", n0_default[1]))
    volfrac = values.get("volfrac", _DEFAULT_VOLFRAC.get(problem_name))

    if problem_name == "cantilever":
        spec = problems.make_cantilever(n0=n0, m=m, volfrac=volfrac)
    elif problem_name == "mbb":
        spec = problems.make_mbb(n0=n0, m=m, volfrac=volfrac)
    elif problem_name == "bracket":
        spec = problems.make_bracket(n0=n0, m=m, volfrac=volfrac)
    else:
        if "mask" not in values:
            raise ConfigError(f"{path}: problem 'masked' requires a 'mask' path")
        h = QuadtreeHierarchy(n0[0], n0[1], m)
        try:
            mask = read_mask_pgm(values["mask"], h)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{path}: mask: {exc}") from exc
        supports = [_parse_fix(path, lineno, text) for lineno, text in fixes]
        load_specs = [_parse_load(path, lineno, text) for lineno, text in loads]
        if not supports:
            supports = [problems.Support("left", "both")]
        if not load_specs:
            load_specs = [problems.PointLoad(1.0, 0.5, 0.0, -1.0)]
        spec = problems.make_masked(mask, n0, m, supports, load_specs,
                                    volfrac=volfrac)

    quadtree_mode = values.get("quadtree", "unbalanced")
    kbar = values.get("kbar")
    if kbar is not None and not 1 <= kbar <= m - 2:
        raise ConfigError(f"{path}: kbar must be in 1..{m - 2}, got {kbar}")

    opt = values.get("optimizer", "oc")
    if opt not in ("oc", "mma", "greedy"):
        raise ConfigError(f"{path}: optimizer must be oc, mma, or greedy")
    try:
        config = RunConfig(
            volfrac=spec.volfrac,
            filter_mode=quadtree_mode,
            kbar=kbar,
            optimizer=opt if opt != "greedy" else "oc",
            max_iters=values.get("max_iters", 400),
            tol=values.get("tol", 1e-4),
            beta_start=values.get("beta_start", 1.0),
            beta_max=values.get("beta_max", 32.0),
            beta_every=values.get("beta_every", 60),
            p_n=values.get("p_n", -16.0),
            eta=values.get("eta", 0.5),
            move=values.get("move", 0.2),
            x_min=values.get("x_min", 1e-3),
            solver=values.get("solver", "direct"),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    out = {
        "output_dir": values.get("output_dir", "out"),
        "snapshot_every": values.get("snapshot_every", 20),
        "method": "greedy" if opt == "greedy" else "continuous",
    }
    return spec, config, out


def _parse_fix(path, lineno, text):
    parts = text.split()
    if not 1 <= len(parts) <= 4:
        raise ConfigError(f"{path}:{lineno}: fix expects "
                          "'edge [component [f0 f1]]'")
    edge = parts[0]
    component = parts[1] if len(parts) > 1 else "both"
    span = (float(parts[2]), float(parts[3])) if len(parts) == 4 else (0.0, 1.0)
    try:
        return problems.Support(edge, component, span)
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: {exc}") from exc


def _parse_load(path, lineno, text):
    parts = text.split()
    if len(parts) != 4:
        raise ConfigError(f"{path}:{lineno}: load expects 'x_frac y_frac fx fy'")
    try:
        return problems.PointLoad(*(float(p) for p in parts))
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: load values must be numbers") from None


# ---------------------------------------------------------------------------
# exporters

def write_pgm(path, rho: np.ndarray):
    """8-bit P5 grayscale snapshot, 255 = solid; top image row = top of domain."""
    rho = np.clip(np.asarray(rho, dtype=float), 0.0, 1.0)
    img = np.flipud(np.round(rho * 255.0).astype(np.uint8))
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def read_pgm_density(path) -> np.ndarray:
    """Inverse of :func:`write_pgm` (up to 8-bit quantization)."""
    img = _parse_pgm(path)
    return np.flipud(img).astype(float) / 255.0


def export_convergence_csv(records, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(CSV_HEADER + "\n")
        for r in records:
            f.write(f"{r.iteration},{r.compliance:.10g},{r.volume:.10g},"
                    f"{r.sharpness:.10g},{r.change:.10g},{r.beta:.10g}\n")


def quadtree_from_design(xtilde: DesignField, h: QuadtreeHierarchy,
                         threshold: float = 0.5) -> BinaryQuadtree:
    """Threshold a filtered field and close it under the parent dependency."""
    tree = BinaryQuadtree.unrefined(h)
    for k in range(1, h.kbar + 1):
        refined = xtilde.levels[k - 1] >= threshold
        if k > 1:
            refined &= tree.exists(k)
        tree.refined[k - 1][:] = refined
    return tree


def export_quadtree(xtilde: DesignField, h: QuadtreeHierarchy, path,
                    threshold: float = 0.5) -> BinaryQuadtree:
    tree = quadtree_from_design(xtilde, h, threshold)
    export_quadtree_tree(tree, path)
    return tree


def export_quadtree_tree(tree: BinaryQuadtree, path):
    """Plain-text listing: per level, the refined cell indices (1-based)."""
    h = tree.hierarchy
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"quadtree {h.n0x} {h.n0y} {h.m} {h.kbar}\n")
        for k in range(1, h.kbar + 1):
            cells = np.argwhere(tree.refined[k - 1])  # (iy, ix) pairs
            f.write(f"level {k} {len(cells)}\n")
            for iy, ix in cells:
                f.write(f"{ix + 1} {iy + 1}\n")


def import_quadtree(path) -> BinaryQuadtree:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 5 or header[0] != "quadtree":
            raise ValueError(f"{path}: not a quadtree structure file")
        n0x, n0y, m, kbar = (int(v) for v in header[1:])
        h = QuadtreeHierarchy(n0x, n0y, m, kbar=kbar)
        tree = BinaryQuadtree.unrefined(h)
        for k in range(1, kbar + 1):
            lvl = f.readline().split()
            if len(lvl) != 3 or lvl[0] != "level" or int(lvl[1]) != k:
                raise ValueError(f"{path}: malformed level header for level {k}")
            for _ in range(int(lvl[2])):
                i, j = (int(v) for v in f.readline().split())
                tree.refined[k - 1][j - 1, i - 1] = True
    return tree


def export_svg(tree: BinaryQuadtree, path):
    """Cell-edge rendering: coarse grid plus the midlines of refined cells."""
    h = tree.hierarchy
    W, Ht = h.nelx, h.nely
    B = 1 << h.m
    lines = []

    def seg(x1, y1, x2, y2):
        lines.append(f'<line x1="{x1}" y1="{Ht - y1}" x2="{x2}" '
                     f'y2="{Ht - y2}"/>')

    for gx in range(0, W + 1, B):
        seg(gx, 0, gx, Ht)
    for gy in range(0, Ht + 1, B):
        seg(0, gy, W, gy)
    for k in range(1, h.kbar + 1):
        L = h.cell_size(k)
        for iy, ix in np.argwhere(tree.refined[k - 1]):
            x0, y0 = ix * L, iy * L
            seg(x0 + L // 2, y0, x0 + L // 2, y0 + L)
            seg(x0, y0 + L // 2, x0 + L, y0 + L // 2)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'viewBox="0 0 {W} {Ht}">\n')
        f.write('<g stroke="black" stroke-width="0.5" fill="none">\n')
        f.write("\n".join(lines))
        f.write("\n</g>\n</svg>\n")


# ---------------------------------------------------------------------------
# commands

def _run_continuous(spec, config, out, label=""):
    outdir = out["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    bundle = problems.build_problem(spec, mode=config.filter_mode,
                                    kbar=config.kbar)
    every = out.get("snapshot_every", 20)

    def snapshot(record, x, rho):
        if every and record.iteration % every == 0:
            write_pgm(os.path.join(outdir, f"snapshot_{record.iteration:04d}.pgm"),
                      rho)

    x, rho, state = optimizer.run(bundle, config, callback=snapshot)
    write_pgm(os.path.join(outdir, "final.pgm"), rho)
    export_convergence_csv(state.history, os.path.join(outdir, "convergence.csv"))
    params = filters.FilterParams(p_n=config.p_n, beta=state.beta, eta=config.eta)
    _, xt = filters.filter_chain(x, params, bundle.table)
    tree = export_quadtree(xt, bundle.hierarchy,
                           os.path.join(outdir, "quadtree.txt"))
    export_svg(tree, os.path.join(outdir, "quadtree.svg"))
    c = state.history[-1].compliance
    print(f"{label}{spec.name}: {state.termination} after {state.iteration} "
          f"iterations, compliance {c:.6g}, volume "
          f"{state.history[-1].volume:.4f}, sharpness "
          f"{state.history[-1].sharpness:.4f}")
    return c, state


def _run_greedy(spec, config, out, label=""):
    outdir = out["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    bundle = problems.build_problem(spec, mode="unbalanced", kbar=config.kbar)
    result = greedy.greedy_optimize(bundle, config.volfrac,
                                    solver=config.solver)
    rho = result.tree.density(bundle.ts)
    write_pgm(os.path.join(outdir, "greedy.pgm"), rho)
    export_quadtree_tree(result.tree, os.path.join(outdir, "quadtree.txt"))
    export_svg(result.tree, os.path.join(outdir, "quadtree.svg"))
    with open(os.path.join(outdir, "greedy_convergence.csv"), "w",
              encoding="utf-8") as f:
        f.write("iter,volume,compliance\n")
        for it, vf, c in result.history:
            f.write(f"{it},{vf:.10g},{c:.10g}\n")
    print(f"{label}{spec.name} (greedy): {result.iterations} iterations, "
          f"compliance {result.compliance:.6g}, volume "
          f"{fea.volume_fraction(rho):.4f}")
    return result.compliance, result


def cli_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="quadopt",
        description="Continuous and greedy optimization of adaptive quadtree "
                    "infill structures.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="run the continuous optimizer")
    p_opt.add_argument("config")
    p_opt.add_argument("--out", help="override output directory")
    p_opt.add_argument("--snapshot-every", type=int, default=None)

    p_greedy = sub.add_parser("greedy", help="run the greedy discrete baseline")
    p_greedy.add_argument("config")
    p_greedy.add_argument("--out", help="override output directory")

    p_sweep = sub.add_parser("sweep", help="perturbation-load robustness sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--design", required=True, help="density snapshot (PGM)")
    p_sweep.add_argument("--positions", type=int, default=101)
    p_sweep.add_argument("--out", help="override output directory")

    p_cmp = sub.add_parser("compare", help="run two configs, print compliances")
    p_cmp.add_argument("configA")
    p_cmp.add_argument("configB")

    args = parser.parse_args(argv)
    try:
        if args.command == "optimize":
            spec, config, out = parse_config(args.config)
            if args.out:
                out["output_dir"] = args.out
            if args.snapshot_every is not None:
                out["snapshot_every"] = args.snapshot_every
            if out["method"] == "greedy":
                _run_greedy(spec, config, out)
            else:
                _run_continuous(spec, config, out)
        elif args.command == "greedy":
            spec, config, out = parse_config(args.config)
            if args.out:
                out["output_dir"] = args.out
            _run_greedy(spec, config, out)
        elif args.command == "sweep":
            spec, config, out = parse_config(args.config)
            if args.out:
                out["output_dir"] = args.out
            outdir = out["output_dir"]
            os.makedirs(outdir, exist_ok=True)
            bundle = problems.build_problem(spec, mode=config.filter_mode,
                                            kbar=config.kbar)
            rho = read_pgm_density(args.design)
            if rho.shape != (bundle.hierarchy.nely, bundle.hierarchy.nelx):
                raise ConfigError(
                    f"design snapshot {rho.shape[::-1]} does not match the "
                    f"element grid "
                    f"{(bundle.hierarchy.nelx, bundle.hierarchy.nely)}")
            result = problems.robustness_sweep(bundle, rho,
                                               n_positions=args.positions)
            csv_path = os.path.join(outdir, "sweep.csv")
            with open(csv_path, "w", encoding="utf-8") as f:
                f.write("position,compliance\n")
                for t, c in zip(result.positions, result.compliances):
                    f.write(f"{t:.10g},{c:.10g}\n")
            print(f"sweep: {args.positions} positions, spread "
                  f"{result.spread:.6g}, std {result.std:.6g} -> {csv_path}")
        elif args.command == "compare":
            rows = []
            for idx, cfg in enumerate((args.configA, args.configB)):
                spec, config, out = parse_config(cfg)
                out["output_dir"] = os.path.join(out["output_dir"],
                                                 f"compare_{idx}")
                out["snapshot_every"] = 0
                if out["method"] == "greedy":
                    c, _ = _run_greedy(spec, config, out, label=f"[{cfg}] ")
                else:
                    c, _ = _run_continuous(spec, config, out, label=f"[{cfg}] ")
                rows.append((cfg, spec.name, out["method"], config.volfrac, c))
            print(f"{'config':40s} {'problem':10s} {'method':10s} "
                  f"{'volfrac':>8s} {'compliance':>12s}")
            for cfg, name, method, vf, c in rows:
                print(f"{cfg:40s} {name:10s} {method:10s} {vf:8.3f} {c:12.6g}")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
