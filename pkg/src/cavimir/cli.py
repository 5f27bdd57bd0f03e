"""Command-line front end.

Subcommands sweep the solver over displacement or gap grids and emit
CSV, or fit the close-separation models and emit JSON.  Output is
data-only; every run writes a manifest (resolved parameters, version,
output digests) next to its output file.  Numbers are formatted with 17
significant digits and a '.' decimal point regardless of locale, so a
rerun with the same parameters reproduces the output byte for byte.

Units are stamped in the CSV headers: lengths in units of the cavity
radius R, energies in hbar*c/R, forces in hbar*c/R^2.

Exit codes: 0 ok, 2 usage, 3 convergence failure (partial CSV is
retained, with the failure column filled), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .analysis import (
    DEFAULT_ENERGY_WINDOW,
    DEFAULT_FORCE_WINDOW,
    CurveSample,
    fit_energy_ansatz,
    fit_force_ansatz,
    fit_theta1_curve,
    force_from_ratio,
    theta1_from_fit,
    window,
)
from .cp import cp_energy_spherical
from .energy import Geometry, QuadratureSpec, casimir_energy, energy_ladder, extrapolate_lmax
from .errors import ConvergenceError, NumericalRangeError
from .pfa import PfaConfig, full_pfa_energy, full_pfa_force, pfa_force_limit, theta1_fpfa
from .scattering import pec_polarizabilities

__all__ = ["main", "build_parser"]

_UNIT_LINES = (
    "# lengths in units of R; energies in hbar*c/R; forces in hbar*c/R^2",
    f"# cavimir {__version__}",
)

_BASIS_ALIASES = {
    "r": "r-based",
    "R": "R-based",
    "r-based": "r-based",
    "R-based": "R-based",
}


class UsageError(ValueError):
    """Bad flag or config value; maps to exit code 2."""


def _require(args, **flags):
    # required-ness is checked after config merging, so flags may arrive
    # from the JSON file instead of the command line
    missing = [label for dest, label in flags.items() if getattr(args, dest) is None]
    if missing:
        raise UsageError(f"missing required flags: {', '.join(missing)}")


def _fmt(v) -> str:
    x = float(v)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _parse_grid(text: str) -> list[float]:
    parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as e:
        raise UsageError(f"grid {text!r}: {e}") from None
    if not all(map(math.isfinite, (start, stop, step))):
        raise UsageError(f"grid bounds must be finite, got {text!r}")
    if stop < start:
        raise UsageError(f"grid stop below start in {text!r}")
    if start == stop:
        return [start]
    if step <= 0.0:
        raise UsageError(f"grid step must be positive in {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(n)]


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise UsageError(f"expected true or false, got {text!r}")


def _parse_basis(text: str) -> str:
    try:
        return _BASIS_ALIASES[str(text)]
    except KeyError:
        raise UsageError(f"basis must be r or R, got {text!r}") from None


def _ratio_arg(args) -> float:
    rho = float(args.ratio)
    if not (math.isfinite(rho) and 0.0 < rho < 1.0):
        raise UsageError(f"--ratio must lie in (0, 1), got {args.ratio!r}")
    return rho


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_csv(path: str, meta: dict, columns: list[str], rows: list[list[str]]):
    lines = list(_UNIT_LINES)
    for k in sorted(meta):
        lines.append(f"# {k}: {meta[k]}")
    lines.append("# columns: " + ",".join(columns))
    lines.append(",".join(columns))
    lines.extend(",".join(r) for r in rows)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_csv(path: str) -> tuple[dict, list[str], list[list[str]]]:
    meta = {}
    columns = None
    rows = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    k, v = body.split(":", 1)
                    meta[k.strip()] = v.strip()
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append(line.split(","))
    if columns is None:
        raise UsageError(f"{path} has no column header")
    return meta, columns, rows


def _write_manifest(out_path: str, command: str, params: dict, t0: float):
    manifest = {
        "command": command,
        "parameters": params,
        "version": __version__,
        "wall_clock_s": round(time.time() - t0, 3),
        "outputs": [
            {
                "path": out_path,
                "sha256": _sha256(out_path),
            }
        ],
    }
    with open(out_path + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _auto_lmax(d_over_r: float) -> int:
    # channel count scales with the inverse gap; clamp to a desk-scale band
    return max(20, min(60, int(math.ceil(7.0 / d_over_r))))


def _pool_map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))  # map preserves input order


def _energy_point(task) -> dict:
    x, rho, lmax_policy, nodes, basis = task
    out = {
        "x": x,
        "energy": math.nan,
        "energy_fpfa": math.nan,
        "ratio": math.nan,
        "lmax_used": math.nan,
        "quad_nodes": nodes,
        "extrap_stderr": math.nan,
        "failure": "",
    }
    geom = Geometry.from_x(rho, 1.0, x)
    if x > 0.0:
        cfg = PfaConfig(y=-rho, d_over_r=(1.0 - rho) * (1.0 - x) / rho, basis=basis)
        out["energy_fpfa"] = full_pfa_energy(cfg, 1.0)
    else:
        out["energy_fpfa"] = 0.0
    quad = QuadratureSpec(nodes=nodes)
    try:
        if lmax_policy == "auto":
            d_over_r = (1.0 - rho) * (1.0 - x) / rho if x < 1.0 else math.inf
            top = _auto_lmax(d_over_r)
            ladder = [top - 15, top - 10, top - 5, top]
            fit = extrapolate_lmax(energy_ladder(geom, ladder, quad))
            out["energy"] = fit.e_infinity
            out["lmax_used"] = top
            out["extrap_stderr"] = float(fit.stderr[0])
        else:
            out["energy"] = casimir_energy(geom, int(lmax_policy), quad)
            out["lmax_used"] = int(lmax_policy)
    except (ConvergenceError, NumericalRangeError) as e:
        out["failure"] = str(e).replace(",", ";").replace("\n", " ")
        if isinstance(e, ConvergenceError) and e.last is not None:
            out["energy"] = e.last
        return out
    if out["energy_fpfa"] != 0.0:
        out["ratio"] = out["energy"] / out["energy_fpfa"]
    return out


def _cp_point(task) -> dict:
    xi, rho, order, compare, lmax, nodes = task
    out = {
        "a_over_R": xi,
        "energy_cp": math.nan,
        "energy_exact": math.nan,
        "frac_error_pct": math.nan,
        "order": order,
        "failure": "",
    }
    pols = pec_polarizabilities(rho, 1 if order == 3 else 2)
    try:
        out["energy_cp"] = cp_energy_spherical(pols, xi, 1.0)
        if compare:
            geom = Geometry(r=rho, R=1.0, a=xi)
            e = casimir_energy(geom, lmax, QuadratureSpec(nodes=nodes))
            out["energy_exact"] = e
            if e != 0.0:
                out["frac_error_pct"] = 100.0 * (e - out["energy_cp"]) / e
    except (ConvergenceError, NumericalRangeError) as e:
        out["failure"] = str(e).replace(",", ";").replace("\n", " ")
    return out


def _energy_rows(args) -> tuple[list[dict], dict]:
    rho = _ratio_arg(args)
    xs = _parse_grid(args.x_grid)
    if xs[0] < 0.0 or xs[-1] >= 1.0:
        raise UsageError("x grid must lie in [0, 1)")
    policy = str(args.lmax)
    if policy != "auto":
        try:
            if int(policy) < 1:
                raise ValueError
        except ValueError:
            raise UsageError(f"--lmax must be auto or a positive integer, got {policy!r}") from None
    nodes = int(args.nodes)
    basis = _parse_basis(args.basis)
    tasks = [(x, rho, policy, nodes, basis) for x in xs]
    rows = _pool_map(_energy_point, tasks, int(args.workers))
    params = {
        "ratio": rho,
        "x_grid": str(args.x_grid),
        "lmax": policy,
        "nodes": nodes,
        "basis": basis,
        "workers": int(args.workers),
    }
    return rows, params


_ENERGY_COLUMNS = [
    "x",
    "energy",
    "energy_fpfa",
    "ratio",
    "lmax_used",
    "quad_nodes",
    "extrap_stderr",
    "failure",
]


def cmd_energy(args) -> int:
    t0 = time.time()
    _require(args, ratio="--ratio", x_grid="--x-grid", out="--out")
    rows, params = _energy_rows(args)
    table = [
        [_fmt(r["x"]), _fmt(r["energy"]), _fmt(r["energy_fpfa"]), _fmt(r["ratio"]),
         _fmt(r["lmax_used"]), _fmt(r["quad_nodes"]), _fmt(r["extrap_stderr"]),
         r["failure"]]
        for r in rows
    ]
    meta = {"ratio": _fmt(params["ratio"]), "basis": params["basis"]}
    _write_csv(args.out, meta, _ENERGY_COLUMNS, table)
    _write_manifest(args.out, "energy", params, t0)
    return 3 if any(r["failure"] for r in rows) else 0


def cmd_force(args) -> int:
    t0 = time.time()
    _require(args, out="--out")
    failures = False
    if args.in_csv:
        meta, columns, raw = _read_csv(args.in_csv)
        try:
            ix = columns.index("x")
            ir = columns.index("ratio")
        except ValueError:
            raise UsageError(f"{args.in_csv} lacks x/ratio columns") from None
        ifail = columns.index("failure") if "failure" in columns else None
        if ifail is not None and any(row[ifail] for row in raw):
            raise ConvergenceError(f"{args.in_csv} carries failed rows; refusing to differentiate")
        if args.ratio is not None:
            rho = _ratio_arg(args)
        elif "ratio" in meta:
            rho = float(meta["ratio"])
        else:
            raise UsageError("--ratio required (input CSV has no ratio header)")
        ie = columns.index("energy_fpfa") if "energy_fpfa" in columns else None
        ise = columns.index("extrap_stderr") if "extrap_stderr" in columns else None
        samples = []
        for row in raw:
            se = 0.0
            if ie is not None and ise is not None:
                ef, s = float(row[ie]), float(row[ise])
                if math.isfinite(s) and ef != 0.0:
                    se = abs(s / ef)
            samples.append(CurveSample(float(row[ix]), float(row[ir]), se))
        params = {"in": args.in_csv, "ratio": rho}
    else:
        if args.ratio is None or args.x_grid is None:
            raise UsageError("need --in CSV or both --ratio and --x-grid")
        rows, params = _energy_rows(args)
        failures = any(r["failure"] for r in rows)
        if failures:
            raise ConvergenceError("energy sweep failed; rerun the energy command to inspect")
        rho = params["ratio"]
        samples = [
            CurveSample(r["x"], r["ratio"],
                        abs(r["extrap_stderr"] / r["energy_fpfa"])
                        if math.isfinite(r["extrap_stderr"]) and r["energy_fpfa"] != 0.0
                        else 0.0)
            for r in rows
        ]
    basis = _parse_basis(args.basis)
    pts = force_from_ratio(samples, rho, basis)
    table = [
        [_fmt(p.x), _fmt(p.ratio), _fmt(p.force), str(int(p.one_sided)), ""]
        for p in pts
    ]
    meta = {"ratio": _fmt(rho), "basis": basis}
    _write_csv(args.out, meta, ["x", "force_ratio", "force", "one_sided", "failure"], table)
    _write_manifest(args.out, "force", {**params, "basis": basis}, t0)
    return 0


def cmd_cp(args) -> int:
    t0 = time.time()
    _require(args, ratio="--ratio", a_over_R="--a-over-R", out="--out")
    rho = _ratio_arg(args)
    xis = _parse_grid(args.a_over_R)
    if xis[0] < 0.0 or xis[-1] >= 1.0 - rho:
        raise UsageError(f"a/R grid must lie in [0, 1 - ratio) = [0, {1.0 - rho:g})")
    order = int(args.order)
    if order not in (3, 5):
        raise UsageError(f"--order must be 3 or 5, got {args.order!r}")
    compare = _parse_bool(args.compare_exact)
    lmax = int(args.lmax)
    nodes = int(args.nodes)
    tasks = [(xi, rho, order, compare, lmax, nodes) for xi in xis]
    rows = _pool_map(_cp_point, tasks, int(args.workers))
    table = [
        [_fmt(r["a_over_R"]), _fmt(r["energy_cp"]), _fmt(r["energy_exact"]),
         _fmt(r["frac_error_pct"]), str(r["order"]), r["failure"]]
        for r in rows
    ]
    params = {
        "ratio": rho,
        "a_over_R": str(args.a_over_R),
        "order": order,
        "compare_exact": compare,
        "lmax": lmax,
        "nodes": nodes,
        "workers": int(args.workers),
    }
    _write_csv(
        args.out,
        {"ratio": _fmt(rho)},
        ["a_over_R", "energy_cp", "energy_exact", "frac_error_pct", "order", "failure"],
        table,
    )
    _write_manifest(args.out, "cp", params, t0)
    return 3 if any(r["failure"] for r in rows) else 0


def cmd_pfa(args) -> int:
    t0 = time.time()
    _require(args, y="--y", d_over_r="--d-over-r", out="--out")
    y = float(args.y)
    basis = _parse_basis(args.basis)
    deltas = _parse_grid(args.d_over_r)
    if deltas[0] <= 0.0:
        raise UsageError("d/r grid must be positive")
    rows = []
    failures = False
    r_small = abs(y)  # R = 1 length unit
    R_signed = -1.0 if y < 0.0 else 1.0 / y * r_small if y > 0.0 else math.inf
    for delta in deltas:
        cells = [_fmt(delta), "nan", "nan", "nan", ""]
        try:
            cfg = PfaConfig(y=y, d_over_r=delta, basis=basis)
            cells[1] = _fmt(full_pfa_energy(cfg, 1.0))
            cells[2] = _fmt(full_pfa_force(cfg, 1.0))
            cells[3] = _fmt(pfa_force_limit(delta * r_small, r_small, R_signed))
        except (ConvergenceError, ValueError) as e:
            cells[4] = str(e).replace(",", ";").replace("\n", " ")
            failures = True
        rows.append(cells)
    params = {"y": y, "basis": basis, "d_over_r": str(args.d_over_r)}
    _write_csv(
        args.out,
        {"y": _fmt(y), "basis": basis},
        ["d_over_r", "energy", "force", "force_leading", "failure"],
        rows,
    )
    _write_manifest(args.out, "pfa", params, t0)
    return 3 if failures else 0


def cmd_fit(args) -> int:
    t0 = time.time()
    _require(args, mode="--mode", in_csv="--in", out="--out")
    mode = str(args.mode)
    if mode not in ("energy", "force", "theta1"):
        raise UsageError(f"--mode must be energy, force, or theta1, got {args.mode!r}")
    meta, columns, raw = _read_csv(args.in_csv)
    payload = {"mode": mode, "input": args.in_csv}

    if mode == "theta1":
        try:
            iy = columns.index("y")
            iv = columns.index("theta1")
        except ValueError:
            raise UsageError("theta1 fit needs columns y,theta1") from None
        pts = sorted(
            (CurveSample(float(r[iy]), float(r[iv])) for r in raw),
            key=lambda s: s.x,
        )
        if args.window:
            lo, hi = _parse_window(args.window)
            pts = window(pts, lo, hi)
            payload["window"] = [lo, hi]
        fit = fit_theta1_curve(pts)
    else:
        ratio_col = "ratio" if mode == "energy" else "force_ratio"
        try:
            ix = columns.index("x")
            iv = columns.index(ratio_col)
        except ValueError:
            raise UsageError(f"{mode} fit needs columns x,{ratio_col}") from None
        if args.ratio is not None:
            rho = _ratio_arg(args)
        elif "ratio" in meta:
            rho = float(meta["ratio"])
        else:
            raise UsageError("--ratio required (input CSV has no ratio header)")
        basis = _parse_basis(args.basis)
        ios = columns.index("one_sided") if "one_sided" in columns else None
        default = DEFAULT_ENERGY_WINDOW if mode == "energy" else DEFAULT_FORCE_WINDOW
        lo, hi = _parse_window(args.window) if args.window else default
        kept = []
        dropped = 0
        for r in raw:
            x = float(r[ix])
            if not (lo - 1e-12 <= x <= hi + 1e-12):
                continue
            if ios is not None and r[ios] not in ("0", "", "False", "false"):
                dropped += 1
                continue
            t = (1.0 - rho) * (1.0 - x) / rho
            kept.append(CurveSample(t, float(r[iv])))
        kept.sort(key=lambda s: s.x)
        payload.update({
            "window": [lo, hi],
            "ratio": rho,
            "basis": basis,
            "theta1_ref": theta1_fpfa(-rho, basis),
            "excluded_one_sided": dropped,
        })
        if mode == "energy":
            fit = fit_energy_ansatz(kept)
        else:
            fit = fit_force_ansatz(kept, theta1_fpfa(-rho, basis))
        payload["theta1_total"] = theta1_from_fit(fit.value("theta1_bar"), -rho, basis)

    payload["fit"] = fit.as_dict()
    with open(args.out, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out, "fit", {k: v for k, v in payload.items() if k != "fit"}, t0)
    return 0


def _parse_window(text: str) -> tuple[float, float]:
    parts = str(text).split(":")
    if len(parts) != 2:
        raise UsageError(f"window must be lo:hi, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError as e:
        raise UsageError(f"window {text!r}: {e}") from None
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise UsageError(f"window must satisfy lo < hi, got {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavimir",
        description="Sphere-in-cavity Casimir solver sweeps and fits.",
    )
    parser.add_argument("--version", action="version", version=f"cavimir {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--config", default=None,
                       help="JSON file of flag defaults; explicit flags override")
        p.add_argument("--workers", default=1,
                       help="worker processes for sweep points (default 1)")

    p = sub.add_parser("energy", help="energy sweep over the displacement fraction")
    p.add_argument("--ratio", default=None, help="radius ratio r/R in (0, 1)")
    p.add_argument("--x-grid", default=None, dest="x_grid",
                   help="displacement fractions start:stop:step in [0, 1)")
    p.add_argument("--lmax", default="auto",
                   help="channel cutoff: positive integer, or auto "
                        "(gap-scaled ladder with exponential extrapolation)")
    p.add_argument("--nodes", default=48, help="starting quadrature nodes")
    p.add_argument("--basis", default="r", help="gap convention of the normalizer: r or R")
    common(p)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("force", help="force sweep from an energy ratio curve")
    p.add_argument("--in", dest="in_csv", default=None, help="energy CSV to differentiate")
    p.add_argument("--ratio", default=None, help="radius ratio r/R (read from CSV header if omitted)")
    p.add_argument("--x-grid", default=None, dest="x_grid", help="inline sweep grid (no --in)")
    p.add_argument("--lmax", default="auto")
    p.add_argument("--nodes", default=48)
    p.add_argument("--basis", default="r")
    common(p)
    p.set_defaults(func=cmd_force)

    p = sub.add_parser("cp", help="small-object expansion vs the exact energy")
    p.add_argument("--ratio", default=None, help="radius ratio r/R in (0, 1)")
    p.add_argument("--a-over-R", default=None, dest="a_over_R",
                   help="displacement grid start:stop:step in [0, 1 - r/R)")
    p.add_argument("--order", default=5, help="expansion order: 3 (dipole) or 5 (quadrupole)")
    p.add_argument("--compare-exact", default="false", dest="compare_exact",
                   help="true to also run the exact solver at each point")
    p.add_argument("--lmax", default=15, help="channel cutoff of the exact comparison")
    p.add_argument("--nodes", default=48)
    common(p)
    p.set_defaults(func=cmd_cp)

    p = sub.add_parser("pfa", help="extended proximity-force curves over the gap")
    p.add_argument("--y", default=None, help="signed radius ratio (negative = enclosed)")
    p.add_argument("--d-over-r", default=None, dest="d_over_r",
                   help="gap grid start:stop:step in units of the small radius")
    p.add_argument("--basis", default="r", help="gap convention: r or R")
    common(p)
    p.set_defaults(func=cmd_pfa)

    p = sub.add_parser("fit", help="close-separation or curvature-coefficient fits")
    p.add_argument("--mode", default=None, help="energy, force, or theta1")
    p.add_argument("--in", dest="in_csv", default=None, help="input CSV")
    p.add_argument("--window", default=None, help="abscissa window lo:hi")
    p.add_argument("--ratio", default=None, help="radius ratio for the x -> d/r map")
    p.add_argument("--basis", default="r")
    common(p)
    p.set_defaults(func=cmd_fit)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"config {args.config}: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {args.config} must hold a JSON object")
    # reparse with config values as defaults; explicit flags still win
    sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    subparser = sub_actions[0].choices[args.command]
    known = {a.dest for a in subparser._actions}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"config keys not recognized by '{args.command}': {sorted(unknown)}")
    subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = _apply_config(parser, list(argv))
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConvergenceError, NumericalRangeError) as e:
        print(f"convergence failure: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o failure: {e}", file=sys.stderr)
        return 4
