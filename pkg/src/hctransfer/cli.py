"""Command-line entry point: ``hctransfer <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .field import project_analytic, read_field, test_function, write_field
from .harness import (
    StudyConfig,
    export_viz,
    run_error_study,
    run_mass_study,
    run_quadrature_study,
)
from .hct import build_surrogate
from .locate import Locator
from .mesh import (
    Domain,
    MeshError,
    generate_structured,
    generate_unstructured,
    read_mesh,
    structured_grid,
    unstructured_grid,
    write_mesh,
)
from .metrics import l2_error, mass_variation
from .quadrature import QuadSpec, QuadratureError
from .transfer import TransferConfig, TransferError, transfer

log = logging.getLogger("hctransfer")


def _grids(text: str) -> tuple[int, ...]:
    """``"2-6"`` or ``"3,5,6"``."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out += range(int(a), int(b) + 1)
        elif part:
            out.append(int(part))
    return tuple(out)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in str(text).split(",") if p.strip())


def _words(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in str(text).split(",") if p.strip())


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment.  Keys use flag names."""
    cfg = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def _domain(args, fallback: Domain | None = None) -> Domain:
    if getattr(args, "domain", None):
        return Domain.parse(args.domain)
    if getattr(args, "function", None):
        return test_function(args.function).domain
    if fallback is not None:
        return fallback
    raise SystemExit("a --domain or --function is required")


# --------------------------------------------------------------------------- commands


def cmd_generate_mesh(args) -> int:
    domain = _domain(args)
    if args.kind == "structured":
        mesh = structured_grid(args.grid, domain) if args.grid else generate_structured(domain, args.n)
    else:
        if args.grid:
            mesh = unstructured_grid(args.grid, domain, args.seed)
        else:
            mesh = generate_unstructured(domain, args.target_h, args.seed)
    write_mesh(mesh, args.out)
    print(f"{args.kind} mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, h={mesh.h:.6f}")
    return 0


def cmd_project(args) -> int:
    mesh = read_mesh(args.mesh)
    field = project_analytic(mesh, args.k, test_function(args.function), QuadSpec.parse(args.quad))
    write_field(field, args.out)
    print(f"projected {args.function} onto {mesh.n_triangles} elements with k={args.k}")
    return 0


def cmd_transfer(args) -> int:
    src_mesh = read_mesh(args.source_mesh)
    tgt_mesh = read_mesh(args.target_mesh)
    if args.source_field:
        source = read_field(args.source_field, src_mesh)
    elif args.function:
        source = project_analytic(src_mesh, args.k, test_function(args.function))
    else:
        raise SystemExit("give --function or --source-field")
    cfg = TransferConfig(args.method, args.k, QuadSpec.parse(args.quad))
    locator = Locator(src_mesh)
    out = transfer(source, tgt_mesh, cfg, locator)
    if args.out_field:
        write_field(out, args.out_field)
    report = {
        "method": cfg.method.value,
        "k": cfg.degree,
        "quad": str(cfg.quad),
        "elements_src": src_mesh.n_triangles,
        "elements_tgt": tgt_mesh.n_triangles,
        "mv": mass_variation(source, out),
        "l2": l2_error(source, out, source_locator=locator),
    }
    text = json.dumps(report, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return 0


def _study_config(args) -> StudyConfig:
    return StudyConfig(
        function=args.function,
        grids=_grids(args.grids),
        degrees=_ints(args.degrees),
        methods=_words(args.methods) if args.methods else None,
        quads=tuple(QuadSpec.parse(q) for q in _words(args.quads)),
        seed=args.seed,
        csv_path=Path(args.out) if args.out else None,
        record_time=args.record_time,
    )


def _run_study(runner, args) -> int:
    report = runner(_study_config(args))
    if not args.out:
        sys.stdout.write(report.csv)
    return 0


def cmd_export_viz(args) -> int:
    mesh = read_mesh(args.mesh)
    if args.field:
        field = read_field(args.field, mesh)
    elif args.function:
        field = project_analytic(mesh, args.k, test_function(args.function))
    else:
        raise SystemExit("give --field or --function")
    target = build_surrogate(field) if args.hct else field
    viz = export_viz(target, args.out)
    print(f"wrote {len(viz.cells)} cells, {len(viz.points)} points to {args.out}")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hctransfer", description=__doc__)
    p.add_argument("--config", help="key=value file supplying defaults for the subcommand flags")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-mesh", help="write a structured or unstructured mesh")
    g.add_argument("--kind", choices=("structured", "unstructured"), default="structured")
    g.add_argument("--grid", type=int, help="grid sequence number 1..7")
    g.add_argument("--n", type=int, default=8, help="cells per side (structured, no --grid)")
    g.add_argument("--target-h", type=float, default=0.5, help="target size (unstructured, no --grid)")
    g.add_argument("--domain", help="x0,x1,y0,y1")
    g.add_argument("--function", help="take the domain from a test function")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(run=cmd_generate_mesh)

    pr = sub.add_parser("project", help="L2-project a test function onto a mesh")
    pr.add_argument("--mesh", required=True)
    pr.add_argument("--function", required=True)
    pr.add_argument("--k", type=int, default=1)
    pr.add_argument("--quad", default="15x1")
    pr.add_argument("--out", required=True)
    pr.set_defaults(run=cmd_project)

    t = sub.add_parser("transfer", help="transfer a field between meshes")
    t.add_argument("--method", default="TRANS2")
    t.add_argument("--k", type=int, default=1)
    t.add_argument("--quad", default="15x1")
    t.add_argument("--source-mesh", required=True)
    t.add_argument("--target-mesh", required=True)
    t.add_argument("--function", help="project this test function onto the source mesh")
    t.add_argument("--source-field", help="read the source field instead")
    t.add_argument("--out-field")
    t.add_argument("--report", help="write the JSON report here as well")
    t.set_defaults(run=cmd_transfer)

    for name, runner, help_text, defaults in (
        ("study-quadrature", run_quadrature_study, "TRANS1 mass variation per quadrature rule",
         {"grids": "1-6", "quads": "15x0,15x1,3x0,3x1,3x2,3x3,6x1,6x2"}),
        ("study-mass", run_mass_study, "mass variation per method", {"grids": "1-6", "quads": "15x1"}),
        ("study-error", run_error_study, "L2 error and orders per method", {"grids": "2-6", "quads": "15x1"}),
    ):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--function", default="u1")
        s.add_argument("--grids", default=defaults["grids"], help="e.g. 2-6 or 3,5")
        s.add_argument("--degrees", default="1,2")
        s.add_argument("--methods", help="comma list; default is the standard set per degree")
        s.add_argument("--quads", default=defaults["quads"])
        s.add_argument("--seed", type=int, default=1)
        s.add_argument("--out", help="CSV path (stdout if omitted)")
        s.add_argument("--record-time", action="store_true", help="fill the seconds column")
        s.set_defaults(run=lambda a, r=runner: _run_study(r, a))

    v = sub.add_parser("export-viz", help="legacy VTK of a 4x subdivided field")
    v.add_argument("--mesh", required=True)
    v.add_argument("--field")
    v.add_argument("--function")
    v.add_argument("--k", type=int, default=1)
    v.add_argument("--hct", action="store_true", help="export the HCT surrogate instead of the DG field")
    v.add_argument("--out", required=True)
    v.set_defaults(run=cmd_export_viz)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((w for w in rest if w in subparsers.choices), None)
    if command is None:
        return parser.parse_args(argv)
    subparser = subparsers.choices[command]
    actions = {a.dest: a for a in subparser._actions}
    values = read_config(known.config)
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise SystemExit(f"{known.config}: unknown keys {unknown}")
    defaults = {}
    for key, raw in values.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(raw) if action.type else raw
        action.required = False
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.run(args)
    except (MeshError, QuadratureError, TransferError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
