"""Command-line harness.

Subcommands::

    morphoseek symmetries   check the hand-derived symmetry catalogue
    morphoseek discover     search for new relations, write relation files
    morphoseek verify       re-check relation files or replay a test bundle
    morphoseek compare      evaluate relations under two kernels side by side
    morphoseek emit-tests   freeze relations and expected verdicts into a bundle

Exit codes are shared by all commands: 0 success / everything passed,
1 relation violations or nothing found, 2 usage, configuration or file errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .cost import ValidationReport, validate
from .exceptions import ConfigurationError, FormatError, MorphoseekError
from .kernel import DESK_GRID, DISCOVERY_GRID, GridDims, get_kernel
from .relations import AffineRelation, deserialize, from_document, identity, known_symmetries, serialize, to_document
from .search import discover

log = logging.getLogger("morphoseek")

BUNDLE_SCHEMA = "morphoseek-bundle/1"
REPORT_SCHEMA = "morphoseek-report/1"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(MorphoseekError):
    pass


# -- reports --------------------------------------------------------------------

def evaluate(rel: AffineRelation, kernel: str, config: RunConfig, seed=None, holdout=None,
             tolerance=None, distinct=None, ranges=None) -> ValidationReport:
    """Validate ``rel`` against identity on inputs drawn from ``default_rng(seed)``.

    Every relation and kernel sees the same inputs for a given seed.
    """
    seed = config.seed if seed is None else seed
    return validate(
        rel, [identity(rel.dims)], get_kernel(kernel), np.random.default_rng(seed),
        n_holdout=config.holdout if holdout is None else holdout,
        tol_validate=config.tolerance if tolerance is None else tolerance,
        delta_distinct=config.distinct if distinct is None else distinct,
        ranges=config.ranges if ranges is None else ranges,
    )


def make_row(rel_id: str, kernel: str, report: ValidationReport) -> dict:
    return {
        "id": rel_id,
        "kernel": kernel,
        "max_rel_err": report.max_rel_err,
        "mean_rel_err": report.mean_rel_err,
        "min_prior_distance": report.min_prior_distance,
        "verdict": "PASS" if report.passed else "FAIL",
    }


def run_metadata(config: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "config_hash": config.hash(),
        "seed": config.seed,
        # the output location is not part of the run, so two runs into
        # different directories write identical files
        "config": {k: v for k, v in config.as_dict().items() if k != "out"},
        "versions": {"morphoseek": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }


def build_report(rows, config: RunConfig, command: str, **extra) -> dict:
    rows = sorted(rows, key=lambda r: (r["id"], r["kernel"]))
    return {"schema": REPORT_SCHEMA, "rows": rows, **extra, "meta": run_metadata(config, command)}


def _number(value) -> str:
    # repr gives the same shortest round-trip digits json uses
    return "inf" if value == float("inf") else repr(float(value))


def format_table(rows) -> str:
    header = ("relation", "kernel", "max_rel_err", "mean_rel_err", "min_prior_distance", "verdict")
    body = [(r["id"], r["kernel"], _number(r["max_rel_err"]), _number(r["mean_rel_err"]),
             _number(r["min_prior_distance"]), r["verdict"]) for r in rows]
    widths = [max(len(str(line[k])) for line in [header, *body]) for k in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip() for line in [header, *body]]
    return "\n".join(lines)


def emit(report: dict, args, text_extra: str = ""):
    if args.json:
        print(json.dumps(report, indent=2, default=_json_default))
    else:
        print(format_table(report["rows"]))
        if text_extra:
            print(text_extra)
        meta = report["meta"]
        print(f"seed={meta['seed']} config_hash={meta['config_hash']}")
    if getattr(args, "report", None):
        _write(Path(args.report), json.dumps(report, indent=2, default=_json_default) + "\n")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


# -- relation inputs ------------------------------------------------------------

def load_relation_file(path) -> AffineRelation:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"{path}: cannot read: {exc.strerror or exc}") from None
    try:
        return deserialize(data)
    except (FormatError, MorphoseekError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def relation_id(rel: AffineRelation, path=None) -> str:
    return rel.name or (Path(path).stem if path else "relation")


def gather_relations(args, config: RunConfig) -> list[tuple[str, AffineRelation]]:
    """Relations from files (and the catalogue with ``--catalogue``), checked against the grid."""
    items = []
    for path in getattr(args, "relations", None) or []:
        rel = load_relation_file(path)
        if config.grid is not None and rel.dims != config.dims(DESK_GRID):
            raise UsageError(f"{path}: relation grid {rel.dims} does not match configured grid {config.grid}")
        items.append((relation_id(rel, path), rel))
    if getattr(args, "catalogue", False):
        dims = config.dims(items[0][1].dims if items else DESK_GRID)
        items += list(known_symmetries(dims, config.gf_factor).items())
    ids = [i for i, _ in items]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise UsageError(f"duplicate relation ids {dupes}; give the files distinct meta.name values")
    return items


# -- commands -------------------------------------------------------------------

def cmd_symmetries(args, config: RunConfig) -> int:
    dims = config.dims(DESK_GRID)
    rows = [make_row(name, config.kernel, evaluate(rel, config.kernel, config))
            for name, rel in known_symmetries(dims, config.gf_factor).items()]
    report = build_report(rows, config, "symmetries", grid=str(dims))
    emit(report, args)
    return EXIT_OK if all(r["verdict"] == "PASS" for r in rows) else EXIT_FAIL


def cmd_discover(args, config: RunConfig) -> int:
    dims = config.dims(DISCOVERY_GRID)
    search = config.search_config(dims)
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(13, "permission denied")
    except OSError as exc:
        raise UsageError(f"cannot write to output directory {out}: {exc.strerror or exc}") from None
    log.info("discover: kernel=%s grid=%s space=%s seed=%d", config.kernel, dims, search.space, search.seed)
    result = discover(get_kernel(config.kernel), search)
    log.info("discover: %d relation(s) after %d descent(s), %d evaluations, %.1fs",
             len(result.relations), result.stats["descents"], result.stats["evaluations"],
             result.stats["wall_time"])
    rows = []
    for k, rel in enumerate(result.relations, start=1):
        _write(out / f"relation-{k}.json", serialize(rel).decode("utf-8"))
        entry = next(t for t in result.traces if t["descent"] == rel.meta["descent"])
        report = entry["validation"]
        rows.append({"id": rel.name, "kernel": config.kernel, "max_rel_err": report["max_rel_err"],
                     "mean_rel_err": report["mean_rel_err"], "min_prior_distance": report["min_prior_distance"],
                     "verdict": "PASS"})
    doc = result.to_document()
    doc["meta"] = run_metadata(config, "discover")
    _write(out / "result.json", json.dumps(doc, indent=1) + "\n")
    report = build_report(rows, config, "discover", grid=str(dims), stats=doc["stats"])
    emit(report, args, f"{len(rows)} relation(s) written to {out}")
    return EXIT_OK if rows else EXIT_FAIL


def cmd_verify(args, config: RunConfig) -> int:
    if args.bundle:
        if args.relations:
            raise UsageError("give either relation files or --bundle, not both")
        return replay_bundle(args, config)
    items = gather_relations(args, config)
    if not items:
        raise UsageError("verify needs relation files or --bundle")
    rows = [make_row(rid, config.kernel, evaluate(rel, config.kernel, config)) for rid, rel in items]
    emit(build_report(rows, config, "verify"), args)
    return EXIT_OK if all(r["verdict"] == "PASS" for r in rows) else EXIT_FAIL


def cmd_compare(args, config: RunConfig) -> int:
    items = gather_relations(args, config)
    kernels = [config.kernel] if config.kernel == config.against else [config.kernel, config.against]
    rows, verdicts = [], {}
    for rid, rel in items:
        for kernel in kernels:
            row = make_row(rid, kernel, evaluate(rel, kernel, config))
            rows.append(row)
            verdicts.setdefault(rid, {})[kernel] = row["verdict"]
    discriminating = sorted(rid for rid, v in verdicts.items() if len(set(v.values())) > 1)
    report = build_report(rows, config, "compare", kernels=kernels, discriminating=discriminating)
    emit(report, args, "discriminating: " + (", ".join(discriminating) if discriminating else "(none)"))
    return EXIT_OK


def cmd_emit_tests(args, config: RunConfig) -> int:
    items = gather_relations(args, config)
    if not items:
        raise UsageError("emit-tests needs relation files or --catalogue")
    entries = []
    for rid, rel in sorted(items, key=lambda x: x[0]):
        expected = {k: make_row(rid, k, evaluate(rel, k, config))["verdict"] for k in ("cyclic", "noncyclic")}
        if expected[config.kernel] != "PASS":
            raise UsageError(f"relation {rid!r} does not validate under the {config.kernel} kernel; refusing to emit")
        entries.append({"id": rid, "relation": to_document(rel), "expected": expected})
    bundle = {
        "schema": BUNDLE_SCHEMA,
        "kernel": config.kernel,
        "seed": config.seed,
        "holdout": config.holdout,
        "tolerance": config.tolerance,
        "distinct": config.distinct,
        "ranges": {"ssh_amplitude": config.ssh_amplitude, "spacing": [config.spacing_min, config.spacing_max],
                   "G": [config.G_min, config.G_max], "F_magnitude": [config.F_min, config.F_max]},
        "config": {k: v for k, v in config.as_dict().items() if k != "out"},
        "config_hash": config.hash(),
        "relations": entries,
    }
    path = Path(config.out)
    if path.is_dir() or not path.suffix:
        path = path / "bundle.json"
    _write(path, json.dumps(bundle, indent=1) + "\n")
    print(f"wrote {len(entries)} relation(s) to {path}")
    return EXIT_OK


def _bundle_field(bundle, key, kind, path):
    value = bundle.get(key)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise UsageError(f"{path}: bundle field {key!r} is missing or malformed")
    return value


def replay_bundle(args, config: RunConfig) -> int:
    """Re-run a bundle with its own seed, inputs and tolerances.

    ``--kernel`` selects the implementation under test; expectations always
    come from the kernel the bundle was built against.
    """
    from .kernel import SamplingRanges

    path = args.bundle
    try:
        bundle = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"{path}: cannot read: {exc.strerror or exc}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(bundle, dict) or bundle.get("schema") != BUNDLE_SCHEMA:
        raise UsageError(f"{path}: not a {BUNDLE_SCHEMA} document")
    reference = _bundle_field(bundle, "kernel", str, path)
    seed = _bundle_field(bundle, "seed", int, path)
    holdout = _bundle_field(bundle, "holdout", int, path)
    tolerance = float(_bundle_field(bundle, "tolerance", (int, float), path))
    distinct = bundle.get("distinct")
    try:
        r = _bundle_field(bundle, "ranges", dict, path)
        ranges = SamplingRanges(r["ssh_amplitude"], tuple(r["spacing"]), tuple(r["G"]), tuple(r["F_magnitude"]))
        get_kernel(reference)
    except (KeyError, TypeError, MorphoseekError) as exc:
        raise UsageError(f"{path}: bad bundle: {exc}") from None
    kernel = args.kernel or reference
    rows, mismatches = [], []
    for k, entry in enumerate(_bundle_field(bundle, "relations", list, path)):
        try:
            rel = from_document(entry["relation"])
            rid, expected = entry["id"], entry["expected"][reference]
        except (KeyError, TypeError, MorphoseekError) as exc:
            raise UsageError(f"{path}: relations[{k}]: {exc}") from None
        row = make_row(rid, kernel, evaluate(rel, kernel, config, seed=seed, holdout=holdout,
                                             tolerance=tolerance, distinct=distinct, ranges=ranges))
        row["expected"] = expected
        rows.append(row)
        if row["verdict"] != expected:
            mismatches.append(rid)
    report = build_report(rows, config, "verify --bundle", bundle=str(path), bundle_kernel=reference,
                          mismatches=sorted(mismatches))
    report["meta"]["seed"] = seed
    text = ("expectation mismatches: " + ", ".join(sorted(mismatches))) if mismatches else "all expectations met"
    emit(report, args, text)
    return EXIT_FAIL if mismatches else EXIT_OK


# -- argument parsing -----------------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--kernel", choices=("cyclic", "noncyclic"))
    common.add_argument("--grid", help="grid as TxNYxNX, e.g. 3x16x16")
    common.add_argument("--out", help="output directory (bundle path for emit-tests)")
    common.add_argument("--json", action="store_true", help="print the report as JSON")
    common.add_argument("--report", help="also write the JSON report to this path")
    common.add_argument("--tolerance", type=float, help="max relative error for PASS")
    common.add_argument("--holdout", type=int, help="number of random inputs per check")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="morphoseek", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("symmetries", parents=[common], help="check the symmetry catalogue")

    p = sub.add_parser("discover", parents=[common], help="search for relations")
    p.add_argument("--space", choices=("dense", "diagonal", "signed-perm-scale"))
    p.add_argument("--max-relations", type=int)
    p.add_argument("--max-restarts", type=int)
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--max-evaluations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--p-accept", type=float)

    p = sub.add_parser("verify", parents=[common], help="re-check relation files or replay a bundle")
    p.add_argument("relations", nargs="*")
    p.add_argument("--bundle")

    p = sub.add_parser("compare", parents=[common], help="compare two kernels on the same relations")
    p.add_argument("relations", nargs="*")
    p.add_argument("--catalogue", action="store_true", help="include the symmetry catalogue")
    p.add_argument("--against", choices=("cyclic", "noncyclic"), help="second kernel (default noncyclic)")

    p = sub.add_parser("emit-tests", parents=[common], help="write a regression test bundle")
    p.add_argument("relations", nargs="*")
    p.add_argument("--catalogue", action="store_true", help="include the symmetry catalogue")
    return parser


COMMANDS = {
    "symmetries": cmd_symmetries,
    "discover": cmd_discover,
    "verify": cmd_verify,
    "compare": cmd_compare,
    "emit-tests": cmd_emit_tests,
}

_OVERRIDES = ("seed", "kernel", "grid", "out", "tolerance", "holdout", "space", "max_relations", "max_restarts",
              "max_iterations", "max_evaluations", "batch_size", "p_accept", "against")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
    if args.command == "verify" and args.bundle:
        # the bundle carries its own kernel expectations; --kernel picks the implementation
        overrides.pop("kernel")
    try:
        config = load_config(args.config, overrides)
        return COMMANDS[args.command](args, config)
    except (MorphoseekError, ConfigurationError) as exc:
        print(f"morphoseek {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
