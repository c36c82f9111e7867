"""Command-line front end: run, gen, export and validate.

Exit codes: 0 success, 1 when a campaign errored, 2 for invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__, jsonio
from .cache import ResultCache
from .errors import FraccapError, ValidationError
from .export import FORMATS, campaign_csvs, export_report
from .generators import generate_space
from .scenario import build_context, scenario_hash, validate
from .spaceio import save_space

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2
DEFAULT_OUT = "fraccap_out"


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"{what}: cannot read {path} ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what}: not valid JSON ({exc})") from exc


def prepare_scenario(path, workers=None, cache_dir=None):
    """Parse, validate and dry-run a scenario. Returns (raw, validated, context, plan)."""
    from .campaigns import OPS
    raw = _read_json(path, "scenario")
    sc = validate(raw)
    cache_dir = cache_dir if cache_dir is not None else sc["cache"]
    cache = ResultCache(cache_dir)
    ctx = build_context(sc, base_dir=str(Path(path).parent), workers=workers, cache=cache)
    plan = []
    for i, c in enumerate(sc["campaigns"]):
        thunk = OPS[c["op"]].prepare(ctx, c["params"], f"scenario.campaigns[{i}].params")
        plan.append((c, thunk))
    return raw, sc, ctx, plan


def run_scenario(path, workers=None, cache_dir=None, out=None, log=None):
    """Execute every campaign in order and write report.json, CSVs and timings.json.

    Returns (report, exit_code). Validation errors propagate as ValidationError.
    """
    raw, sc, ctx, plan = prepare_scenario(path, workers, cache_dir)
    out_dir = Path(out or sc["output"] or DEFAULT_OUT)
    out_dir.mkdir(parents=True, exist_ok=True)
    campaigns, timings = [], {}
    failed = False
    t_all = time.perf_counter()
    for c, thunk in plan:
        t0 = time.perf_counter()
        entry = {"name": c["name"], "op": c["op"]}
        try:
            table = thunk()
            entry.update(status="ok", summary=table.summary, columns=table.columns,
                         rows=table.rows)
        except FraccapError as exc:
            failed = True
            entry.update(status="error", error=f"{type(exc).__name__}: {exc}")
        timings[c["name"]] = time.perf_counter() - t0
        if log:
            log(f"{c['name']} ({c['op']}): {entry['status']} in {timings[c['name']]:.2f} s")
        campaigns.append(entry)
    report = {"tool": "fraccap", "version": __version__, "scenario_sha256": scenario_hash(raw),
              "seed": sc["seed"], "space": {"n": ctx.space.n, "digest": ctx.space.digest()},
              "campaigns": campaigns}
    # the report goes through the JSON encoding once so in-memory and file values agree
    report = jsonio.loads(jsonio.dumps(report, indent=None))
    jsonio.dump(report, out_dir / "report.json")
    campaign_csvs(report, out_dir)
    jsonio.dump({"campaigns": timings, "total": time.perf_counter() - t_all,
                 "cache_hits": ctx.cache.hits, "cache_misses": ctx.cache.misses},
                out_dir / "timings.json")
    return report, EXIT_FAILED if failed else EXIT_OK


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def cmd_run(args):
    try:
        report, code = run_scenario(args.scenario, args.workers, args.cache, args.out,
                                    log=lambda m: print(m, file=sys.stderr))
    except ValidationError as exc:
        _err(f"invalid scenario: {exc}")
        return EXIT_INVALID
    n_err = sum(c["status"] != "ok" for c in report["campaigns"])
    print(f"{len(report['campaigns'])} campaign(s), {n_err} error(s)")
    return code


def cmd_validate(args):
    try:
        _, sc, _, plan = prepare_scenario(args.scenario)
    except ValidationError as exc:
        _err(f"invalid scenario: {exc}")
        return EXIT_INVALID
    print(f"ok: {len(plan)} campaign(s)")
    return EXIT_OK


def cmd_gen(args):
    params = {k: getattr(args, k) for k in ("dim", "m", "n", "depth", "ratio")
              if getattr(args, k) is not None}
    try:
        space, sets = generate_space(args.kind, **params)
    except (FraccapError, KeyError, TypeError) as exc:
        _err(f"gen {args.kind}: {exc}")
        return EXIT_INVALID
    save_space(space, {k: v for k, v in sets.items() if k != "ALL"}, args.out)
    print(f"wrote {args.out} (n={space.n})")
    return EXIT_OK


def cmd_export(args):
    try:
        report = _read_json(args.report, "report")
        if not isinstance(report, dict) or not isinstance(report.get("campaigns"), list):
            raise ValidationError("report: missing 'campaigns' list")
        out = args.out or str(Path(args.report).parent / f"export_{args.format}")
        paths = export_report(report, args.format, out)
    except FraccapError as exc:
        _err(str(exc))
        return EXIT_INVALID
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="fraccap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fraccap {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="execute a scenario")
    r.add_argument("scenario")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--cache", default=None, help="cache directory (default: $FRACCAP_CACHE)")
    r.add_argument("--out", default=None, help=f"output directory (default: {DEFAULT_OUT})")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("scenario")
    v.set_defaults(fn=cmd_validate)

    g = sub.add_parser("gen", help="write a benchmark space file")
    g.add_argument("kind", choices=["grid", "path", "cantor_line"])
    g.add_argument("--dim", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--depth", type=int)
    g.add_argument("--ratio", type=float)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    e = sub.add_parser("export", help="convert a report")
    e.add_argument("report")
    e.add_argument("--format", required=True, choices=FORMATS)
    e.add_argument("--out", default=None)
    e.set_defaults(fn=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
