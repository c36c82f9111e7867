"""Report export: per-campaign CSV, normalized JSON and plot-ready tables."""

from __future__ import annotations

import csv
from pathlib import Path

from . import jsonio
from .errors import PreconditionError

FORMATS = ("csv", "json", "plotdata")


def cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return jsonio.fmt_float(v)
    if isinstance(v, (list, dict)):
        return jsonio.dumps(v, indent=None)
    return str(v)


def write_table(path, columns, rows, delimiter=","):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([cell(v) for v in row])


def campaign_csvs(report, out_dir) -> list[Path]:
    """One CSV per successful campaign plus an index of all campaigns."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    index = []
    for c in report["campaigns"]:
        index.append([c["name"], c["op"], c["status"], len(c.get("rows", [])), c.get("error")])
        if c["status"] != "ok":
            continue
        path = out_dir / f"{c['name']}.csv"
        write_table(path, c["columns"], c["rows"])
        written.append(path)
    path = out_dir / "campaigns.csv"
    write_table(path, ["name", "op", "status", "rows", "error"], index)
    return [path] + written


def plot_rows(campaign):
    """(columns, rows) of plot data for a campaign, or None when it has no figure."""
    from .campaigns import OPS
    spec = OPS[campaign["op"]].plot if campaign["op"] in OPS else None
    if spec is None or campaign["status"] != "ok":
        return None
    cols = campaign["columns"]
    if spec[0] == "grid":
        keep = [cols.index(c) for c in spec[1:]]
        return list(spec[1:]), [[row[i] for i in keep] for row in campaign["rows"]]
    x, y, series = spec
    ix, iy = cols.index(x), cols.index(y)
    iz = cols.index(series) if series is not None else None
    rows = [[row[ix], row[iy], "" if iz is None else f"{series}={cell(row[iz])}"]
            for row in campaign["rows"]]
    return ["x", "y", "series"], rows


def plotdata(report, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written, index = [], []
    for c in report["campaigns"]:
        data = plot_rows(c)
        if data is None:
            continue
        path = out_dir / f"{c['name']}.tsv"
        write_table(path, data[0], data[1], delimiter="\t")
        written.append(path)
        index.append([c["name"], c["op"], path.name, "grid" if data[0][0] != "x" else "xy"])
    path = out_dir / "plotdata.tsv"
    write_table(path, ["campaign", "op", "file", "layout"], index, delimiter="\t")
    return [path] + written


def export_report(report, fmt, out_dir) -> list[Path]:
    if fmt == "csv":
        return campaign_csvs(report, out_dir)
    if fmt == "json":
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "report.json"
        jsonio.dump(report, path)
        return [path]
    if fmt == "plotdata":
        return plotdata(report, out_dir)
    raise PreconditionError(f"unknown export format {fmt!r}; expected one of {list(FORMATS)}")
