"""Stable delimited-text formats for portfolios, frontiers and reports.

Numeric cells are written with ``repr`` so values round-trip exactly and
repeated runs produce byte-identical files. Files are written to a
temporary sibling and atomically renamed, so a crash never leaves a
truncated artifact behind.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import os
from pathlib import Path

import numpy as np

from .backtest import MetricsReport, WealthCurve
from .cardinality import CardinalitySolution
from .errors import DataError
from .optimizer import Frontier, Portfolio

METRIC_COLUMNS = (
    "cumulative_return", "expected_return", "volatility",
    "max_drawdown", "sharpe", "var99",
)


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_portfolio(path, portfolio: Portfolio) -> None:
    buf = io.StringIO()
    buf.write(f"# label: {portfolio.label}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ticker", "weight"])
    for ticker, weight in zip(portfolio.tickers, portfolio.weights):
        writer.writerow([ticker, _fmt(weight)])
    _atomic_write(path, buf.getvalue())


def read_portfolio(path) -> Portfolio:
    label = ""
    tickers: list[str] = []
    weights: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().startswith("label:"):
                    label = line.split("label:", 1)[1].strip()
                continue
            cells = line.split(",")
            if cells[0] == "ticker":
                continue
            if len(cells) != 2:
                raise DataError(f"malformed portfolio row in {path}: {line}")
            tickers.append(cells[0])
            weights.append(float(cells[1]))
    if not tickers:
        raise DataError(f"portfolio file {path} has no holdings")
    return Portfolio(tuple(tickers), np.array(weights), label=label)


def write_frontier(path, frontier: Frontier) -> None:
    buf = io.StringIO()
    buf.write(f"# bounds: {_fmt(frontier.bounds.lower)} {_fmt(frontier.bounds.upper)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    tickers = frontier.points[0].portfolio.tickers if frontier.points else ()
    writer.writerow(["epsilon", "achieved_return", "variance", "gap", "truncated",
                     *tickers])
    for p in frontier.points:
        gap = "" if p.gap is None else _fmt(p.gap)
        writer.writerow([
            _fmt(p.epsilon), _fmt(p.achieved_return), _fmt(p.variance),
            gap, int(p.truncated),
            *(_fmt(w) for w in p.portfolio.weights),
        ])
    _atomic_write(path, buf.getvalue())


def read_frontier_rows(path) -> list[dict]:
    """Frontier rows as dicts with floats; weights under ``weights``."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or header[:5] != ["epsilon", "achieved_return", "variance",
                                        "gap", "truncated"]:
        raise DataError(f"{path} is not a frontier file")
    tickers = header[5:]
    for cells in reader:
        if not cells:
            continue
        rows.append({
            "epsilon": float(cells[0]),
            "achieved_return": float(cells[1]),
            "variance": float(cells[2]),
            "gap": float(cells[3]) if cells[3] else None,
            "truncated": bool(int(cells[4])),
            "tickers": tuple(tickers),
            "weights": np.array([float(c) for c in cells[5:]]),
        })
    return rows


def write_cc_solution(path, solution: CardinalitySolution) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ticker", "weight", "z"])
    for ticker, weight, z in zip(solution.portfolio.tickers,
                                 solution.portfolio.weights, solution.z):
        writer.writerow([ticker, _fmt(weight), z])
    eps = "" if solution.epsilon is None else _fmt(solution.epsilon)
    buf.write(f"# epsilon: {eps}\n")
    buf.write(f"# variance: {_fmt(solution.variance)}\n")
    buf.write(f"# gap: {_fmt(solution.optimality_gap)}\n")
    buf.write(f"# truncated: {int(solution.truncated)}\n")
    _atomic_write(path, buf.getvalue())


def write_curve(path, curve: WealthCurve) -> None:
    buf = io.StringIO()
    buf.write(f"# label: {curve.label}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["date", "value"])
    for date, value in zip(curve.dates, curve.values):
        writer.writerow([date.isoformat(), _fmt(value)])
    _atomic_write(path, buf.getvalue())


def read_curve(path) -> WealthCurve:
    label = ""
    dates: list[dt.date] = []
    values: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().startswith("label:"):
                    label = line.split("label:", 1)[1].strip()
                continue
            cells = line.split(",")
            if cells[0] == "date":
                continue
            dates.append(dt.date.fromisoformat(cells[0]))
            values.append(float(cells[1]))
    return WealthCurve(tuple(dates), np.array(values), label=label)


def write_metrics_table(path, rows: list[tuple[str, MetricsReport]]) -> None:
    """Strategy rows in the order given, metric columns in table order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strategy", *METRIC_COLUMNS])
    for label, report in rows:
        writer.writerow([label, *(_fmt(getattr(report, c)) for c in METRIC_COLUMNS)])
    _atomic_write(path, buf.getvalue())


def read_metrics_table(path) -> list[tuple[str, MetricsReport]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["strategy", *METRIC_COLUMNS]:
            raise DataError(f"{path} is not a metrics table")
        for cells in reader:
            if not cells:
                continue
            out.append((cells[0], MetricsReport(*(float(c) for c in cells[1:]))))
    return out


def format_metrics_pretty(rows: list[tuple[str, MetricsReport]]) -> str:
    """Two-decimal rendering for eyeballing against published tables."""
    header = ("strategy", "cum_ret%", "exp_ret%", "vol%", "max_dd%", "sharpe", "var99%")
    lines = ["{:<26} {:>9} {:>9} {:>7} {:>8} {:>7} {:>7}".format(*header)]
    for label, r in rows:
        lines.append(
            f"{label:<26} {r.cumulative_return:>9.2f} {r.expected_return:>9.2f} "
            f"{r.volatility:>7.2f} {r.max_drawdown:>8.2f} {r.sharpe:>7.2f} "
            f"{r.var99:>7.2f}"
        )
    return "\n".join(lines)
