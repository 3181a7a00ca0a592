"""Command-line pipeline: universe, frontier, cardinality, backtest, report.

Each subcommand reads the declarative YAML config (plus flag overrides),
consumes the previous stage's files from the output directory, and writes
delimited text artifacts. A fixed config and fixed inputs produce a
byte-identical output tree on every run.
"""
from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import backtest as bt
from . import cardinality as card
from . import config as cfg
from . import market_data as md
from . import optimizer as opt
from . import serialize as ser
from . import universe as uni
from .errors import ConfigError, DataError, GptfolioError

logger = logging.getLogger(__name__)

STRATEGY_ROW_ORDER = (
    opt.LABEL_GPT, opt.LABEL_EQUAL, opt.LABEL_MIN_VAR, opt.LABEL_MAX_RET,
    opt.LABEL_MAX_SHARPE, card.LABEL_MAX_SHARPE_CARD, card.LABEL_MIN_VAR_CARD,
    card.LABEL_MAX_RET_CARD,
)
BENCHMARK_ROW_ORDER = (*bt.INDEX_LABELS, bt.FUNDS_LABEL)
STRATEGY_LABELS = STRATEGY_ROW_ORDER + BENCHMARK_ROW_ORDER

SLUGS = {
    opt.LABEL_GPT: "gpt_weighted",
    opt.LABEL_EQUAL: "equally_weighted",
    opt.LABEL_MIN_VAR: "min_var",
    opt.LABEL_MAX_RET: "max_ret",
    opt.LABEL_MAX_SHARPE: "max_sharpe",
    card.LABEL_MIN_VAR_CARD: "min_var_card",
    card.LABEL_MAX_RET_CARD: "max_ret_card",
    card.LABEL_MAX_SHARPE_CARD: "max_sharpe_card",
    "S&P 500": "sp500",
    "Dow Jones": "dow_jones",
    "NASDAQ": "nasdaq",
    bt.FUNDS_LABEL: "popular_investment_funds",
}

# published reference for the period-1 S&P 500 row; emitted for comparison
# only, never asserted (results track whatever price series the user feeds in)
SP500_PERIOD1_REFERENCE = 101.29


def _universe_path(config, size: int) -> Path:
    return config.out / f"universe_{size}.txt"


def _portfolio_path(config, label: str, size: int) -> Path:
    return config.out / f"{SLUGS[label]}_{size}.csv"


# --------------------------------------------------------------------------
# pipeline stages


def run_universe(config: cfg.RunConfig) -> dict[int, list[str]]:
    """Vote one universe per configured size; write ticker lists and the
    model-weighted portfolios when weight transcripts exist."""
    config.out.mkdir(parents=True, exist_ok=True)
    constituents = uni.load_constituents(config.constituents)
    voted: dict[int, list[str]] = {}
    for size in config.sizes:
        transcript = _universe_transcript(config, size)
        tally = uni.tally_responses(transcript, constituents, config.remap)
        top = uni.select_top_k(tally, size)
        voted[size] = top
        path = _universe_path(config, size)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text("\n".join(top) + "\n", encoding="utf-8")
        tmp.replace(path)
        logger.info("voted %d-stock universe -> %s", size, path)

        weighted = _weighted_universe(config, size, top)
        if weighted is not None:
            portfolio = opt.Portfolio(weighted.tickers, weighted.weights,
                                      label=opt.LABEL_GPT)
            ser.write_portfolio(_portfolio_path(config, opt.LABEL_GPT, size), portfolio)
    return voted


def _universe_transcript(config, size: int) -> uni.ChatTranscript:
    if config.llm_mode == "replay":
        if size not in config.universe_transcripts:
            raise ConfigError(f"no universe transcript configured for size {size}")
        return uni.load_transcript(config.universe_transcripts[size])
    client = uni.LiveChat(config.chat)
    try:
        entries = []
        for call in range(1, uni.DEFAULT_NUM_CALLS + 1):
            fund = client.chat(
                uni.render_prompt(uni.get_template("universe_request"), size),
                prompt_id="universe_request")
            tickers = client.chat(
                uni.render_prompt(uni.get_template("ticker_extract"), fund),
                prompt_id="ticker_extract")
            entries.append(uni.TranscriptEntry(call, "ticker_extract", fund, tickers))
        transcript = uni.ChatTranscript(tuple(entries), mode="live")
        uni.save_transcript(config.out / f"universe_{size}_recorded.jsonl", transcript)
        return transcript
    finally:
        client.close()


def _weighted_universe(config, size: int, top: list[str]):
    if config.llm_mode == "replay":
        path = config.weight_transcripts.get(size)
        if path is None or not Path(path).exists():
            logger.warning("no weight transcript for size %d; skipping weighted portfolio", size)
            return None
        transcript = uni.load_transcript(path)
        extracts = [e for e in transcript.entries if e.prompt_id == "weight_extract"]
        response = (extracts[-1] if extracts else transcript.entries[-1]).response
        return uni.parse_gpt_weights(response, top)
    client = uni.LiveChat(config.chat)
    try:
        prose = client.chat(
            uni.render_prompt(uni.get_template("weight_request"), " ".join(top)),
            prompt_id="weight_request")
        pairs = client.chat(
            uni.render_prompt(uni.get_template("weight_extract"), prose),
            prompt_id="weight_extract")
        uni.save_transcript(config.out / f"weights_{size}_recorded.jsonl",
                            client.transcript())
        return uni.parse_gpt_weights(pairs, top)
    finally:
        client.close()


def _weekly_returns(prices_path) -> md.ReturnPanel:
    panel = md.load_prices(prices_path)
    weekly = md.resample_weekly(panel)
    return md.compute_returns(weekly)


def run_frontier(config: cfg.RunConfig, size: int,
                 universe_file: Path | None = None) -> None:
    """Sweep the in-sample frontier for one universe and write the frontier
    plus the four selected portfolios."""
    config.out.mkdir(parents=True, exist_ok=True)
    path = universe_file or _universe_path(config, size)
    if not Path(path).exists():
        raise ConfigError(f"universe file {path} not found; run the universe stage first")
    universe = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    returns = _weekly_returns(config.prices)
    in_sample = md.slice_period(returns, config.in_sample)
    moments = md.estimate_moments(in_sample).restrict(universe)
    bounds = config.bounds_for(len(universe))

    frontier = opt.compute_frontier(moments, bounds, config.points)
    ser.write_frontier(config.out / f"frontier_{size}.csv", frontier)
    ser.write_portfolio(_portfolio_path(config, opt.LABEL_MIN_VAR, size),
                        opt.min_variance(moments, bounds))
    ser.write_portfolio(_portfolio_path(config, opt.LABEL_MAX_RET, size),
                        opt.max_return(moments, bounds))
    ser.write_portfolio(_portfolio_path(config, opt.LABEL_MAX_SHARPE, size),
                        opt.max_sharpe(frontier))
    ser.write_portfolio(_portfolio_path(config, opt.LABEL_EQUAL, size),
                        opt.equal_weight(universe))
    logger.info("frontier for %d-stock universe written (%d points)", size, len(frontier))


def run_cardinality(config: cfg.RunConfig, k: int) -> None:
    """Exact-K frontier over every complete constituent series in the price
    file, plus the three selected card portfolios with their gaps."""
    config.out.mkdir(parents=True, exist_ok=True)
    constituents = set(uni.load_constituents(config.constituents))
    returns = _weekly_returns(config.prices)
    in_sample = md.slice_period(returns, config.in_sample)
    moments_all = md.estimate_moments(in_sample)
    members = [t for t in moments_all.tickers if t in constituents]
    if len(members) < k:
        raise DataError(f"only {len(members)} constituent series for cardinality {k}")
    moments = moments_all.restrict(members)
    spec = card.CardinalitySpec(k, config.bounds_for(k))

    frontier = card.cc_frontier(moments, spec, config.points,
                                node_budget=config.node_budget)
    ser.write_frontier(config.out / f"cc_frontier_{k}.csv", frontier)
    selected = {
        card.LABEL_MIN_VAR_CARD: frontier.points[0],
        card.LABEL_MAX_RET_CARD: frontier.points[-1],
        card.LABEL_MAX_SHARPE_CARD: None,
    }
    sharpe_portfolio = opt.max_sharpe(frontier)
    for label, point in selected.items():
        portfolio = (sharpe_portfolio if point is None else point.portfolio).with_label(label)
        point = point or _sharpe_point(frontier)
        ser.write_portfolio(_portfolio_path(config, label, k), portfolio)
        solution = card.CardinalitySolution(
            portfolio=portfolio,
            z=tuple(int(abs(w) > card.ZERO_WEIGHT_TOL) for w in portfolio.weights),
            epsilon=point.epsilon,
            variance=point.variance,
            optimality_gap=point.gap or 0.0,
            truncated=point.truncated,
        )
        ser.write_cc_solution(config.out / f"{SLUGS[label]}_{k}_solution.csv", solution)
        if point.truncated:
            logger.warning("%s (K=%d) hit the node budget; gap %.3g",
                           label, k, point.gap or 0.0)
    logger.info("cardinality-%d frontier written (%d points)", k, len(frontier))


def _sharpe_point(frontier):
    ratios = [p.achieved_return / p.volatility for p in frontier.points]
    return frontier.points[int(np.argmax(ratios))]


def _benchmark_curves(config, period) -> dict[str, bt.WealthCurve]:
    """Index and fund-average curves for one period; missing series are
    logged and skipped rather than failing the table."""
    out: dict[str, bt.WealthCurve] = {}
    if config.benchmarks is None:
        logger.warning("no benchmarks file configured; benchmark rows omitted")
        return out
    returns = _weekly_returns(config.benchmarks)
    try:
        sliced = md.slice_period(returns, period)
    except DataError as exc:
        logger.warning("benchmarks skipped for %s: %s", period.label, exc)
        return out
    available = set(sliced.tickers)

    def series_for(column: str) -> bt.ReturnSeries:
        col = sliced.tickers.index(column)
        return bt.ReturnSeries(sliced.dates, sliced.returns[:, col])

    for label, column in config.index_columns.items():
        if column not in available:
            logger.warning("benchmark column %s (%s) missing; row omitted", column, label)
            continue
        out[label] = bt.wealth_curve(series_for(column), label=label)
    fund_tickers = config.fund_columns or bt.FUND_TICKERS
    fund_curves = [bt.wealth_curve(series_for(t), label=t)
                   for t in fund_tickers if t in available]
    skipped = [t for t in fund_tickers if t not in available]
    if skipped:
        logger.warning("fund series missing from benchmarks file: %s", ", ".join(skipped))
    if fund_curves:
        out[bt.FUNDS_LABEL] = bt.benchmark_average(fund_curves)
    return out


def run_backtest(config: cfg.RunConfig, size: int) -> None:
    """One metrics table per period for one universe size, with a wealth
    curve file behind every emitted row."""
    config.out.mkdir(parents=True, exist_ok=True)
    returns = _weekly_returns(config.prices)
    portfolios: dict[str, opt.Portfolio] = {}
    for label in STRATEGY_ROW_ORDER:
        path = _portfolio_path(config, label, size)
        if path.exists():
            portfolios[label] = ser.read_portfolio(path)
        else:
            logger.warning("portfolio file %s missing; row '%s' omitted", path, label)

    for period in config.periods:
        sliced = md.slice_period(returns, period)
        rows: list[tuple[str, bt.MetricsReport]] = []
        for label in STRATEGY_ROW_ORDER:
            if label not in portfolios:
                continue
            series = bt.portfolio_returns(portfolios[label], sliced)
            curve = bt.wealth_curve(series, label=label)
            ser.write_curve(
                config.out / f"curve_{SLUGS[label]}_{size}_{period.label}.csv", curve)
            rows.append((label, bt.compute_metrics(series)))
        for label, curve in _benchmark_curves(config, period).items():
            ser.write_curve(
                config.out / f"curve_{SLUGS[label]}_{size}_{period.label}.csv", curve)
            rows.append((label, bt.compute_metrics(curve.returns())))
        ser.write_metrics_table(
            config.out / f"metrics_{size}_{period.label}.csv", rows)
        click.echo(f"\n== {size}-stock universe, {period.label} "
                   f"({period.start}..{period.end})")
        click.echo(ser.format_metrics_pretty(rows))
        _report_sp500_divergence(rows, period)


def _report_sp500_divergence(rows, period) -> None:
    if period.label != "period1":
        return
    for label, report in rows:
        if label == "S&P 500":
            delta = report.cumulative_return - SP500_PERIOD1_REFERENCE
            click.echo(
                f"S&P 500 cumulative {report.cumulative_return:.2f}% vs reference "
                f"{SP500_PERIOD1_REFERENCE:.2f}% (delta {delta:+.2f} points; "
                f"attributable to data-vendor differences)"
            )


def run_report(config: cfg.RunConfig, render: bool = False) -> None:
    """Reshape pipeline outputs into plot-ready files (scatter, lines, bars)."""
    config.out.mkdir(parents=True, exist_ok=True)
    for size in config.sizes:
        _report_frontier_scatter(config, size)
        _report_sectors(config, size)
    for period in config.periods:
        _report_cumulative_lines(config, period)
    if render:
        _render_figures(config)


def _report_frontier_scatter(config, size: int) -> None:
    src = config.out / f"frontier_{size}.csv"
    if not src.exists():
        logger.warning("frontier file %s missing; scatter skipped", src)
        return
    rows = ser.read_frontier_rows(src)
    lines = ["kind,label,volatility,expected_return"]
    for r in rows:
        lines.append(f"point,,{float(np.sqrt(r['variance']))!r},{r['achieved_return']!r}")
    stars = {
        opt.LABEL_MIN_VAR: rows[0],
        opt.LABEL_MAX_RET: rows[-1],
        opt.LABEL_MAX_SHARPE: max(
            rows, key=lambda r: r["achieved_return"] / max(float(np.sqrt(r["variance"])), 1e-18)),
    }
    for label, r in stars.items():
        lines.append(f"star,{label},{float(np.sqrt(r['variance']))!r},{r['achieved_return']!r}")
    (config.out / f"frontier_scatter_{size}.csv").write_text(
        "\n".join(lines) + "\n", encoding="utf-8")


def _report_sectors(config, size: int) -> None:
    src = _portfolio_path(config, opt.LABEL_GPT, size)
    if not src.exists() or config.sector_map is None:
        logger.warning("sector bars skipped for size %d", size)
        return
    portfolio = ser.read_portfolio(src)
    allocation = bt.sector_allocation(portfolio, bt.load_sector_map(config.sector_map))
    lines = ["sector,weight"]
    for sector, weight in sorted(allocation.items(), key=lambda kv: -kv[1]):
        lines.append(f"{sector},{float(weight)!r}")
    (config.out / f"sectors_{size}.csv").write_text("\n".join(lines) + "\n",
                                                    encoding="utf-8")


def _report_cumulative_lines(config, period) -> None:
    top_labels = (opt.LABEL_GPT, opt.LABEL_MAX_RET, opt.LABEL_MAX_SHARPE)
    lines = ["strategy,size,date,value"]
    found = False
    for size in config.sizes:
        for label in top_labels:
            path = config.out / f"curve_{SLUGS[label]}_{size}_{period.label}.csv"
            if not path.exists():
                continue
            found = True
            curve = ser.read_curve(path)
            for date, value in zip(curve.dates, curve.values):
                lines.append(f"{label},{size},{date.isoformat()},{float(value)!r}")
    if not found:
        logger.warning("no curve files for %s; line file skipped", period.label)
        return
    (config.out / f"cumulative_{period.label}.csv").write_text(
        "\n".join(lines) + "\n", encoding="utf-8")


def _render_figures(config) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib not installed; skipping static renderings")
        return
    for size in config.sizes:
        path = config.out / f"frontier_scatter_{size}.csv"
        if not path.exists():
            continue
        xs, ys, star_x, star_y = [], [], [], []
        for line in path.read_text().splitlines()[1:]:
            kind, _, vol, ret = line.split(",")
            (star_x if kind == "star" else xs).append(float(vol))
            (star_y if kind == "star" else ys).append(float(ret))
        fig, ax = plt.subplots(figsize=(7, 5))
        ax.plot(xs, ys, ".-", label="frontier")
        ax.plot(star_x, star_y, "r*", markersize=12, label="selected")
        ax.set_xlabel("weekly volatility")
        ax.set_ylabel("expected weekly return")
        ax.legend()
        fig.savefig(config.out / f"frontier_{size}.svg", format="svg")
        plt.close(fig)


# --------------------------------------------------------------------------
# click wiring


def _load_config(config_path, **overrides) -> cfg.RunConfig:
    if config_path is None:
        raise ConfigError("--config is required")
    return cfg.load_config(config_path, **overrides)


def _overrides(sizes, points, out, mode):
    out_kwargs = {}
    if sizes:
        out_kwargs["sizes"] = tuple(int(s) for s in sizes.split(","))
    if points is not None:
        out_kwargs["points"] = points
    if out is not None:
        out_kwargs["out"] = Path(out)
    if mode is not None:
        out_kwargs["llm_mode"] = mode
    return out_kwargs


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="YAML run configuration")(fn)
    fn = click.option("--sizes", default=None, help="comma-separated universe sizes")(fn)
    fn = click.option("--points", type=int, default=None, help="frontier grid size")(fn)
    fn = click.option("--out", default=None, help="output directory")(fn)
    fn = click.option("--replay", "mode", flag_value="replay", default=None,
                      help="replay recorded transcripts (default)")(fn)
    fn = click.option("--live", "mode", flag_value="live",
                      help="query the live chat endpoint")(fn)
    return fn


def _run(stage, config_path, sizes, points, out, mode, **extra):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        config = _load_config(config_path, **_overrides(sizes, points, out, mode))
        stage(config, **extra)
    except GptfolioError as exc:
        raise click.ClickException(str(exc)) from exc


@click.group()
def main():
    """Portfolio construction and backtesting over voted stock universes."""


@main.command()
@_common_options
def universe(config_path, sizes, points, out, mode):
    """Vote trading universes from recorded or live chat transcripts."""
    _run(lambda c: run_universe(c), config_path, sizes, points, out, mode)


@main.command()
@_common_options
@click.option("--universe-file", type=click.Path(), default=None,
              help="explicit universe ticker list")
def frontier(config_path, sizes, points, out, mode, universe_file):
    """Sweep bound-constrained frontiers for each voted universe."""
    def stage(config):
        for size in config.sizes:
            run_frontier(config, size,
                         Path(universe_file) if universe_file else None)
    _run(stage, config_path, sizes, points, out, mode)


@main.command()
@_common_options
def cardinality(config_path, sizes, points, out, mode):
    """Sweep exact-K frontiers over the full constituent universe."""
    def stage(config):
        for k in config.cardinality:
            run_cardinality(config, k)
    _run(stage, config_path, sizes, points, out, mode)


@main.command(name="backtest")
@_common_options
def backtest_cmd(config_path, sizes, points, out, mode):
    """Evaluate every available strategy out of sample."""
    def stage(config):
        for size in config.sizes:
            run_backtest(config, size)
    _run(stage, config_path, sizes, points, out, mode)


@main.command()
@_common_options
@click.option("--render", is_flag=True, default=False,
              help="also write static SVG figures")
def report(config_path, sizes, points, out, mode, render):
    """Reshape outputs into plot-ready delimited files."""
    _run(lambda c: run_report(c, render=render), config_path, sizes, points, out, mode)


@main.command(name="all")
@_common_options
@click.option("--render", is_flag=True, default=False)
def run_all(config_path, sizes, points, out, mode, render):
    """Run the whole pipeline end to end."""
    def stage(config):
        run_universe(config)
        for size in config.sizes:
            run_frontier(config, size)
        for k in config.cardinality:
            run_cardinality(config, k)
        for size in config.sizes:
            run_backtest(config, size)
        run_report(config, render=render)
    _run(stage, config_path, sizes, points, out, mode)


if __name__ == "__main__":
    sys.exit(main())
