"""Regenerate the packaged replay fixtures.

The shipped transcripts are synthetic stand-ins for unrecorded model
sessions: 30 ticker-extraction responses per universe size, built so that
frequency voting recovers the reference 15/30/45 universes, plus one
weight-assignment session per size whose raw weights normalize to the
reference weight columns. Run from the repository root:

    python3 scripts/generate_fixtures.py
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

import gptfolio.universe as uni

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "gptfolio" / "fixtures"

UNIVERSE_15 = [
    "MSFT", "KO", "DIS", "ADBE", "TSLA", "GOOGL", "HD", "NVDA", "JPM",
    "AAPL", "V", "PG", "JNJ", "AMZN", "UNH",
]
EXTRA_30 = [
    "NFLX", "T", "MRK", "CRM", "WMT", "GS", "MMM", "CSCO", "XOM", "META",
    "INTC", "BA", "MCD", "PFE", "CVX",
]
EXTRA_45 = [
    "LMT", "AXP", "MA", "ABT", "IBM", "GE", "SBUX", "VZ", "BRK-B", "PYPL",
    "CAT", "PEP", "ORCL", "NKE", "AVGO",
]
UNIVERSE_30 = UNIVERSE_15 + EXTRA_30
UNIVERSE_45 = UNIVERSE_30 + EXTRA_45

# reference weight columns, percent, in universe order
PCT_15 = [9.17, 4.59, 4.59, 4.59, 4.59, 7.34, 6.42, 7.34, 6.42, 9.17, 7.34,
          6.42, 6.42, 9.17, 6.42]
PCT_30 = [5.04, 2.88, 2.88, 4.32, 3.60, 4.32, 2.88, 3.60, 3.60, 5.04, 3.60,
          2.88, 3.60, 4.32, 3.60,
          2.88, 2.88, 2.88, 2.88, 2.88, 2.88, 2.88, 2.88, 2.88, 3.60, 2.88,
          2.88, 2.88, 2.88, 2.88]
PCT_45 = [4.08, 2.04, 2.04, 2.72, 2.72, 2.72, 2.04, 2.72, 2.04, 4.08, 2.72,
          2.04, 2.72, 4.08, 2.72,
          2.04, 1.36, 2.04, 2.04, 2.04, 2.04, 2.04, 2.04, 2.04, 2.04, 2.04,
          2.04, 2.04, 2.04, 2.04,
          2.04, 2.04, 2.04, 2.04, 1.36, 1.36, 2.04, 1.36, 2.04, 2.04, 2.04,
          2.04, 2.04, 2.04, 2.04]

# raw (pre-normalization) weights the model "assigned"; each column divided
# by its sum reproduces the percent column above to two decimals
RAW_15 = [0.10, 0.05, 0.05, 0.05, 0.05, 0.08, 0.07, 0.08, 0.07, 0.10, 0.08,
          0.07, 0.07, 0.10, 0.07]
RAW_30 = [0.07, 0.04, 0.04, 0.06, 0.05, 0.06, 0.04, 0.05, 0.05, 0.07, 0.05,
          0.04, 0.05, 0.06, 0.05,
          0.04, 0.04, 0.04, 0.04, 0.04, 0.04, 0.04, 0.04, 0.04, 0.05, 0.04,
          0.04, 0.04, 0.04, 0.04]
RAW_45 = [0.06, 0.03, 0.03, 0.04, 0.04, 0.04, 0.03, 0.04, 0.03, 0.06, 0.04,
          0.03, 0.04, 0.06, 0.04,
          0.03, 0.02, 0.03, 0.03, 0.03, 0.03, 0.03, 0.03, 0.03, 0.03, 0.03,
          0.03, 0.03, 0.03, 0.03,
          0.03, 0.03, 0.03, 0.03, 0.02, 0.02, 0.03, 0.02, 0.03, 0.03, 0.03,
          0.03, 0.03, 0.03, 0.03]

EXTRA_CONSTITUENTS = [
    "ABBV", "ACN", "AIG", "AMD", "AMGN", "AMT", "BAC", "BK", "BKNG", "BLK",
    "BMY", "C", "CL", "CMCSA", "COF", "COP", "COST", "CVS", "D", "DHR",
    "DOW", "DUK", "EMR", "EXC", "F", "FDX", "GD", "GILD", "GM", "HON",
    "INTU", "ISRG", "KHC", "KMB", "LIN", "LLY", "LOW", "MDLZ", "MDT", "MET",
    "MO", "MS", "NEE", "ORLY", "OXY", "QCOM", "RTX", "SCHW", "SO", "SPG",
    "TGT", "TJX", "TMO", "TXN", "UNP", "UPS", "USB", "WBA", "WFC", "WM",
]

JUNK_TICKERS = ["TSM", "SHOP", "RY"]  # plausible symbols outside the index

SECTORS = {
    "MSFT": "Information Technology", "ADBE": "Information Technology",
    "NVDA": "Information Technology", "AAPL": "Information Technology",
    "V": "Information Technology", "CRM": "Information Technology",
    "CSCO": "Information Technology", "INTC": "Information Technology",
    "MA": "Information Technology", "IBM": "Information Technology",
    "PYPL": "Information Technology", "ORCL": "Information Technology",
    "AVGO": "Information Technology",
    "KO": "Consumer Staples", "PG": "Consumer Staples",
    "WMT": "Consumer Staples", "PEP": "Consumer Staples",
    "DIS": "Communication Services", "GOOGL": "Communication Services",
    "NFLX": "Communication Services", "T": "Communication Services",
    "META": "Communication Services", "VZ": "Communication Services",
    "TSLA": "Consumer Discretionary", "HD": "Consumer Discretionary",
    "AMZN": "Consumer Discretionary", "MCD": "Consumer Discretionary",
    "SBUX": "Consumer Discretionary", "NKE": "Consumer Discretionary",
    "JPM": "Financials", "GS": "Financials", "AXP": "Financials",
    "BRK-B": "Financials",
    "JNJ": "Health Care", "UNH": "Health Care", "MRK": "Health Care",
    "PFE": "Health Care", "ABT": "Health Care",
    "MMM": "Industrials", "BA": "Industrials", "LMT": "Industrials",
    "GE": "Industrials", "CAT": "Industrials",
    "XOM": "Energy", "CVX": "Energy",
}


def mask_renames(ticker: str) -> str:
    # the recorded sessions predate the META rename
    return "FB" if ticker == "META" else ticker


def build_universe_transcript(rng, size, core, always_n, sometimes_range,
                              noise_pool, per_call_range, n_calls=30):
    """Each call carries every 'always' ticker, the 'sometimes' tickers on
    their sampled calls, and enough noise tickers to reach a sampled length,
    so voting margins between core and noise stay wide."""
    always = core[:always_n]
    sometimes = core[always_n:]
    sometimes_calls = {
        t: set(rng.choice(n_calls, size=int(rng.integers(*sometimes_range)),
                          replace=False).tolist())
        for t in sometimes
    }
    junk_calls = {int(c): JUNK_TICKERS[i % len(JUNK_TICKERS)]
                  for i, c in enumerate(rng.choice(n_calls, size=3, replace=False))}
    prompt = uni.render_prompt(uni.get_template("universe_request"), size)
    extract_prompt = uni.render_prompt(uni.get_template("ticker_extract"),
                                       "<previous fund description>")
    lo, hi = per_call_range
    noise_counts = {t: 0 for t in noise_pool}
    entries = []
    for call in range(n_calls):
        tickers = list(always)
        tickers += [t for t in sometimes if call in sometimes_calls[t]]
        target = int(rng.integers(lo, hi + 1))
        fill = max(0, target - len(tickers))
        for t in rng.choice(noise_pool, size=fill, replace=False):
            tickers.append(str(t))
            noise_counts[str(t)] += 1
        assert lo <= len(tickers) <= hi, (call, len(tickers))
        rng.shuffle(tickers)
        tokens = [mask_renames(t) for t in tickers]
        if call in junk_calls:
            tokens.insert(int(rng.integers(0, len(tokens))), junk_calls[call])
        body = " ".join(tokens)
        if call % 11 == 0:
            body = "Here are the ticker symbols: " + body
        entries.append({
            "call": call + 1,
            "prompt_id": "ticker_extract",
            "prompt": extract_prompt if call else prompt,
            "response": body,
        })
    # every core ticker must out-vote every noise ticker
    assert max(noise_counts.values(), default=0) < sometimes_range[0] - 2
    return entries


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def build_weight_transcript(universe, raw):
    voted = " ".join(universe)
    request = uni.render_prompt(uni.get_template("weight_request"), voted)
    pairs = ",".join(f"{t},{w:.2f}" for t, w in zip(universe, raw))
    prose = (
        "I would anchor the portfolio on the mega-cap technology names and "
        "balance them with defensive healthcare, staples and financials. "
        "Allocations: " + pairs + ". The tilt toward the largest, most "
        "profitable franchises aims to outperform the index while the "
        "defensive sleeve dampens drawdowns."
    )
    extract = uni.render_prompt(uni.get_template("weight_extract"), prose)
    return [
        {"call": 1, "prompt_id": "weight_request", "prompt": request,
         "response": prose},
        {"call": 2, "prompt_id": "weight_extract", "prompt": extract,
         "response": pairs},
    ]


def main():
    rng = np.random.default_rng(45221)
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "transcripts").mkdir(exist_ok=True)

    constituents = sorted(set(UNIVERSE_45) | set(EXTRA_CONSTITUENTS))
    assert "FB" not in constituents and "META" in constituents
    with open(FIXTURES / "constituents_sp500.txt", "w") as fh:
        fh.write("\n".join(constituents) + "\n")

    specs = {
        15: dict(core=UNIVERSE_15, always_n=12, sometimes_range=(24, 29),
                 noise_pool=EXTRA_30[:9] + ["FB", "LOW", "COST", "QCOM", "AMD", "HON", "LLY"],
                 per_call_range=(15, 20)),
        30: dict(core=UNIVERSE_30, always_n=24, sometimes_range=(25, 29),
                 noise_pool=EXTRA_45[:10] + ["LLY", "TMO", "HON", "UNP", "AMD", "QCOM"],
                 per_call_range=(30, 35)),
        45: dict(core=UNIVERSE_45, always_n=40, sometimes_range=(26, 29),
                 noise_pool=["LLY", "TMO", "HON", "UNP", "QCOM", "TXN", "LOW",
                             "COST", "AMD", "GILD"],
                 per_call_range=(45, 50)),
    }
    universes = {15: UNIVERSE_15, 30: UNIVERSE_30, 45: UNIVERSE_45}
    raws = {15: RAW_15, 30: RAW_30, 45: RAW_45}
    pcts = {15: PCT_15, 30: PCT_30, 45: PCT_45}

    for size, spec in specs.items():
        # 15-size transcripts keep FB out of the core, so add it as noise only
        noise = [t for t in spec["noise_pool"] if t not in spec["core"]]
        entries = build_universe_transcript(
            rng, size, spec["core"], spec["always_n"], spec["sometimes_range"],
            noise, spec["per_call_range"])
        write_jsonl(FIXTURES / "transcripts" / f"universe_{size}.jsonl", entries)

        # verify the vote recovers the reference universe
        transcript = uni.load_transcript(FIXTURES / "transcripts" / f"universe_{size}.jsonl")
        tally = uni.tally_responses(transcript, constituents)
        assert set(uni.select_top_k(tally, size)) == set(universes[size]), size

        write_jsonl(FIXTURES / "transcripts" / f"weights_{size}.jsonl",
                    build_weight_transcript(universes[size], raws[size]))

        parsed = uni.parse_gpt_weights(
            ",".join(f"{t},{w:.2f}" for t, w in zip(universes[size], raws[size])),
            universes[size])
        assert np.abs(parsed.weights * 100 - np.array(pcts[size])).max() < 0.005, size

        with open(FIXTURES / f"gpt_weighted_{size}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ticker", "weight"])
            for t, p in zip(universes[size], pcts[size]):
                writer.writerow([t, f"{p / 100:.4f}"])

    with open(FIXTURES / "sectors.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ticker", "sector"])
        for t in UNIVERSE_45:
            writer.writerow([t, SECTORS[t]])

    print(f"fixtures written under {FIXTURES}")


if __name__ == "__main__":
    main()
