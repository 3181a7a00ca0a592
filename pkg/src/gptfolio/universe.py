"""Trading-universe selection by majority vote over repeated chat calls.

The workflow asks a chat-completion model for a fund of at least X index
constituents, repeats the request 30 times, extracts and validates ticker
symbols from each response, tallies how often each ticker appears, and
votes the K most frequent into the trading universe. A second prompt pair
asks the model to weight the voted tickers; the parsed weights are
normalized to sum to one.

Because model output is not reproducible, the canonical path replays
recorded transcripts shipped as JSONL fixtures; live calls are opt-in and
record a transcript of their own.
"""
from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import httpx
import numpy as np

from .errors import ChatError, DataError, TranscriptError

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-9
DEFAULT_REMAP: Mapping[str, str] = {"FB": "META"}
DEFAULT_NUM_CALLS = 30

PROMPT_TEXTS = {
    "universe_request": (
        "Using a range of investing principles taken from leading funds, "
        "create a theoretical fund comprising of at least {X} stocks "
        "(mention their tickers) from the S&P500 with the goal to "
        "outperform the S&P500 index"
    ),
    "ticker_extract": (
        "Extract only the ticker symbols of the stocks comprising the fund "
        "from the previous response: - '{input}'. In your response to this "
        "prompt, list only the ticker symbols separated by spaces"
    ),
    "weight_request": (
        "Assume you're designing a theoretical model portfolio from these "
        "S&P500 stocks: {input}. Provide a hypothetical example of how you "
        "might distribute the weightage of these stocks (normalized, i.e., "
        "weights should add up to 1.00) in the portfolio to potentially "
        "outperform the S&P500 index. Also mention the underlying strategy "
        "or logic which you used to assign these weights"
    ),
    "weight_extract": (
        "Extract tickers of stocks and corresponding weights as a single "
        "comma ',' separated string, with the weights expressed as floats: "
        "'{input}'"
    ),
}

_TICKER_RE = re.compile(r"\b[A-Z]{1,5}(?:[.-][A-Z])?\b")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str

    def __post_init__(self):
        if self.id not in PROMPT_TEXTS:
            raise DataError(f"unknown prompt id '{self.id}'")


def get_template(template_id: str) -> PromptTemplate:
    if template_id not in PROMPT_TEXTS:
        raise DataError(f"unknown prompt id '{template_id}'")
    return PromptTemplate(template_id, PROMPT_TEXTS[template_id])


def render_prompt(template: PromptTemplate, substitution) -> str:
    """Fill the template's single placeholder ({X} or {input})."""
    value = str(substitution)
    if not value:
        raise DataError("prompt substitution must not be empty")
    for placeholder in ("{X}", "{input}"):
        if placeholder in template.text:
            return template.text.replace(placeholder, value)
    raise DataError(f"template '{template.id}' has no placeholder to fill")


# -- transcripts ------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptEntry:
    call_index: int
    prompt_id: str
    prompt: str
    response: str


@dataclass(frozen=True)
class ChatTranscript:
    entries: tuple[TranscriptEntry, ...]
    mode: str = "replay"

    def __post_init__(self):
        if self.mode not in ("live", "replay"):
            raise DataError(f"transcript mode must be live or replay, got {self.mode}")
        for i, entry in enumerate(self.entries, start=1):
            if entry.call_index != i:
                raise DataError(
                    f"call indices must be contiguous from 1; entry {i} has "
                    f"index {entry.call_index}"
                )

    def __len__(self) -> int:
        return len(self.entries)


def load_transcript(path) -> ChatTranscript:
    """Read a JSONL transcript: one object per call with ``call``,
    ``prompt_id``, ``prompt`` and ``response`` fields."""
    entries = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                entries.append(TranscriptEntry(
                    call_index=int(rec["call"]),
                    prompt_id=str(rec.get("prompt_id", "")),
                    prompt=str(rec.get("prompt", "")),
                    response=str(rec["response"]),
                ))
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise TranscriptError(f"cannot read transcript {path}: {exc}") from exc
    if not entries:
        raise TranscriptError(f"transcript {path} is empty")
    return ChatTranscript(entries=tuple(entries))


def save_transcript(path, transcript: ChatTranscript) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in transcript.entries:
            fh.write(json.dumps({
                "call": e.call_index, "prompt_id": e.prompt_id,
                "prompt": e.prompt, "response": e.response,
            }) + "\n")


# -- chat clients -----------------------------------------------------------


@dataclass(frozen=True)
class ChatConfig:
    model: str = "gpt-4"
    temperature: float = 1.0
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    api_key_env: str = "OPENAI_API_KEY"
    max_retries: int = 3
    backoff: float = 1.0
    timeout: float = 60.0


class ReplayChat:
    """Deterministic playback of a recorded transcript, one call at a time.

    Strictly single-consumer: the cursor advances on every call and the
    instance is not thread-safe.
    """

    def __init__(self, transcript: ChatTranscript):
        self._transcript = transcript
        self._cursor = 0

    def chat(self, prompt: str, prompt_id: str = "") -> str:
        if self._cursor >= len(self._transcript.entries):
            raise TranscriptError(
                f"replay transcript exhausted after {self._cursor} calls"
            )
        entry = self._transcript.entries[self._cursor]
        self._cursor += 1
        return entry.response

    @property
    def calls_made(self) -> int:
        return self._cursor


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class LiveChat:
    """Chat-completion client over HTTP with bounded retry.

    Retries only transient statuses (429 and 5xx) with exponential backoff;
    authentication and other client errors surface immediately. The API key
    is read from the environment variable named in the config, never from
    files or arguments.
    """

    def __init__(self, config: ChatConfig, transport: httpx.BaseTransport | None = None,
                 sleep=time.sleep):
        key = os.environ.get(config.api_key_env, "")
        if not key:
            raise ChatError(
                f"live mode needs credentials in ${config.api_key_env}"
            )
        self._config = config
        self._key = key
        self._sleep = sleep
        self._client = httpx.Client(timeout=config.timeout, transport=transport)
        self._recorded: list[TranscriptEntry] = []

    def chat(self, prompt: str, prompt_id: str = "") -> str:
        cfg = self._config
        payload = {
            "model": cfg.model,
            "temperature": cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        headers = {"Authorization": f"Bearer {self._key}"}
        last_error: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = self._client.post(cfg.endpoint, json=payload, headers=headers)
            except httpx.HTTPError as exc:
                last_error = exc
                if attempt < cfg.max_retries:
                    self._sleep(cfg.backoff * 2 ** attempt)
                    continue
                raise ChatError(f"chat request failed: {exc}") from exc
            if resp.status_code == 200:
                try:
                    text = resp.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, ValueError) as exc:
                    raise ChatError(f"malformed chat response: {exc}") from exc
                self._recorded.append(TranscriptEntry(
                    len(self._recorded) + 1, prompt_id, prompt, text))
                return text
            if resp.status_code in _RETRYABLE_STATUS and attempt < cfg.max_retries:
                self._sleep(cfg.backoff * 2 ** attempt)
                continue
            raise ChatError(
                f"chat endpoint returned {resp.status_code}",
                status_code=resp.status_code,
            )
        raise ChatError(f"chat request failed after retries: {last_error}")

    def transcript(self) -> ChatTranscript:
        return ChatTranscript(entries=tuple(self._recorded), mode="live")

    def close(self) -> None:
        self._client.close()


# -- extraction and voting ---------------------------------------------------


class ExtractionResult(NamedTuple):
    tickers: tuple[str, ...]
    unknown: tuple[str, ...]


def candidate_tokens(response: str) -> list[str]:
    """Ticker-shaped tokens (1-5 capitals, optional .X/-X suffix) in
    order of first appearance, deduplicated."""
    seen: dict[str, None] = {}
    for token in _TICKER_RE.findall(response):
        seen.setdefault(token)
    return list(seen)


def extract_tickers(response: str, constituents: Iterable[str]) -> ExtractionResult:
    """Constituent tickers mentioned in a response, plus the ticker-shaped
    tokens that failed membership validation."""
    members = set(constituents)
    if not members:
        raise DataError("constituent set must not be empty")
    tickers, unknown = [], []
    for token in candidate_tokens(response):
        (tickers if token in members else unknown).append(token)
    if unknown:
        logger.debug("non-constituent tokens ignored: %s", " ".join(unknown))
    return ExtractionResult(tuple(tickers), tuple(unknown))


def remap_tickers(tickers: Iterable[str], remap: Mapping[str, str]) -> list[str]:
    """Apply symbol renames (e.g. FB to META), preserving order."""
    return [remap.get(t, t) for t in tickers]


@dataclass(frozen=True)
class UniverseTally:
    counts: Mapping[str, int]
    num_calls: int

    def __post_init__(self):
        object.__setattr__(self, "counts", dict(self.counts))
        for ticker, count in self.counts.items():
            if ticker != ticker.upper():
                raise DataError(f"tally tickers must be uppercase: {ticker}")
            if not 0 <= count <= self.num_calls:
                raise DataError(
                    f"count {count} for {ticker} outside [0, {self.num_calls}]"
                )


def tally_responses(transcript: ChatTranscript, constituents: Iterable[str],
                    remap: Mapping[str, str] = DEFAULT_REMAP) -> UniverseTally:
    """Count, per ticker, the number of calls whose response mentions it.

    Tokens are remapped before membership validation so that stale symbols
    still vote for their current name; repeats within one response count
    once.
    """
    if not transcript.entries:
        raise DataError("cannot tally an empty transcript")
    members = set(constituents)
    if not members:
        raise DataError("constituent set must not be empty")
    counts: dict[str, int] = {}
    for entry in transcript.entries:
        mapped = remap_tickers(candidate_tokens(entry.response), remap)
        for ticker in set(t for t in mapped if t in members):
            counts[ticker] = counts.get(ticker, 0) + 1
    return UniverseTally(counts=counts, num_calls=len(transcript.entries))


def select_top_k(tally: UniverseTally, k: int) -> list[str]:
    """The k most frequent tickers, most frequent first, ties alphabetical."""
    if k < 1:
        raise DataError("k must be positive")
    if len(tally.counts) < k:
        raise DataError(
            f"only {len(tally.counts)} distinct tickers tallied, need {k}"
        )
    ranked = sorted(tally.counts.items(), key=lambda item: (-item[1], item[0]))
    return [ticker for ticker, _ in ranked[:k]]


# -- weights ------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedUniverse:
    tickers: tuple[str, ...]
    weights: np.ndarray
    raw_weights: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        raw = self.raw_weights if self.raw_weights is not None else w
        raw = np.ascontiguousarray(raw, dtype=float)
        raw.setflags(write=False)
        object.__setattr__(self, "raw_weights", raw)
        if len(self.tickers) != len(w):
            raise DataError("weights and tickers length mismatch")
        if (w <= 0).any():
            raise DataError("all weights must be positive")
        if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise DataError(f"weights sum to {w.sum():.12f}, expected 1")

    @property
    def raw_sum(self) -> float:
        return float(self.raw_weights.sum())


def normalize_weights(raw) -> np.ndarray:
    """Scale positive weights to sum exactly to one, preserving proportions."""
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise DataError("cannot normalize an empty weight vector")
    if (raw <= 0).any():
        raise DataError("weights must be strictly positive to normalize")
    total = raw.sum()
    if total <= 0:
        raise DataError("weight sum must be positive")
    return raw / total


def parse_gpt_weights(response: str, universe: Iterable[str]) -> WeightedUniverse:
    """Parse a 'TICKER,weight,TICKER,weight,...' string over a known universe.

    Every universe member must appear exactly once and no other ticker may;
    raw weights need not sum to one (they are flagged and normalized).
    """
    wanted = list(universe)
    wanted_set = set(wanted)
    tokens = [t.strip() for t in response.strip().split(",") if t.strip()]
    if len(tokens) % 2 != 0:
        raise DataError(
            f"weight string has {len(tokens)} tokens; expected ticker,weight pairs"
        )
    tickers: list[str] = []
    raw: list[float] = []
    for tk, wt in zip(tokens[::2], tokens[1::2]):
        if tk not in wanted_set:
            raise DataError(f"ticker '{tk}' is not in the requested universe")
        if tk in tickers:
            raise DataError(f"duplicate ticker '{tk}' in weight string")
        try:
            value = float(wt)
        except ValueError as exc:
            raise DataError(f"non-numeric weight '{wt}' for {tk}") from exc
        tickers.append(tk)
        raw.append(value)
    missing = [t for t in wanted if t not in tickers]
    if missing:
        raise DataError(f"weight string misses universe members: {missing}")
    raw_arr = np.array(raw)
    total = float(raw_arr.sum())
    if abs(total - 1.0) > 1e-9:
        logger.info("raw weights sum to %.4f; normalizing to 1", total)
    return WeightedUniverse(
        tickers=tuple(tickers),
        weights=normalize_weights(raw_arr),
        raw_weights=raw_arr,
    )


def load_constituents(path) -> tuple[str, ...]:
    """One ticker per line; blank lines and '#' comments ignored."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            token = line.split("#", 1)[0].strip().upper()
            if token:
                out.append(token)
    if not out:
        raise DataError(f"constituents file {path} is empty")
    return tuple(dict.fromkeys(out))
