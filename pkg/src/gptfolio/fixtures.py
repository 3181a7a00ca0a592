"""Paths to the packaged replay fixtures and reference data files."""
from __future__ import annotations

from pathlib import Path

_ROOT = Path(__file__).resolve().parent / "fixtures"


def fixture_path(*parts: str) -> Path:
    """Absolute path of a packaged fixture, e.g. ``fixture_path("transcripts",
    "universe_15.jsonl")``."""
    path = _ROOT.joinpath(*parts)
    if not path.exists():
        raise FileNotFoundError(f"no packaged fixture at {path}")
    return path


def constituents_path() -> Path:
    return fixture_path("constituents_sp500.txt")


def universe_transcript_path(size: int) -> Path:
    return fixture_path("transcripts", f"universe_{size}.jsonl")


def weights_transcript_path(size: int) -> Path:
    return fixture_path("transcripts", f"weights_{size}.jsonl")


def reference_weights_path(size: int) -> Path:
    return fixture_path(f"gpt_weighted_{size}.csv")


def sector_map_path() -> Path:
    return fixture_path("sectors.csv")
