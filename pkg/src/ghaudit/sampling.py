"""Corpus filtering, confidence/margin-driven sample sizing, and
stratified selection.

Sample sizes use Cochran's formula with the finite-population
correction; stratified selection guarantees a minimum quota per
non-empty stratum (relaxed with a warning when a stratum is too small)
and is deterministic for a given seed.
"""

from __future__ import annotations

import json
import logging
import math
import random
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

import requests

logger = logging.getLogger(__name__)

T = TypeVar("T")

MIN_STARS = 10
MIN_WORKFLOW_RUNS = 50

Z_BY_CONFIDENCE = {0.90: 1.645, 0.95: 1.96, 0.99: 2.576}


class InvalidMargin(Exception):
    pass


class InfeasibleQuota(UserWarning):
    """A stratum has fewer members than the per-stratum minimum; the quota
    is relaxed to the stratum size."""


@dataclass(frozen=True)
class RepoRecord:
    full_name: str
    stars: int
    workflow_run_count: int
    default_branch: str = "main"

    def __post_init__(self):
        if self.stars < 0 or self.workflow_run_count < 0:
            raise ValueError("counts must be >= 0")


@dataclass(frozen=True)
class SamplingPlan:
    population_n: int
    confidence: float
    margin_e: float
    proportion_p: float
    sample_n: int


def filter_repos(records: Iterable[RepoRecord]) -> list[RepoRecord]:
    """Keep actively used repositories: at least 10 stars and 50 workflow
    runs, both thresholds inclusive."""
    return [r for r in records
            if r.stars >= MIN_STARS and r.workflow_run_count >= MIN_WORKFLOW_RUNS]


def sample_size(population_n: int, confidence: float = 0.95,
                margin: float = 0.10, proportion: float = 0.5) -> int:
    """Cochran sample size with finite-population correction.

    n0 = z^2 p (1-p) / e^2, then n = ceil(n0 / (1 + (n0 - 1) / N)).
    """
    if population_n < 1:
        raise ValueError("population must be >= 1")
    if not 0.0 < margin < 1.0:
        raise InvalidMargin(f"margin must be in (0, 1), got {margin}")
    if not 0.0 < proportion < 1.0:
        raise ValueError(f"proportion must be in (0, 1), got {proportion}")
    try:
        z = Z_BY_CONFIDENCE[round(confidence, 2)]
    except KeyError:
        raise ValueError(f"unsupported confidence {confidence}; "
                         f"known: {sorted(Z_BY_CONFIDENCE)}") from None
    n0 = z * z * proportion * (1.0 - proportion) / (margin * margin)
    n = math.ceil(n0 / (1.0 + (n0 - 1.0) / population_n))
    return min(n, population_n)


def make_plan(population_n: int, confidence: float = 0.95, margin: float = 0.10,
              proportion: float = 0.5) -> SamplingPlan:
    return SamplingPlan(
        population_n=population_n,
        confidence=confidence,
        margin_e=margin,
        proportion_p=proportion,
        sample_n=sample_size(population_n, confidence, margin, proportion),
    )


def stratified_sample(items: Sequence[T], stratum_of: Callable[[T], str], n: int,
                      min_per_stratum: int = 2, seed: int = 0) -> list[T]:
    """Select n items with every non-empty stratum represented.

    Each stratum contributes at least min_per_stratum members (relaxed to
    the stratum size with an InfeasibleQuota warning when short); the
    remainder is allocated proportionally to stratum sizes by largest
    remainder. Deterministic for a given seed; output preserves the input
    order of the selected items.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n >= len(items):
        return list(items)

    strata: dict[str, list[int]] = {}
    for index, item in enumerate(items):
        strata.setdefault(stratum_of(item), []).append(index)
    names = sorted(strata)
    if n < len(names) * min_per_stratum:
        raise ValueError(
            f"n={n} cannot cover {len(names)} strata at {min_per_stratum} each")

    quotas: dict[str, int] = {}
    for name in names:
        size = len(strata[name])
        if size < min_per_stratum:
            warnings.warn(
                f"stratum {name!r} has {size} member(s), below the minimum "
                f"of {min_per_stratum}; quota relaxed",
                InfeasibleQuota, stacklevel=2)
            quotas[name] = size
        else:
            quotas[name] = min_per_stratum

    remainder = n - sum(quotas.values())
    if remainder > 0:
        capacity = {name: len(strata[name]) - quotas[name] for name in names}
        total_capacity = sum(capacity.values())
        take = min(remainder, total_capacity)
        if take > 0:
            weights = {name: capacity[name] / total_capacity for name in names}
            shares = {name: take * weights[name] for name in names}
            floored = {name: min(int(shares[name]), capacity[name]) for name in names}
            leftover = take - sum(floored.values())
            by_remainder = sorted(
                names, key=lambda name: (-(shares[name] - int(shares[name])), name))
            for name in by_remainder:
                if leftover <= 0:
                    break
                if floored[name] < capacity[name]:
                    floored[name] += 1
                    leftover -= 1
            # redistribute anything still left to whoever has room
            for name in names:
                while leftover > 0 and floored[name] < capacity[name]:
                    floored[name] += 1
                    leftover -= 1
            for name in names:
                quotas[name] += floored[name]

    rng = random.Random(seed)
    chosen: set[int] = set()
    for name in names:
        members = strata[name]
        chosen.update(rng.sample(members, min(quotas[name], len(members))))
    return [items[i] for i in sorted(chosen)]


def discover_workflows(repo_root: str | Path) -> list[Path]:
    """Workflow files directly under .github/workflows (non-recursive)."""
    base = Path(repo_root) / ".github" / "workflows"
    if not base.is_dir():
        return []
    return sorted(p for p in base.iterdir()
                  if p.is_file() and p.suffix in (".yml", ".yaml"))


class RepoMetadataClient:
    """Minimal, cache-backed client for the hosting service's REST API.

    Responses are cached as JSON files keyed by request path so desk-scale
    runs and tests work from recorded fixtures; a 429 answer sleeps for
    the advertised Retry-After (default 60s) and retries.
    """

    def __init__(self, api_base: str = "https://api.github.com",
                 cache_dir: str | Path = ".ghaudit-cache",
                 token: str | None = None, max_attempts: int = 5):
        self.api_base = api_base.rstrip("/")
        self.cache_dir = Path(cache_dir)
        self.token = token
        self.max_attempts = max_attempts

    def _cache_path(self, resource: str) -> Path:
        safe = resource.strip("/").replace("/", "__")
        return self.cache_dir / f"{safe}.json"

    def get_json(self, resource: str) -> dict:
        cache_path = self._cache_path(resource)
        if cache_path.exists():
            return json.loads(cache_path.read_text(encoding="utf-8"))

        headers = {"Accept": "application/vnd.github+json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        url = f"{self.api_base}/{resource.strip('/')}"
        for attempt in range(1, self.max_attempts + 1):
            response = requests.get(url, headers=headers, timeout=30)
            if response.status_code == 429 or (
                    response.status_code == 403 and "rate limit" in response.text.lower()):
                delay = float(response.headers.get("Retry-After", 60))
                logger.warning("rate limited on %s; sleeping %.0fs (attempt %d)",
                               resource, delay, attempt)
                time.sleep(delay)
                continue
            response.raise_for_status()
            data = response.json()
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            cache_path.write_text(json.dumps(data, indent=2), encoding="utf-8")
            return data
        raise RuntimeError(f"rate limited on {resource} after {self.max_attempts} attempts")

    def fetch_repo_record(self, full_name: str) -> RepoRecord:
        """Stars from the repository resource, lifetime run count from the
        workflow-runs listing."""
        repo = self.get_json(f"repos/{full_name}")
        runs = self.get_json(f"repos/{full_name}/actions/runs?per_page=1")
        return RepoRecord(
            full_name=full_name,
            stars=int(repo.get("stargazers_count", 0)),
            workflow_run_count=int(runs.get("total_count", 0)),
            default_branch=str(repo.get("default_branch", "main")),
        )
