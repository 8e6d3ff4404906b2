"""Chat-completion backends, batch parsing and the batched generation loop."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Protocol, Sequence

import httpx
import numpy as np

from .prompt import DatabaseDescription, ExampleRow, PromptText, build_prompt, permute_columns
from .schema import DataTable, TableSchema

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


class ConfigurationError(RuntimeError):
    pass


class TransportError(RuntimeError):
    def __init__(self, message: str, status: int | None = None, body: str = "", retryable: bool = True):
        super().__init__(message)
        self.status = status
        self.body = body
        self.retryable = retryable


class ParseError(ValueError):
    pass


class GenerationError(RuntimeError):
    """A batch exhausted its retries; ``rows`` holds what was gathered."""

    def __init__(self, message: str, rows: list[dict], log_data: dict | None = None):
        super().__init__(message)
        self.rows = rows
        self.log_data = log_data or {}


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_id: str = "gpt-4-turbo-2024-04-09"
    temperature: float = 1.0
    max_retries: int = 3
    auth_env_var: str | None = "OPENAI_API_KEY"
    request_timeout: float = 120.0
    retry_delay: float = 1.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationConfig:
    total_rows: int
    batch_rows: int = 10
    seed: int = 0
    include_examples: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.total_rows < 1:
            raise ValueError("total_rows must be >= 1")
        if not 1 <= self.batch_rows <= self.total_rows:
            raise ValueError("batch_rows must lie in [1, total_rows]")


class Backend(Protocol):
    max_retries: int
    retry_delay: float

    def complete(self, prompt: PromptText) -> str: ...


# -- HTTP ---------------------------------------------------------------------

def request_completion(backend: BackendConfig, prompt: PromptText, client: httpx.Client | None = None) -> str:
    """POST one chat completion and return the assistant message text."""
    headers = {"Content-Type": "application/json"}
    if backend.auth_env_var:
        key = os.environ.get(backend.auth_env_var)
        if not key:
            raise ConfigurationError(f"environment variable {backend.auth_env_var} is not set")
        headers["Authorization"] = f"Bearer {key}"
    body = {
        "model": backend.model_id,
        "temperature": backend.temperature,
        "messages": [{"role": "user", "content": prompt.rendered}],
    }
    own = client is None
    client = client or httpx.Client(timeout=backend.request_timeout)
    try:
        resp = client.post(backend.endpoint_url, json=body, headers=headers, timeout=backend.request_timeout)
    except httpx.TimeoutException as exc:
        raise TransportError(f"request timed out: {exc}", retryable=True) from exc
    except httpx.HTTPError as exc:
        raise TransportError(f"network failure: {exc}", retryable=True) from exc
    finally:
        if own:
            client.close()
    if resp.status_code >= 400:
        snippet = resp.text[:500]
        raise TransportError(
            f"HTTP {resp.status_code} from {backend.endpoint_url}",
            status=resp.status_code,
            body=snippet,
            retryable=resp.status_code in RETRYABLE_STATUS,
        )
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(
            "malformed chat-completion response", status=resp.status_code, body=resp.text[:500]
        ) from exc


class HttpBackend:
    """OpenAI-compatible chat-completion endpoint; safe to share across threads."""

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        self.config = config
        self.max_retries = config.max_retries
        self.retry_delay = config.retry_delay
        self._client = client or httpx.Client(timeout=config.request_timeout)
        self.n_requests = 0
        self._lock = threading.Lock()

    def check(self) -> None:
        if self.config.auth_env_var and not os.environ.get(self.config.auth_env_var):
            raise ConfigurationError(f"environment variable {self.config.auth_env_var} is not set")

    def complete(self, prompt: PromptText) -> str:
        with self._lock:
            self.n_requests += 1
        return request_completion(self.config, prompt, self._client)

    def describe(self) -> dict:
        d = asdict(self.config)
        d["kind"] = "http"
        return d


# -- parsing ------------------------------------------------------------------

@dataclass
class BatchOutcome:
    rows_accepted: list[dict] = field(default_factory=list)
    rejects: list[tuple[str, str]] = field(default_factory=list)
    attempts_used: int = 1


_decoder = json.JSONDecoder()


def _salvage_objects(text: str, start: int) -> tuple[list, bool]:
    """Decode the complete leading elements of a (possibly truncated) array
    opening at ``text[start] == '['``.  Returns (elements, closed)."""
    items = []
    i = start + 1
    n = len(text)
    while True:
        while i < n and text[i] in " \t\r\n,":
            i += 1
        if i >= n:
            return items, False
        if text[i] == "]":
            return items, True
        try:
            obj, i = _decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            return items, False
        items.append(obj)


def _to_number(v):
    if isinstance(v, bool) or v is None:
        return None
    if isinstance(v, (int, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, str):
        try:
            x = float(v.strip())
        except ValueError:
            return None
        return x if math.isfinite(x) else None
    return None


def validate_record(obj: Any, schema: TableSchema) -> tuple[dict | None, str | None]:
    if not isinstance(obj, dict):
        return None, "element is not a JSON object"
    rec = {}
    for col in schema.columns:
        if col.name not in obj:
            return None, f"missing column {col.name}"
        v = obj[col.name]
        if v is None or (isinstance(v, str) and not v.strip()):
            return None, f"missing value for {col.name}"
        if col.kind == "categorical":
            code = col.match_code(v)
            if code is None:
                labels = {lab.lower(): c for c, lab in col.categories}
                code = labels.get(str(v).strip().lower())
            if code is None:
                return None, f"invalid code {v!r} for {col.name}"
            rec[col.name] = code
        else:
            x = _to_number(v)
            if x is None:
                return None, f"non-numeric value {v!r} for {col.name}"
            if col.kind == "integer":
                if x != round(x):
                    return None, f"non-integer value {v!r} for {col.name}"
                x = int(round(x))
            rec[col.name] = x
    return rec, None


def parse_batch(text: str, schema: TableSchema, expected_n: int) -> BatchOutcome:
    """Extract the first JSON array from a completion and validate its records."""
    out = BatchOutcome()
    elements = None
    truncated_from = None
    for m in re.finditer(r"\[", text):
        try:
            value, _ = _decoder.raw_decode(text, m.start())
        except json.JSONDecodeError:
            if truncated_from is None:
                items, closed = _salvage_objects(text, m.start())
                if items and not closed and isinstance(items[0], dict):
                    truncated_from = items
            continue
        if isinstance(value, list) and (not value or isinstance(value[0], dict)):
            elements = value
            break
    truncated = False
    if elements is None:
        if truncated_from is None:
            raise ParseError("no parseable JSON array in completion")
        elements = truncated_from
        truncated = True
    for obj in elements:
        rec, reason = validate_record(obj, schema)
        if rec is None:
            out.rejects.append((json.dumps(obj)[:200], reason))
        else:
            out.rows_accepted.append(rec)
    if truncated:
        out.rejects.append((text[-200:], "truncated array"))
    if len(out.rows_accepted) < expected_n:
        log.debug("batch yielded %d of %d requested rows", len(out.rows_accepted), expected_n)
    return out


# -- generation loop ----------------------------------------------------------

@dataclass(frozen=True)
class GenerationResult:
    table: DataTable
    log: dict


def batch_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _run_batch(backend, desc, schema, examples, gen: GenerationConfig, index: int, n: int) -> tuple[BatchOutcome, dict]:
    order = permute_columns(schema, batch_seed(gen.seed, index))
    prompt = build_prompt(desc, schema, examples if gen.include_examples else [], n, order)
    attempts = 0
    errors = []
    delay = getattr(backend, "retry_delay", 0.0)
    while True:
        attempts += 1
        try:
            text = backend.complete(prompt)
            outcome = parse_batch(text, schema, n)
            if outcome.rows_accepted:
                outcome.attempts_used = attempts
                entry = {
                    "batch": index,
                    "requested": n,
                    "accepted": len(outcome.rows_accepted),
                    "rejected": len(outcome.rejects),
                    "reject_reasons": sorted({r for _, r in outcome.rejects}),
                    "attempts": attempts,
                    "column_order": list(order),
                    "errors": errors,
                }
                return outcome, entry
            errors.append("zero valid rows")
        except ParseError as exc:
            errors.append(str(exc))
        except TransportError as exc:
            errors.append(str(exc))
            if not exc.retryable:
                raise GenerationError(f"batch {index}: {exc}", [], {"batch": index, "errors": errors}) from exc
        if attempts > backend.max_retries:
            raise GenerationError(
                f"batch {index} failed after {attempts} attempts: {errors[-1]}",
                [],
                {"batch": index, "attempts": attempts, "errors": errors},
            )
        if delay > 0:
            time.sleep(delay * 2 ** (attempts - 1))


def generate_dataset(
    backend,
    desc: DatabaseDescription,
    schema: TableSchema,
    gen: GenerationConfig,
    examples: Sequence[ExampleRow] = (),
) -> GenerationResult:
    """Accumulate ``gen.total_rows`` rows from batches of ``gen.batch_rows``.

    Each batch gets its own seeded column permutation and prompt.  Short
    batches are made up by further batches; only zero-yield batches retry.
    """
    rows: list[dict] = []
    entries: list[dict] = []
    next_index = 0
    pool = ThreadPoolExecutor(gen.workers) if gen.workers > 1 else None
    try:
        while len(rows) < gen.total_rows:
            missing = gen.total_rows - len(rows)
            n_batches = math.ceil(missing / gen.batch_rows)
            indices = list(range(next_index, next_index + n_batches))
            next_index += n_batches
            call = lambda i: _run_batch(backend, desc, schema, examples, gen, i, gen.batch_rows)  # noqa: E731
            results = []
            failure = None
            if pool is None:
                for i in indices:
                    try:
                        results.append(call(i))
                    except GenerationError as exc:
                        failure = exc
                        break
            else:
                futures = [pool.submit(call, i) for i in indices]
                for fut in futures:
                    try:
                        results.append(fut.result())
                    except GenerationError as exc:
                        failure = failure or exc
                if failure is not None:
                    # keep index order: only batches before the failed one count
                    bad = failure.log_data.get("batch")
                    results = [r for r in results if bad is None or r[1]["batch"] < bad]
            for outcome, entry in results:
                rows.extend(outcome.rows_accepted)
                entries.append(entry)
            if failure is not None:
                failure.rows = rows[: gen.total_rows]
                failure.log_data = _log_dict(gen, entries, failed=failure.log_data)
                raise failure
    finally:
        if pool is not None:
            pool.shutdown()
    table = DataTable.from_rows(schema, rows[: gen.total_rows])
    return GenerationResult(table, _log_dict(gen, entries))


def _log_dict(gen: GenerationConfig, entries: list[dict], failed: dict | None = None) -> dict:
    d = {
        "config": asdict(gen),
        "n_batches": len(entries),
        "n_requests": sum(e["attempts"] for e in entries) + (failed or {}).get("attempts", 0),
        "rows_accepted": sum(e["accepted"] for e in entries),
        "rows_rejected": sum(e["rejected"] for e in entries),
        "batches": entries,
    }
    if failed:
        d["failed_batch"] = failed
    return d


# -- mock backend -------------------------------------------------------------

@dataclass(frozen=True)
class NumericLaw:
    mean: float
    std: float
    integer: bool = False
    clip: tuple[float, float] | None = None


@dataclass(frozen=True)
class CategoricalLaw:
    probs: Mapping[Any, float]

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"category probabilities sum to {total}, expected 1")
        if any(p < 0 for p in self.probs.values()):
            raise ValueError("negative category probability")


@dataclass(frozen=True)
class MockBackendSpec:
    """Sampling law of the offline stand-in model.

    ``correlation`` couples the numeric columns listed in
    ``correlated`` through a Gaussian copula.
    """

    columns: Mapping[str, NumericLaw | CategoricalLaw]
    seed: int = 0
    correlated: tuple[str, ...] = ()
    correlation: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.correlation is not None:
            c = np.asarray(self.correlation, dtype=float)
            k = len(self.correlated)
            if c.shape != (k, k):
                raise ValueError("correlation shape does not match the correlated columns")
            if not np.allclose(c, c.T) or not np.allclose(np.diag(c), 1.0):
                raise ValueError("correlation must be symmetric with unit diagonal")
            for name in self.correlated:
                if not isinstance(self.columns.get(name), NumericLaw):
                    raise ValueError(f"correlated column {name} needs a numeric law")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MockBackendSpec":
        cols = {}
        for name, law in d["columns"].items():
            if "probs" in law:
                cols[name] = CategoricalLaw(dict(law["probs"]))
            else:
                clip = law.get("clip")
                cols[name] = NumericLaw(
                    float(law["mean"]), float(law["std"]), bool(law.get("integer", False)),
                    (float(clip[0]), float(clip[1])) if clip is not None else None,
                )
        corr = d.get("correlation")
        return cls(
            columns=cols,
            seed=int(d.get("seed", 0)),
            correlated=tuple(corr["columns"]) if corr else (),
            correlation=tuple(tuple(r) for r in corr["matrix"]) if corr else None,
        )

    def to_dict(self) -> dict:
        cols = {}
        for name, law in self.columns.items():
            if isinstance(law, CategoricalLaw):
                cols[name] = {"probs": {str(k): v for k, v in law.probs.items()}}
            else:
                cols[name] = {"mean": law.mean, "std": law.std, "integer": law.integer,
                              "clip": list(law.clip) if law.clip else None}
        d: dict[str, Any] = {"seed": self.seed, "columns": cols}
        if self.correlation is not None:
            d["correlation"] = {"columns": list(self.correlated), "matrix": [list(r) for r in self.correlation]}
        return d

    def sample_records(self, n: int, rng: np.random.Generator) -> list[dict]:
        z = {}
        if self.correlation is not None:
            factor = np.linalg.cholesky(np.asarray(self.correlation, dtype=float))
            draws = rng.standard_normal((n, len(self.correlated))) @ factor.T
            z = {name: draws[:, j] for j, name in enumerate(self.correlated)}
        cols = {}
        for name, law in self.columns.items():
            if isinstance(law, CategoricalLaw):
                codes = list(law.probs)
                p = np.array([law.probs[c] for c in codes], dtype=float)
                idx = rng.choice(len(codes), size=n, p=p / p.sum())
                cols[name] = [codes[i] for i in idx]
            else:
                zz = z[name] if name in z else rng.standard_normal(n)
                x = law.mean + law.std * zz
                if law.clip is not None:
                    x = np.clip(x, *law.clip)
                if law.integer:
                    cols[name] = [int(v) for v in np.round(x)]
                else:
                    cols[name] = [round(float(v), 4) for v in x]
        return [{name: cols[name][i] for name in self.columns} for i in range(n)]

    def sample_table(self, schema: TableSchema, n: int, seed: int | None = None) -> DataTable:
        rng = np.random.default_rng(self.seed if seed is None else seed)
        return DataTable.from_rows(schema, self.sample_records(n, rng))


_N_PATTERN = re.compile(r"Generate exactly (\d+)")


class MockBackend:
    """Offline backend answering prompts with JSON drawn from a known law.

    Each completion is seeded from the sampling-law seed, the prompt text and the
    number of times that prompt was seen, so results do not depend on the
    order in which concurrent batches reach the backend.
    """

    def __init__(self, spec: MockBackendSpec, max_retries: int = 3, retry_delay: float = 0.0):
        self.spec = spec
        self.max_retries = max_retries
        self.retry_delay = retry_delay
        self.n_requests = 0
        self._seen: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, prompt: PromptText) -> str:
        m = _N_PATTERN.search(prompt.rendered)
        n = int(m.group(1)) if m else prompt.n_rows_requested
        digest = hashlib.sha256(prompt.rendered.encode("utf-8")).digest()
        with self._lock:
            self.n_requests += 1
            count = self._seen.get(digest, 0)
            self._seen[digest] = count + 1
        key = [self.spec.seed, count, *np.frombuffer(digest[:16], dtype=np.uint32).tolist()]
        rng = np.random.default_rng(np.random.SeedSequence(key))
        records = self.spec.sample_records(n, rng)
        order = prompt.column_order or tuple(self.spec.columns)
        records = [{k: r[k] for k in order if k in r} for r in records]
        return json.dumps(records)

    def describe(self) -> dict:
        return {"kind": "mock", "spec": self.spec.to_dict(), "max_retries": self.max_retries}


def mock_backend(spec: MockBackendSpec, max_retries: int = 3) -> MockBackend:
    return MockBackend(spec, max_retries=max_retries)


class ScriptedBackend:
    """Replays a fixed list of completions (or raises listed exceptions)."""

    def __init__(self, responses: Sequence[str | Exception], max_retries: int = 3, cycle: bool = False):
        self.responses = list(responses)
        self.max_retries = max_retries
        self.retry_delay = 0.0
        self.cycle = cycle
        self.n_requests = 0
        self._lock = threading.Lock()

    def complete(self, prompt: PromptText) -> str:
        with self._lock:
            i = self.n_requests
            self.n_requests += 1
        if self.cycle:
            i %= len(self.responses)
        if i >= len(self.responses):
            raise TransportError("script exhausted", retryable=False)
        item = self.responses[i]
        if isinstance(item, Exception):
            raise item
        return item
