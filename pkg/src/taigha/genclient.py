"""Item generation and text embedding providers.

Two capabilities only: ``generate`` candidate items for one construct facet
and ``embed`` texts. ``MockProvider`` is a deterministic offline stand-in;
``HttpProvider`` speaks a small JSON-over-HTTPS contract:

    POST {endpoint}/generate  {"model", "prompt", "construct", "facet", "n", "exclude"}
        -> {"items": [{"text": str, "construct": str, "facet": str}, ...]}
    POST {endpoint}/embed     {"model", "texts": [...]}
        -> {"embeddings": [[float, ...], ...]}
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx
import numpy as np

from .instrument import read_text


SUBSCALES = ("trust", "distrust")
FACETS = ("cognitive", "affective")


class ProviderError(RuntimeError):
    pass


class MalformedResponseError(ProviderError):
    """Provider answered, but not with something we can use. ``raw`` keeps the payload."""

    def __init__(self, message: str, raw):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ConstructSpec:
    constructs: Mapping[str, Mapping[str, str]]
    target_per_facet: int = 15
    domain: str = ""

    def __post_init__(self):
        for c, texts in self.constructs.items():
            for key in ("definition",) + FACETS:
                if not str(texts.get(key, "")).strip():
                    raise ValueError(f"construct {c!r} lacks a {key} text")

    def cells(self) -> list[tuple[str, str]]:
        return [(c, f) for c in self.constructs for f in FACETS]

    def prompt(self, construct: str, facet: str, n: int) -> str:
        # scaffolding around the construct texts is our own wording
        c = self.constructs[construct]
        return (
            f"Context: {self.domain}.\n"
            f"Construct '{construct}' is defined as: {c['definition']}.\n"
            f"Write {n} distinct first-person questionnaire statements for the {facet} facet, "
            f"which measures: {c[facet]}.\n"
            "Each statement must be answerable on a 5-point agreement scale and mention the AI's advice. "
            'Reply as JSON: {"items": [{"text": ..., "construct": ..., "facet": ...}]}.'
        )

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConstructSpec":
        return cls(
            constructs={k: dict(v) for k, v in data["constructs"].items()},
            target_per_facet=int(data.get("target_per_facet", 15)),
            domain=data.get("domain", ""),
        )

    @classmethod
    def taigha(cls) -> "ConstructSpec":
        return cls.from_dict(json.loads(read_text("taigha_constructs.json")))


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str = ""
    model: str = ""
    credential_env: str = "TAIGHA_PROVIDER_KEY"
    timeout: float = 30.0
    retries: int = 3
    batch_size: int = 64
    max_in_flight: int = 4
    cache_dir: str | None = None

    def credential(self) -> str | None:
        return os.environ.get(self.credential_env)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ProviderConfig":
        if any(k in data for k in ("api_key", "key", "token", "credential")):
            raise ValueError("credentials must come from the environment; set credential_env instead")
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass(frozen=True)
class GenerationRequest:
    construct: str
    facet: str
    n: int
    prompt: str
    exclude: tuple[str, ...] = ()


@dataclass(frozen=True)
class GeneratedItem:
    text: str
    construct: str
    facet: str


class Provider(Protocol):
    retries: int

    def generate(self, request: GenerationRequest) -> list[dict]: ...

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _normalise(text: str) -> str:
    return " ".join(text.lower().split())


def _validate_items(raw) -> list[dict]:
    payload = raw
    # nothing partially parsed gets through: the whole batch is rejected
    if not isinstance(payload, dict) or not isinstance(payload.get("items"), list):
        raise MalformedResponseError("response lacks an 'items' list", raw)
    out = []
    for entry in payload["items"]:
        if not isinstance(entry, dict) or not all(isinstance(entry.get(k), str) for k in ("text", "construct", "facet")):
            raise MalformedResponseError("item entries need string text, construct and facet", raw)
        if not entry["text"].strip():
            raise MalformedResponseError("empty item text", raw)
        out.append({k: entry[k] for k in ("text", "construct", "facet")})
    return out


def generate_items(spec: ConstructSpec, n: int, provider: Provider) -> list[GeneratedItem]:
    """Exactly ``n`` items spread round-robin over construct x facet cells.

    Duplicate texts (case and whitespace insensitive) are dropped and
    replacements requested, up to ``provider.retries`` extra rounds.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    cells = spec.cells()
    quota = {cell: n // len(cells) + (k < n % len(cells)) for k, cell in enumerate(cells)}
    got: dict[tuple[str, str], list[GeneratedItem]] = {cell: [] for cell in cells}
    seen: set[str] = set()
    for attempt in range(provider.retries + 1):
        short = {cell: quota[cell] - len(got[cell]) for cell in cells if len(got[cell]) < quota[cell]}
        if not short:
            break
        for (c, f), need in short.items():
            req = GenerationRequest(c, f, need, spec.prompt(c, f, need), tuple(sorted(seen)))
            for entry in _validate_items(provider.generate(req)):
                key = _normalise(entry["text"])
                if key in seen or len(got[(c, f)]) >= quota[(c, f)]:
                    continue
                seen.add(key)
                got[(c, f)].append(GeneratedItem(entry["text"].strip(), c, f))
    missing = {f"{c}/{f}": quota[(c, f)] - len(got[(c, f)]) for c, f in cells if len(got[(c, f)]) < quota[(c, f)]}
    if missing:
        raise ProviderError(f"could not obtain enough distinct items after retries: {missing}")
    # back into round-robin order; quotas were dealt the same way
    out, pos = [], {cell: 0 for cell in cells}
    for k in range(n):
        cell = cells[k % len(cells)]
        out.append(got[cell][pos[cell]])
        pos[cell] += 1
    return out


def embed_items(texts: Sequence[str], provider: Provider) -> np.ndarray:
    texts = list(texts)
    if not texts:
        raise ValueError("no texts to embed")
    E = np.asarray(provider.embed(texts), dtype=float)
    if E.ndim != 2 or E.shape[0] != len(texts):
        raise ProviderError(f"expected {len(texts)} embedding rows, got shape {E.shape}")
    if not np.all(np.isfinite(E)):
        raise ProviderError("non-finite embedding values")
    return E


# ---------------------------------------------------------------- mock

_OPENERS = {
    ("trust", "cognitive"): [
        "I expect that", "I believe that", "I am confident that", "I think that",
        "It seems likely to me that", "I anticipate that", "I am convinced that", "I assume that",
    ],
    ("trust", "affective"): [
        "I feel reassured because", "I feel at ease knowing that", "It comforts me that",
        "I feel calm when I think that", "I feel safe because", "It gives me peace of mind that",
        "I feel relieved that", "I feel secure knowing that",
    ],
    ("distrust", "cognitive"): [
        "I expect that", "I suspect that", "I believe that", "I think that",
        "I am concerned that", "It seems likely to me that", "I anticipate that", "I fear that",
    ],
    ("distrust", "affective"): [
        "I feel uneasy because", "I feel anxious that", "It worries me that",
        "I feel nervous knowing that", "I feel uncomfortable because", "It unsettles me that",
        "I feel tense thinking that", "It troubles me that",
    ],
}
_ENDINGS = {
    "trust": [
        "following the AI's advice will improve my health",
        "the AI's advice will help me get better",
        "acting on this advice will lead to a good outcome",
        "the AI's recommendation is the right step for me",
        "this advice will keep my health on track",
        "doing what the AI suggests will benefit me",
        "the AI's advice will help me handle my symptoms",
        "following this recommendation will work out well for me",
    ],
    "distrust": [
        "following the AI's advice could harm my health",
        "the AI's advice might make my condition worse",
        "acting on this advice could lead to a bad outcome",
        "the AI's recommendation is the wrong step for me",
        "this advice could put my health at risk",
        "doing what the AI suggests could hurt me",
        "the AI's advice could cause me to miss something serious",
        "following this recommendation could end badly for me",
    ],
}


def _text_seed(*parts) -> int:
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


class MockProvider:
    """Deterministic offline provider.

    Generated texts are combinations from fixed phrase banks, selected by a
    generator seeded from (seed, construct, facet). Embeddings place every
    registered text at a weighted mix of construct centroids plus
    hash-seeded jitter, so identical texts give identical rows.
    """

    def __init__(self, dim: int = 384, seed: int = 0, jitter: float = 0.05, retries: int = 3):
        if dim < 2:
            raise ValueError("embedding dimension must be at least 2")
        self.dim = dim
        self.seed = seed
        self.jitter = jitter
        self.retries = retries
        self._weights: dict[str, dict[str, float]] = {}
        self._alias: dict[str, tuple[str, float]] = {}

    def centroid(self, construct: str) -> np.ndarray:
        v = np.random.default_rng(_text_seed("centroid", self.seed, construct)).standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def register(self, text: str, weights: Mapping[str, float]) -> None:
        self._weights[text] = dict(weights)

    def register_alias(self, text: str, original: str, jitter: float = 0.01) -> None:
        """Embed ``text`` as a near copy of ``original``."""
        self._alias[text] = (original, jitter)

    def generate(self, request: GenerationRequest) -> dict:
        key = (request.construct, request.facet)
        if key not in _OPENERS:
            raise ProviderError(f"mock has no phrase bank for {key}")
        rng = np.random.default_rng(_text_seed("generate", self.seed, *key))
        combos = [f"{o} {e}." for o in _OPENERS[key] for e in _ENDINGS[request.construct]]
        order = rng.permutation(len(combos))
        excluded = {_normalise(t) for t in request.exclude}
        items = []
        for idx in order:
            text = combos[idx]
            if _normalise(text) in excluded:
                continue
            items.append({"text": text, "construct": request.construct, "facet": request.facet})
            self.register(text, {request.construct: 1.0})
            if len(items) == request.n:
                break
        return {"items": items}

    def _row(self, text: str) -> np.ndarray:
        if text in self._alias:
            original, jit = self._alias[text]
            noise = np.random.default_rng(_text_seed("alias", self.seed, text)).standard_normal(self.dim)
            return self._row(original) + jit * noise
        v = np.zeros(self.dim)
        for c, w in self._weights.get(text, {}).items():
            v += w * self.centroid(c)
        noise = np.random.default_rng(_text_seed("embed", self.seed, text)).standard_normal(self.dim)
        return v + self.jitter * noise

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.vstack([self._row(t) for t in texts])


@dataclass
class GenieFixture:
    items: list[str]
    texts: list[str]
    theory: dict[str, str]
    embeddings: np.ndarray
    duplicates: list[str] = field(default_factory=list)
    unstable: list[str] = field(default_factory=list)


def genie_fixture(per_construct: int = 12, seed: int = 0, dim: int = 96, jitter: float = 0.08) -> GenieFixture:
    """Two clean construct clusters, two near-duplicate items and two items mixing both centroids."""
    provider = MockProvider(dim=dim, seed=seed, jitter=jitter)
    spec = ConstructSpec.taigha()
    generated = generate_items(spec, 2 * per_construct, provider)
    texts = [g.text for g in generated]
    theory_by_text = {g.text: g.construct for g in generated}
    dup_texts = []
    for construct in SUBSCALES:
        original = next(g.text for g in generated if g.construct == construct)
        dup = "Honestly, " + original[0].lower() + original[1:]
        provider.register_alias(dup, original)
        dup_texts.append(dup)
        theory_by_text[dup] = construct
    mixed = [
        "I am unsure whether following the AI's advice will help or harm me.",
        "I have mixed feelings about acting on what the AI suggests.",
    ]
    for t, home in zip(mixed, SUBSCALES):
        provider.register(t, {"trust": 0.5, "distrust": 0.5})
        theory_by_text[t] = home
    texts = texts + dup_texts + mixed
    ids = [f"g{k + 1:02d}" for k in range(len(texts))]
    return GenieFixture(
        items=ids,
        texts=texts,
        theory={i: theory_by_text[t] for i, t in zip(ids, texts)},
        embeddings=embed_items(texts, provider),
        duplicates=ids[2 * per_construct: 2 * per_construct + 2],
        unstable=ids[-2:],
    )


# ---------------------------------------------------------------- http


class HttpProvider:
    """JSON-over-HTTPS provider with retries, batching and an optional disk cache."""

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None):
        if not config.endpoint:
            raise ValueError("HttpProvider needs an endpoint")
        self.config = config
        self.retries = config.retries
        self._transport = transport

    def _client(self) -> httpx.Client:
        headers = {"Content-Type": "application/json"}
        key = self.config.credential()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return httpx.Client(
            base_url=self.config.endpoint, headers=headers, timeout=self.config.timeout, transport=self._transport
        )

    def _cache_file(self, route: str, body: dict) -> Path | None:
        if not self.config.cache_dir:
            return None
        digest = hashlib.sha256(json.dumps([route, body], sort_keys=True).encode("utf-8")).hexdigest()
        return Path(self.config.cache_dir) / f"{digest}.json"

    def _post(self, route: str, body: dict):
        cached = self._cache_file(route, body)
        if cached is not None and cached.exists():
            return json.loads(cached.read_text(encoding="utf-8"))
        last: Exception | None = None
        with self._client() as client:
            for attempt in range(self.config.retries + 1):
                try:
                    resp = client.post(route, json=body)
                except httpx.TransportError as exc:
                    last = exc
                else:
                    if resp.status_code < 500 and resp.status_code != 429:
                        if resp.status_code >= 400:
                            raise ProviderError(f"{route} rejected the request: HTTP {resp.status_code}")
                        try:
                            payload = resp.json()
                        except ValueError:
                            raise MalformedResponseError(f"{route} returned non-JSON", resp.text) from None
                        if cached is not None:
                            cached.parent.mkdir(parents=True, exist_ok=True)
                            cached.write_text(json.dumps(payload), encoding="utf-8")
                        return payload
                    last = ProviderError(f"HTTP {resp.status_code}")
                if attempt < self.config.retries:
                    time.sleep(min(0.25 * 2**attempt, 4.0))
        raise ProviderError(f"{route} failed after {self.config.retries + 1} attempts: {last}")

    def generate(self, request: GenerationRequest):
        body = {
            "model": self.config.model,
            "prompt": request.prompt,
            "construct": request.construct,
            "facet": request.facet,
            "n": request.n,
            "exclude": list(request.exclude),
        }
        return self._post("/generate", body)

    def _embed_batch(self, batch: list[str]) -> np.ndarray:
        payload = self._post("/embed", {"model": self.config.model, "texts": batch})
        rows = payload.get("embeddings") if isinstance(payload, dict) else None
        if not isinstance(rows, list) or len(rows) != len(batch):
            raise MalformedResponseError("response lacks one embedding per text", payload)
        try:
            E = np.array(rows, dtype=float)
        except (TypeError, ValueError):
            raise MalformedResponseError("embedding rows are not numeric", payload) from None
        if E.ndim != 2:
            raise ProviderError("embedding dimension differs across rows")
        return E

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        size = max(1, self.config.batch_size)
        batches = [texts[k:k + size] for k in range(0, len(texts), size)]
        with ThreadPoolExecutor(max_workers=max(1, self.config.max_in_flight)) as pool:
            parts = list(pool.map(self._embed_batch, batches))
        dims = {p.shape[1] for p in parts}
        if len(dims) > 1:
            raise ProviderError(f"embedding dimension differs across batches: {sorted(dims)}")
        return np.vstack(parts)


def make_provider(kind: str, config: ProviderConfig | None = None, seed: int = 0) -> Provider:
    if kind == "mock":
        return MockProvider(seed=seed)
    if kind == "http":
        return HttpProvider(config or ProviderConfig())
    raise ValueError(f"unknown provider {kind!r}")
