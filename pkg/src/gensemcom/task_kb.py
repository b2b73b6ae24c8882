"""Task knowledge base: route a free-text requirement to a predefined instruction.

The default embedder is feature hashing over lower-cased word tokens, so the
transmitter and receiver agree without any shared service. An HTTP sentence
encoder can be plugged in behind the same ``Embedder`` interface.
"""

from __future__ import annotations

import hashlib
import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

# Order here is the tie-break order ("lowest id first").
INSTRUCTION_IDS = ("RECONSTRUCT", "SEGMENT")

DEFAULT_MEMORY = (
    ("RECONSTRUCT", "reconstruct restore recover rebuild the original image picture photo "
                    "pixels with fine details edges colors and quality"),
    ("SEGMENT", "segment label classify every pixel into semantic classes regions objects "
                "categories and produce a segmentation mask map"),
)

_TOKEN = re.compile(r"[a-z0-9]+")
_STOPWORDS = frozenset("a an the this that these those of to in into on for with and or please "
                       "me my it its is are be at by from each all".split())


class TaskKBError(ValueError):
    pass


class EmbedderError(RuntimeError):
    """The external embedder could not produce vectors."""


@dataclass(frozen=True)
class TaskInstruction:
    id: str
    canonical_text: str

    def __post_init__(self):
        if not self.id or not self.canonical_text.strip():
            raise TaskKBError("instruction id and canonical text must be non-empty")

    @property
    def rank(self) -> tuple:
        if self.id in INSTRUCTION_IDS:
            return (0, INSTRUCTION_IDS.index(self.id), self.id)
        return (1, 0, self.id)


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def _check_text(text: str) -> str:
    if not isinstance(text, str) or not text.strip():
        raise TaskKBError("task requirement text is empty")
    return text


def _stem(tok: str) -> str:
    # plural folding only; keeps "pixels"/"pixel" and "categories"/"category" in one bucket
    if len(tok) > 4 and tok.endswith("ies"):
        return tok[:-3] + "y"
    if len(tok) > 3 and tok.endswith("s") and not tok.endswith("ss"):
        return tok[:-1]
    return tok


def tokenize(text: str) -> list[str]:
    return [_stem(t) for t in _TOKEN.findall(text.lower()) if t not in _STOPWORDS]


class HashingEmbedder:
    """Signed feature hashing of word tokens into ``dim`` buckets, L2-normalized.

    Uses blake2b rather than ``hash()`` so vectors are stable across processes.
    """

    def __init__(self, dim: int = 256):
        if dim < 8:
            raise TaskKBError("embedding dimension must be >= 8")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(_check_text(text))
        if not tokens:
            # text made only of stopwords/punctuation: fall back to raw lower-cased chunks
            tokens = text.lower().split()
        v = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            digest = hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest()
            n = int.from_bytes(digest, "little")
            v[n % self.dim] += 1.0 if (n >> 63) & 1 == 0 else -1.0
        norm = np.linalg.norm(v)
        if norm == 0:
            # every token collided and cancelled; deterministic non-zero fallback
            v[int.from_bytes(hashlib.blake2b(text.encode(), digest_size=4).digest(), "little") % self.dim] = 1.0
            norm = 1.0
        return v / norm


class HTTPEmbedder:
    """Client for a sentence-encoder service.

    Sends ``{"texts": [text]}`` as JSON and expects ``{"embeddings": [[...]]}``.
    """

    def __init__(self, url: str, timeout: float = 10.0):
        if not url:
            raise TaskKBError("HTTP embedder needs a URL")
        self.url = url
        self.timeout = timeout
        self.dim = None

    def embed(self, text: str) -> np.ndarray:
        body = json.dumps({"texts": [_check_text(text)]}).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
            v = np.asarray(payload["embeddings"][0], dtype=np.float64)
        except (urllib.error.URLError, OSError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise EmbedderError(f"embedder at {self.url} failed: {exc}") from exc
        if v.ndim != 1 or v.size < 8 or not np.all(np.isfinite(v)):
            raise EmbedderError(f"embedder at {self.url} returned an invalid vector")
        if self.dim is None:
            self.dim = v.size
        elif v.size != self.dim:
            raise EmbedderError(f"embedder dimension changed from {self.dim} to {v.size}")
        return v


def make_embedder(kind: str = "hashing", dim: int = 256, url: str = "") -> Embedder:
    if kind == "hashing":
        return HashingEmbedder(dim)
    if kind == "http":
        return HTTPEmbedder(url)
    raise TaskKBError(f"unknown embedder {kind!r}")


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise TaskKBError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise TaskKBError("cosine similarity of a zero vector is undefined")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def read_memory(path: str | Path) -> list[TaskInstruction]:
    """Parse a memory file: one ``<ID><TAB><canonical text>`` per line."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise TaskKBError(f"{path}:{lineno}: expected '<ID><TAB><text>'")
        ident, text = line.split("\t", 1)
        out.append(TaskInstruction(ident.strip(), text.strip()))
    return out


def write_memory(path: str | Path, memory: Sequence[TaskInstruction]) -> None:
    Path(path).write_text("".join(f"{t.id}\t{t.canonical_text}\n" for t in memory), encoding="utf-8")


def default_memory() -> list[TaskInstruction]:
    return [TaskInstruction(i, t) for i, t in DEFAULT_MEMORY]


class TaskKB:
    """Memory of instructions plus the similarity computing module.

    Instruction embeddings are cached at construction; the object is read-only afterwards.
    """

    def __init__(self, memory: Sequence[TaskInstruction] | None = None, embedder: Embedder | None = None):
        memory = list(default_memory() if memory is None else memory)
        if not memory:
            raise TaskKBError("task memory is empty")
        ids = [t.id for t in memory]
        if len(set(ids)) != len(ids):
            raise TaskKBError(f"duplicate instruction ids in memory: {ids}")
        self.memory = tuple(sorted(memory, key=lambda t: t.rank))
        self.embedder = embedder or HashingEmbedder()
        self._vectors = [self.embedder.embed(t.canonical_text) for t in self.memory]

    @classmethod
    def from_config(cls, cfg) -> "TaskKB":
        memory = read_memory(cfg.memory) if cfg.memory else None
        return cls(memory, make_embedder(cfg.embedder, cfg.dim, cfg.embedder_url))

    def scores(self, requirement: str) -> list[tuple[TaskInstruction, float]]:
        """Every instruction with its similarity, best first (ties by instruction order)."""
        v = self.embedder.embed(_check_text(requirement))
        scored = [(t, cosine_similarity(v, tv)) for t, tv in zip(self.memory, self._vectors)]
        # stable sort keeps memory order on ties, which is the lowest-id rule
        return sorted(scored, key=lambda p: -p[1])

    def select(self, requirement: str) -> TaskInstruction:
        return self.scores(requirement)[0][0]

    def get(self, instruction_id: str) -> TaskInstruction:
        for t in self.memory:
            if t.id == instruction_id:
                return t
        raise TaskKBError(f"unknown instruction {instruction_id!r}")


def select_instruction(requirement: str, memory: Sequence[TaskInstruction], embedder: Embedder) -> TaskInstruction:
    return TaskKB(memory, embedder).select(requirement)
