"""Prompt conditioning: a closed lowercase vocabulary, a stopword-dropping
tokenizer, and a small trainable embedding head (token table -> mean pool ->
linear projection).

Token embeddings are warm-started from a PPMI co-occurrence factorization of
a tiny fixed report corpus. That corpus is where concept relations that never
appear in image training come from: "cardiomegaly" co-occurs with "enlarged",
"large" and "heart", so the never-imaged token starts near the directions the
diffusion model later learns from heart-size descriptors on healthy scans.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numerics import SeededRng, jacobi_eigh

EMBED_DIM = 32

STOPWORDS = frozenset("a an and at both in no of on the to with".split())

_CONTENT_WORDS = [
    "cardiomegaly", "carcinoma", "chest", "clusters", "diffuse", "enlarged",
    "focal", "haze", "healthy", "heart", "large", "left", "lung", "lungs",
    "mild", "normal", "opacity", "pneumonia", "right", "scan", "severe",
    "small", "viral", "x-ray",
]

# the fixed report corpus used for embedding warmup; class words appear in
# context lines so related modifiers land near each other
REPORT_LINES = [
    "normal chest scan",
    "healthy chest x-ray",
    "normal chest x-ray",
    "healthy lungs normal heart",
    "normal chest scan small heart",
    "normal chest scan large heart",
    "cardiomegaly enlarged heart",
    "cardiomegaly large heart",
    "cardiomegaly enlarged large heart",
    "lung opacity left lung",
    "lung opacity right lung",
    "large lung opacity left",
    "small lung opacity right",
    "carcinoma focal lung opacity",
    "focal opacity carcinoma",
    "diffuse haze lungs",
    "severe diffuse haze",
    "mild diffuse haze lungs",
    "viral pneumonia focal clusters",
    "viral pneumonia lungs",
    "focal clusters pneumonia",
    "pneumonia chest scan",
]


@dataclass(frozen=True)
class Vocab:
    tokens: tuple

    @property
    def null_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            return self.unk_id

    def to_json(self) -> str:
        return json.dumps(list(self.tokens))

    @staticmethod
    def from_json(s: str) -> "Vocab":
        return Vocab(tuple(json.loads(s)))


def default_vocab() -> Vocab:
    tokens = ("<null>", "<unk>") + tuple(_CONTENT_WORDS)
    if len(tokens) > 64:
        raise ValueError("vocabulary exceeds 64 tokens")
    return Vocab(tokens)


_PUNCT = str.maketrans("", "", ".,;:!?()[]\"'")


def tokenize(prompt: str, vocab: Vocab, drop_stopwords: bool = True) -> list:
    """Lowercase, split, strip punctuation, drop stopwords, map to ids.

    Unknown content words map to <unk>; a prompt with no content words maps
    to [null_id], i.e. the unconditional token.
    """
    ids = []
    for word in prompt.lower().split():
        word = word.translate(_PUNCT)
        if not word:
            continue
        if drop_stopwords and word in STOPWORDS:
            continue
        ids.append(vocab.id_of(word))
    if not ids:
        return [vocab.null_id]
    return ids


def ppmi_matrix(lines, vocab: Vocab) -> np.ndarray:
    """Positive pointwise mutual information over whole-line windows."""
    v = len(vocab)
    counts = np.zeros((v, v))
    for line in lines:
        ids = sorted(set(tokenize(line, vocab)))
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                counts[a, b] += 1.0
                counts[b, a] += 1.0
    total = counts.sum()
    if total == 0:
        return counts
    p_joint = counts / total
    p_tok = counts.sum(axis=1) / total
    with np.errstate(divide="ignore", invalid="ignore"):
        pmi = np.log(p_joint / np.outer(p_tok, p_tok))
    return np.where(np.isfinite(pmi), np.maximum(pmi, 0.0), 0.0)


def cooccurrence_embeddings(lines, vocab: Vocab, dim: int = EMBED_DIM) -> np.ndarray:
    """PPMI co-occurrence matrix factorized by eigendecomposition.

    Window is the whole line. Rows are scaled so present tokens average unit
    norm; tokens absent from the corpus get zero rows.
    """
    v = len(vocab)
    ppmi = ppmi_matrix(lines, vocab)
    if ppmi.sum() == 0:
        return np.zeros((v, dim))
    w, vecs = jacobi_eigh(ppmi)
    order = np.argsort(w)[::-1]  # largest (most shared structure) first
    keep = [i for i in order if w[i] > 1e-9][:dim]
    emb = np.zeros((v, dim))
    for col, i in enumerate(keep):
        emb[:, col] = vecs[:, i] * np.sqrt(w[i])
    present = np.abs(emb).sum(axis=1) > 0
    if present.any():
        mean_norm = np.linalg.norm(emb[present], axis=1).mean()
        if mean_norm > 0:
            emb /= mean_norm
    return emb


def retie_unseen_rows(params: "TextParams", vocab: Vocab, seen_ids,
                      lines=REPORT_LINES) -> list:
    """Rebuild embedding rows of tokens never seen in training labels as
    PPMI-weighted averages of the trained rows they co-occur with.

    Training moves the seen rows away from the warm-start geometry, which
    strands never-paired tokens in the stale init space. A frozen full-text
    encoder would carry related terms along; for a closed vocabulary this
    projection is the equivalent. Rescaled to the weighted mean norm of the
    contributors so guidance strength is comparable to a trained prompt.
    Returns the re-tied token ids."""
    seen = set(int(i) for i in seen_ids)
    ppmi = ppmi_matrix(lines, vocab)
    retied = []
    for tok in range(len(vocab)):
        if tok in seen or tok == vocab.null_id:
            continue
        w = np.array([ppmi[tok, c] if c in seen else 0.0
                      for c in range(len(vocab))])
        if w.sum() <= 0:
            continue
        w /= w.sum()
        rows = params.embedding.astype(np.float64)
        blend = w @ rows
        norms = np.linalg.norm(rows, axis=1)
        target = float(w @ norms)
        scale = target / max(float(np.linalg.norm(blend)), 1e-12)
        params.embedding[tok] = (blend * scale).astype(params.embedding.dtype)
        retied.append(tok)
    return retied


@dataclass
class TextParams:
    embedding: np.ndarray  # (V, dim) float32
    proj: np.ndarray  # (dim, dim) float32
    bias: np.ndarray  # (dim,) float32

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]


@dataclass
class TextGrads:
    embedding: np.ndarray
    proj: np.ndarray
    bias: np.ndarray


def init_text_params(vocab: Vocab, rng: SeededRng, dim: int = EMBED_DIM,
                     warmup_lines=REPORT_LINES) -> TextParams:
    """Warm-started token table, identity projection, zero bias.

    The null token row starts at zero (it is learned via conditioning
    dropout); corpus-absent tokens get small noise so they are trainable.
    """
    emb = cooccurrence_embeddings(warmup_lines, vocab, dim) if warmup_lines else np.zeros((len(vocab), dim))
    noise = 0.02 * rng.normal((len(vocab), dim))
    absent = np.abs(emb).sum(axis=1) == 0
    emb = emb + noise * absent[:, None]
    emb[vocab.null_id] = 0.0
    return TextParams(
        embedding=emb.astype(np.float32),
        proj=np.eye(dim, dtype=np.float32),
        bias=np.zeros(dim, dtype=np.float32),
    )


def embed_ids(params: TextParams, ids) -> np.ndarray:
    """Condition vector for one token-id list: mean pool then project."""
    h = params.embedding[np.asarray(ids, dtype=int)].mean(axis=0)
    return h @ params.proj + params.bias


def embed_batch(params: TextParams, batch_ids) -> np.ndarray:
    return np.stack([embed_ids(params, ids) for ids in batch_ids])


def null_condition(params: TextParams) -> np.ndarray:
    return embed_ids(params, [0])


def zero_text_grads(params: TextParams) -> TextGrads:
    return TextGrads(
        embedding=np.zeros_like(params.embedding),
        proj=np.zeros_like(params.proj),
        bias=np.zeros_like(params.bias),
    )


def embed_backward(params: TextParams, batch_ids, grad_out: np.ndarray,
                   grads: TextGrads) -> None:
    """Accumulate gradients of the conditioning head into grads.

    grad_out is (B, dim), the loss gradient at each example's condition
    vector; token rows receive 1/n of the pooled gradient each.
    """
    for ids, g in zip(batch_ids, grad_out):
        ids = np.asarray(ids, dtype=int)
        h = params.embedding[ids].mean(axis=0)
        grads.proj += np.outer(h, g)
        grads.bias += g
        gh = params.proj @ g
        np.add.at(grads.embedding, ids, (gh / len(ids)).astype(params.embedding.dtype))
