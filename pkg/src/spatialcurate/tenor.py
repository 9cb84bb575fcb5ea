"""Token-order injection in text-image attention, as plain numpy.

Three modes:

``none``
    Vanilla attention; image queries attend over text keys (cross-attention),
    or over the joint image+text sequence when ``joint=True``.
``unet_k``
    Cross-attention with a sinusoidal position code added to every text key.
``mmdit_qk``
    Joint attention over image and text tokens, with the code added to both the
    text queries and the text keys.

The code is added after the key/query projections, so it is identical at every
attention site that shares a head dimension.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("none", "unet_k", "mmdit_qk")


def sinusoidal_pe(position: int, dim: int) -> np.ndarray:
    if dim % 2:
        raise ValueError(f"dim must be even, got {dim}")
    if position < 0:
        raise ValueError(f"position must be non-negative, got {position}")
    i = np.arange(dim // 2)
    angle = position / np.power(10000.0, 2 * i / dim)
    out = np.empty(dim)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


def sinusoidal_table(positions, dim: int) -> np.ndarray:
    positions = np.asarray(positions)
    if positions.size == 0:
        return np.zeros((0, dim))
    return np.stack([sinusoidal_pe(int(p), dim) for p in positions])


@dataclass(frozen=True)
class Projections:
    """Fixed projection matrices standing in for trained attention weights."""

    wq_img: np.ndarray
    wk_img: np.ndarray
    wv_img: np.ndarray
    wq_txt: np.ndarray
    wk_txt: np.ndarray
    wv_txt: np.ndarray

    @property
    def head_dim(self) -> int:
        return self.wk_txt.shape[1]

    @classmethod
    def random(cls, img_dim: int, txt_dim: int, head_dim: int, seed: int = 0) -> "Projections":
        if head_dim % 2:
            raise ValueError("head_dim must be even")
        rng = np.random.default_rng(seed)
        mk = lambda d: rng.standard_normal((d, head_dim)) / np.sqrt(d)
        return cls(mk(img_dim), mk(img_dim), mk(img_dim), mk(txt_dim), mk(txt_dim), mk(txt_dim))


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attention_with_injection(
    image_tokens: np.ndarray,
    text_tokens: np.ndarray,
    mode: str,
    proj: Projections,
    positions=None,
    pe_scale: float = 1.0,
    joint: bool | None = None,
    return_weights: bool = False,
):
    """softmax(Q K^T / sqrt(d)) V for the image tokens, with position codes per ``mode``.

    ``positions`` defaults to ``0..n_text-1``. Returns the image-token outputs,
    and the attention weights when ``return_weights`` is set.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    image_tokens = np.atleast_2d(np.asarray(image_tokens, dtype=np.float64))
    text_tokens = np.atleast_2d(np.asarray(text_tokens, dtype=np.float64))
    if image_tokens.shape[1] != proj.wq_img.shape[0]:
        raise ValueError(f"image dim {image_tokens.shape[1]} != projection input {proj.wq_img.shape[0]}")
    if text_tokens.shape[1] != proj.wk_txt.shape[0]:
        raise ValueError(f"text dim {text_tokens.shape[1]} != projection input {proj.wk_txt.shape[0]}")
    if not (np.all(np.isfinite(image_tokens)) and np.all(np.isfinite(text_tokens))):
        raise ValueError("token embeddings must be finite")
    if joint is None:
        joint = mode == "mmdit_qk"
    if mode == "unet_k" and joint:
        raise ValueError("unet_k is a cross-attention mode")
    if mode == "mmdit_qk" and not joint:
        raise ValueError("mmdit_qk is a joint-attention mode")

    n_txt, d = text_tokens.shape[0], proj.head_dim
    if positions is None:
        positions = np.arange(n_txt)
    if len(positions) != n_txt:
        raise ValueError("positions must match the number of text tokens")
    pe = pe_scale * sinusoidal_table(positions, d)

    q_img = image_tokens @ proj.wq_img
    k_txt = text_tokens @ proj.wk_txt
    v_txt = text_tokens @ proj.wv_txt
    if mode in ("unet_k", "mmdit_qk"):
        k_txt = k_txt + pe

    if joint:
        q_txt = text_tokens @ proj.wq_txt
        if mode == "mmdit_qk":
            q_txt = q_txt + pe
        q = np.vstack([q_img, q_txt])
        k = np.vstack([image_tokens @ proj.wk_img, k_txt])
        v = np.vstack([image_tokens @ proj.wv_img, v_txt])
    else:
        q, k, v = q_img, k_txt, v_txt

    weights = softmax_rows(q @ k.T / np.sqrt(d))
    out = (weights @ v)[: image_tokens.shape[0]]
    if return_weights:
        return out, weights
    return out


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<44} {self.measured:.3e}  ({self.bound})"


def property_suite(seed: int = 0, n_img: int = 6, n_txt: int = 7, dims=(12, 10, 16)) -> list[CheckResult]:
    """Order-sensitivity checks on random (but fixed) inputs.

    Text tokens are distinct, so a permutation of them is a reordering of the
    same set: plain attention must not notice it, injected attention must.
    """
    img_dim, txt_dim, head = dims
    rng = np.random.default_rng(seed)
    proj = Projections.random(img_dim, txt_dim, head, seed=seed + 1)
    img = rng.standard_normal((n_img, img_dim))
    txt = rng.standard_normal((n_txt, txt_dim))
    perm = np.roll(np.arange(n_txt), 1)
    res = []

    for mode, joint in (("none", False), ("none", True)):
        a = attention_with_injection(img, txt, mode, proj, joint=joint)
        b = attention_with_injection(img, txt[perm], mode, proj, joint=joint)
        diff = float(np.max(np.abs(a - b)))
        tag = "joint" if joint else "cross"
        res.append(CheckResult(f"none/{tag} permutation invariance max|diff|", diff < 1e-12, diff, "< 1e-12"))

    for mode in ("unet_k", "mmdit_qk"):
        a = attention_with_injection(img, txt, mode, proj)
        b = attention_with_injection(img, txt[perm], mode, proj)
        diff = float(np.linalg.norm(a - b))
        res.append(CheckResult(f"{mode} order sensitivity ||diff||", diff > 1e-3, diff, "> 1e-3"))

    for mode in MODES:
        _, w = attention_with_injection(img, txt, mode, proj, return_weights=True)
        dev = float(np.max(np.abs(w.sum(axis=1) - 1.0)))
        res.append(CheckResult(f"{mode} softmax row sums |sum-1|", dev < 1e-12, dev, "< 1e-12"))

    for mode, joint in (("unet_k", False), ("mmdit_qk", True)):
        base = attention_with_injection(img, txt, "none", proj, joint=joint)
        zero = attention_with_injection(img, txt, mode, proj, pe_scale=0.0)
        diff = float(np.max(np.abs(base - zero)))
        res.append(CheckResult(f"{mode} zero-code collapse to none max|diff|", diff == 0.0, diff, "== 0"))
    return res
