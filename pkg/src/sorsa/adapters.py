"""Linear-layer parameterizations: SVD-split adapter, LoRA, PiSSA, full update.

The SVD-split adapter keeps the top-r singular triplet of the pre-trained
weight as three separate trainable factors (u_p, s_p, v_p) and folds the
remaining triplets into a frozen dense residual w_r.  LoRA adds a zero-
initialized low-rank product to the frozen base; PiSSA trains the top-r
part as a two-factor product over the same frozen residual.  Every
parameterization reproduces the pre-trained weight exactly at
initialization, so step 0 of any training run starts from the same model.

s_p is an unconstrained vector: it may drift negative during training and
nothing here clamps it, so it coincides with the singular values of the
principal weight only while the factors stay orthonormal (spectral
measurements therefore always re-decompose the materialized weight).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import rng
from .linalg import (
    RankRangeError,
    ShapeError,
    check_matrix,
    format_value,
    frobenius_norm,
    matrix_from_csv,
    svd,
    truncate,
)


@dataclass
class SorsaAdapter:
    """Trainable (u_p, s_p, v_p) over a frozen dense residual w_r."""

    u_p: np.ndarray  # m x r
    s_p: np.ndarray  # r
    v_p: np.ndarray  # n x r
    w_r: np.ndarray  # m x n, frozen
    r: int
    seed: int = 0


@dataclass
class LoraAdapter:
    """Frozen base w_0 plus the zero-at-init product b @ a."""

    w_0: np.ndarray  # m x n, frozen
    a: np.ndarray  # r x n, Gaussian std 1/sqrt(r)
    b: np.ndarray  # m x r, zeros at init
    r: int
    seed: int = 0


@dataclass
class PissaAdapter:
    """Trainable product a @ b of the top-r triplet over a frozen residual."""

    a: np.ndarray  # m x r = u_p sqrt(s_p)
    b: np.ndarray  # r x n = sqrt(s_p) v_p^T
    w_res: np.ndarray  # m x n, frozen
    r: int
    seed: int = 0


@dataclass
class FullAdapter:
    """Every entry of the weight trainable."""

    w: np.ndarray  # m x n
    seed: int = 0


Adapter = SorsaAdapter | LoraAdapter | PissaAdapter | FullAdapter


def _split_pretrained(w0: np.ndarray, r: int):
    w0 = check_matrix(w0, "w0")
    k = min(w0.shape)
    if not 1 <= r < k:
        raise RankRangeError(f"rank must satisfy 1 <= r < {k}, got {r}")
    if not np.any(w0):
        raise ValueError("pre-trained weight is the zero matrix; nothing to split")
    principal, residual = truncate(svd(w0), r)
    return principal, residual.reconstruct()


def init_sorsa(w0: np.ndarray, r: int, seed: int = 0) -> SorsaAdapter:
    """Split w0 into trainable top-r factors and a frozen residual."""
    principal, w_r = _split_pretrained(w0, r)
    return SorsaAdapter(
        u_p=principal.u, s_p=principal.s.copy(), v_p=principal.v, w_r=w_r, r=r, seed=seed
    )


def init_pissa(w0: np.ndarray, r: int, seed: int = 0) -> PissaAdapter:
    """Split w0 and merge the top-r singular values into the two factors."""
    principal, w_res = _split_pretrained(w0, r)
    root = np.sqrt(principal.s)
    return PissaAdapter(
        a=principal.u * root, b=(principal.v * root).T, w_res=w_res, r=r, seed=seed
    )


def init_lora(w0: np.ndarray, r: int, seed: int = 0) -> LoraAdapter:
    """Gaussian a (std 1/sqrt(r)), zero b: the effective weight is w0 exactly."""
    w0 = check_matrix(w0, "w0")
    m, n = w0.shape
    k = min(m, n)
    if not 1 <= r < k:
        raise RankRangeError(f"rank must satisfy 1 <= r < {k}, got {r}")
    a = rng.stream(seed, "lora_a").standard_normal((r, n)) / np.sqrt(r)
    return LoraAdapter(w_0=w0.copy(), a=a, b=np.zeros((m, r)), r=r, seed=seed)


def init_full(w0: np.ndarray, seed: int = 0) -> FullAdapter:
    return FullAdapter(w=check_matrix(w0, "w0").copy(), seed=seed)


def effective_weight(adapter: Adapter) -> np.ndarray:
    """Merged dense weight seen at inference."""
    if isinstance(adapter, SorsaAdapter):
        return adapter.w_r + (adapter.u_p * adapter.s_p) @ adapter.v_p.T
    if isinstance(adapter, LoraAdapter):
        return adapter.w_0 + adapter.b @ adapter.a
    if isinstance(adapter, PissaAdapter):
        return adapter.w_res + adapter.a @ adapter.b
    return adapter.w


def forward(x: np.ndarray, adapter: Adapter) -> np.ndarray:
    """Batched application x @ W without materializing the merged weight."""
    x = check_matrix(x, "x")
    m = adapter_shape(adapter)[0]
    if x.shape[1] != m:
        raise ShapeError(f"x has {x.shape[1]} columns, adapter expects {m}")
    if isinstance(adapter, SorsaAdapter):
        return x @ adapter.w_r + ((x @ adapter.u_p) * adapter.s_p) @ adapter.v_p.T
    if isinstance(adapter, LoraAdapter):
        return x @ adapter.w_0 + (x @ adapter.b) @ adapter.a
    if isinstance(adapter, PissaAdapter):
        return x @ adapter.w_res + (x @ adapter.a) @ adapter.b
    return x @ adapter.w


def adapter_shape(adapter: Adapter) -> tuple[int, int]:
    if isinstance(adapter, SorsaAdapter):
        return adapter.w_r.shape
    if isinstance(adapter, LoraAdapter):
        return adapter.w_0.shape
    if isinstance(adapter, PissaAdapter):
        return adapter.w_res.shape
    return adapter.w.shape


def trainable_parameter_count(adapter: Adapter) -> int:
    m, n = adapter_shape(adapter)
    if isinstance(adapter, SorsaAdapter):
        return adapter.r * (m + n + 1)
    if isinstance(adapter, (LoraAdapter, PissaAdapter)):
        return adapter.r * (m + n)
    return m * n


def factor_gradients(
    adapter: SorsaAdapter, g_w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Chain rule mapping a principal-weight gradient onto the three factors.

    For W_p = u diag(s) v^T:
        g_u = g_w v diag(s),  g_s = diag(u^T g_w v),  g_v = g_w^T u diag(s).
    """
    g_w = check_matrix(g_w, "g_w")
    if g_w.shape != adapter.w_r.shape:
        raise ShapeError(f"gradient shape {g_w.shape} != weight shape {adapter.w_r.shape}")
    gv_product = g_w @ adapter.v_p
    g_u = gv_product * adapter.s_p
    g_s = np.sum(adapter.u_p * gv_product, axis=0)
    g_v = (g_w.T @ adapter.u_p) * adapter.s_p
    return g_u, g_s, g_v


_FACTOR_FIELDS = {
    "sorsa": ("u_p", "s_p", "v_p", "w_r"),
    "lora": ("w_0", "a", "b"),
    "pissa": ("a", "b", "w_res"),
    "full": ("w",),
}

_TYPE_NAMES = {
    SorsaAdapter: "sorsa",
    LoraAdapter: "lora",
    PissaAdapter: "pissa",
    FullAdapter: "full",
}


def save_adapter(path, adapter: Adapter) -> None:
    """Checkpoint: one JSON header line, then a CSV block per factor."""
    kind = _TYPE_NAMES[type(adapter)]
    m, n = adapter_shape(adapter)
    header = {
        "type": kind,
        "m": m,
        "n": n,
        "r": getattr(adapter, "r", min(m, n)),
        "seed": adapter.seed,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for name in _FACTOR_FIELDS[kind]:
        value = np.atleast_2d(getattr(adapter, name))
        lines.append(f"#factor {name} {value.shape[0]} {value.shape[1]}")
        for row in value:
            lines.append(",".join(format_value(x) for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_adapter(path) -> Adapter:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = json.loads(lines[0])
    kind = header["type"]
    if kind not in _FACTOR_FIELDS:
        raise ValueError(f"unknown adapter type {kind!r}")
    blocks: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        tag = lines[i].split()
        if len(tag) != 4 or tag[0] != "#factor":
            raise ShapeError(f"malformed checkpoint block header: {lines[i]!r}")
        name, rows = tag[1], int(tag[2])
        blocks[name] = matrix_from_csv("\n".join(lines[i + 1 : i + 1 + rows]))
        i += 1 + rows
    if set(blocks) != set(_FACTOR_FIELDS[kind]):
        raise ShapeError(f"checkpoint blocks {sorted(blocks)} do not match type {kind!r}")
    seed = int(header["seed"])
    r = int(header["r"])
    if kind == "sorsa":
        return SorsaAdapter(
            u_p=blocks["u_p"], s_p=blocks["s_p"].reshape(-1), v_p=blocks["v_p"],
            w_r=blocks["w_r"], r=r, seed=seed,
        )
    if kind == "lora":
        return LoraAdapter(w_0=blocks["w_0"], a=blocks["a"], b=blocks["b"], r=r, seed=seed)
    if kind == "pissa":
        return PissaAdapter(a=blocks["a"], b=blocks["b"], w_res=blocks["w_res"], r=r, seed=seed)
    return FullAdapter(w=blocks["w"], seed=seed)


def initialization_error(adapter: Adapter, w0: np.ndarray) -> float:
    """Relative Frobenius gap between the merged weight and w0."""
    return frobenius_norm(effective_weight(adapter) - w0) / max(1.0, frobenius_norm(w0))
