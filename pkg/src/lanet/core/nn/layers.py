"""
Differentiable building blocks shared by every encoder and decoder stage.

Relative encodings enter attention additively on both key and value of the
source node; every attention use is wrapped as pre-norm attention + residual
followed by a pre-norm feed-forward residual block.
"""
from __future__ import annotations
import contextlib
import math
import torch
import torch.nn as nn
from typing import Iterator, Optional, Sequence, Union
from torch_geometric.nn.conv import MessagePassing
from torch_geometric.utils import softmax
from lanet.core.domain.geometry import EdgeList, encode_rel_input
from lanet.errors import InvalidArgumentError


def init_weights(m: nn.Module) -> None:
    """
    Uniform in +-1/sqrt(fan_in) for affine layers; unit/zero for layer norms.
    """
    if isinstance(m, nn.Linear):
        bound = 1.0 / math.sqrt(m.in_features) if m.in_features > 0 else 0.0
        nn.init.uniform_(m.weight, -bound, bound)
        if m.bias is not None:
            nn.init.uniform_(m.bias, -bound, bound)
    elif isinstance(m, nn.Embedding):
        bound = 1.0 / math.sqrt(m.embedding_dim)
        nn.init.uniform_(m.weight, -bound, bound)
    elif isinstance(m, nn.LayerNorm):
        nn.init.ones_(m.weight)
        nn.init.zeros_(m.bias)


@contextlib.contextmanager
def seeded_init(seed: int) -> Iterator[None]:
    """
    Parameters created inside the block depend only on ``seed``.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


class MLP(nn.Module):
    """
    Affine layers with ReLU in between; the last layer is affine unless
    ``final_activation`` is set.
    """

    def __init__(self, widths: Sequence[int], final_activation: bool = False):
        super().__init__()
        widths = list(widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise InvalidArgumentError(f"MLP needs at least two positive widths, got {widths}")
        self.widths = widths
        self.final_activation = final_activation
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(widths[:-1], widths[1:]))
        self.apply(init_weights)

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise InvalidArgumentError(f"MLP input width {x.shape[-1]} does not match {self.in_dim}")
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or self.final_activation:
                x = torch.relu(x)
        return x


def mlp_forward(params: MLP, x: torch.Tensor) -> torch.Tensor:
    return params(x)


def zero_module(m: nn.Module) -> nn.Module:
    for p in m.parameters():
        nn.init.zeros_(p)
    return m


def embedding_lookup(table: nn.Embedding, index: Union[int, torch.Tensor]) -> torch.Tensor:
    idx = torch.as_tensor(index, dtype=torch.long, device=table.weight.device)
    if idx.numel() and (int(idx.min()) < 0 or int(idx.max()) >= table.num_embeddings):
        raise InvalidArgumentError(f"Embedding index out of range for a table of size {table.num_embeddings}")
    return table(idx)


class EdgeAttention(MessagePassing):
    """
    Multi-head attention of target (query) nodes over their incoming edges.

    ``x`` is one tensor for self-attention or a (source, target) pair for
    cross-attention. Nodes without incoming edges receive a zero message, so
    their output is the residual feed-forward transform of their own input.
    """

    def __init__(self, hidden_dim: int, num_heads: int, has_edge_attr: bool = True, bipartite: bool = False, ff_mult: int = 4):
        super().__init__(aggr="add", node_dim=0)
        if hidden_dim % num_heads != 0:
            raise InvalidArgumentError(f"hidden_dim {hidden_dim} is not divisible by num_heads {num_heads}")
        self.hidden_dim = hidden_dim
        self.num_heads = num_heads
        self.head_dim = hidden_dim // num_heads
        self.has_edge_attr = has_edge_attr
        self.bipartite = bipartite

        self.norm_dst = nn.LayerNorm(hidden_dim)
        self.norm_src = nn.LayerNorm(hidden_dim) if bipartite else self.norm_dst
        self.lin_q = nn.Linear(hidden_dim, hidden_dim)
        self.lin_k = nn.Linear(hidden_dim, hidden_dim)
        self.lin_v = nn.Linear(hidden_dim, hidden_dim)
        if has_edge_attr:
            self.lin_k_edge = nn.Linear(hidden_dim, hidden_dim)
            self.lin_v_edge = nn.Linear(hidden_dim, hidden_dim)
        self.out_proj = nn.Linear(hidden_dim, hidden_dim, bias=False)
        self.norm_ff = nn.LayerNorm(hidden_dim)
        self.ff = nn.Sequential(
            nn.Linear(hidden_dim, hidden_dim * ff_mult),
            nn.ReLU(),
            nn.Linear(hidden_dim * ff_mult, hidden_dim),
        )
        self._alpha: Optional[torch.Tensor] = None
        self.apply(init_weights)

    def forward(
        self,
        x: Union[torch.Tensor, tuple[torch.Tensor, torch.Tensor]],
        edge_index: torch.Tensor,
        rel_emb: Optional[torch.Tensor] = None,
        edge_weight: Optional[torch.Tensor] = None,
        return_attention: bool = False,
    ):
        if isinstance(x, torch.Tensor):
            x_src = x_dst = x
        else:
            x_src, x_dst = x
        n_edges = edge_index.size(1)
        if self.has_edge_attr:
            if rel_emb is None or rel_emb.size(0) != n_edges:
                got = None if rel_emb is None else rel_emb.size(0)
                raise InvalidArgumentError(f"Relative encodings ({got}) are not aligned with {n_edges} edges")
        if edge_weight is not None and edge_weight.size(0) != n_edges:
            raise InvalidArgumentError(f"Edge weights ({edge_weight.size(0)}) are not aligned with {n_edges} edges")

        h_dst = self.norm_dst(x_dst)
        h_src = self.norm_src(x_src) if x_src is not x_dst else h_dst
        agg = self.propagate(
            edge_index,
            x=(h_src, h_dst),
            rel_emb=rel_emb if self.has_edge_attr else None,
            edge_weight=edge_weight,
            size=(x_src.size(0), x_dst.size(0)),
        )
        out = x_dst + self.out_proj(agg)
        out = out + self.ff(self.norm_ff(out))

        alpha, self._alpha = self._alpha, None
        if return_attention:
            return out, alpha
        return out

    def message(
        self,
        x_i: torch.Tensor,
        x_j: torch.Tensor,
        rel_emb: Optional[torch.Tensor],
        edge_weight: Optional[torch.Tensor],
        index: torch.Tensor,
        ptr: Optional[torch.Tensor],
        size_i: Optional[int],
    ) -> torch.Tensor:
        query = self.lin_q(x_i).view(-1, self.num_heads, self.head_dim)
        key = self.lin_k(x_j)
        value = self.lin_v(x_j)
        if rel_emb is not None:
            key = key + self.lin_k_edge(rel_emb)
            value = value + self.lin_v_edge(rel_emb)
        key = key.view(-1, self.num_heads, self.head_dim)
        value = value.view(-1, self.num_heads, self.head_dim)

        alpha = (query * key).sum(dim=-1) / math.sqrt(self.head_dim)
        alpha = softmax(alpha, index, ptr, size_i)
        self._alpha = alpha
        msg = value * alpha.unsqueeze(-1)
        if edge_weight is not None:
            msg = msg * edge_weight.view(-1, 1, 1)
        return msg.view(-1, self.hidden_dim)


def edge_attention(
    layer: EdgeAttention,
    node_q: torch.Tensor,
    node_kv: torch.Tensor,
    edge_index: torch.Tensor,
    rel_emb: Optional[torch.Tensor] = None,
    edge_weight: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    if node_q is node_kv and not layer.bipartite:
        return layer(node_q, edge_index, rel_emb, edge_weight)
    return layer((node_kv, node_q), edge_index, rel_emb, edge_weight)


def rel_input(edges: EdgeList, dtype: torch.dtype) -> torch.Tensor:
    """
    Smooth (E, 6) network input for an edge list's relative features.
    """
    return torch.as_tensor(encode_rel_input(edges.rel), dtype=dtype)
