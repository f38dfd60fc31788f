"""Synthetic tomography instances: random topology, low-rank traffic, loads.

The generator mirrors the structure of real backbone traffic: each spatial
matrix is a nonnegative low-rank factor product whose components are
modulated by a smooth periodic profile (continuity between adjacent
intervals, periodicity across the series), and the smallest OD pairs are
forced to zero per the sparsity protocol.
"""

from __future__ import annotations

import numpy as np

from .errors import GenerationError
from .tensor_store import (
    RoutingMatrix,
    SparsityMask,
    TomographyInstance,
    TrafficTensor,
    apply_sparsity_protocol,
)

__all__ = ["synthesize_instance", "random_connected_topology", "shortest_path_routing"]

_MAX_TOPOLOGY_ATTEMPTS = 8


def random_connected_topology(S: int, avg_degree: float, rng: np.random.Generator):
    """Random connected undirected graph with about avg_degree*S/2 edges.

    Returns a sorted list of (u, v) node pairs with u < v, 0-based.
    """
    if S < 2:
        raise GenerationError("topology needs S >= 2")
    max_edges = S * (S - 1) // 2
    target = int(round(avg_degree * S / 2.0))
    target = min(max(target, S - 1), max_edges)

    # random spanning tree, then random extra edges
    perm = rng.permutation(S)
    edges = set()
    for idx in range(1, S):
        parent = perm[int(rng.integers(0, idx))]
        a, b = int(perm[idx]), int(parent)
        edges.add((min(a, b), max(a, b)))
    candidates = [
        (u, v) for u in range(S) for v in range(u + 1, S) if (u, v) not in edges
    ]
    extra = target - len(edges)
    if extra > 0 and candidates:
        pick = rng.choice(len(candidates), size=min(extra, len(candidates)), replace=False)
        for c in np.sort(pick):
            edges.add(candidates[int(c)])
    return sorted(edges)


def shortest_path_routing(S: int, edges) -> RoutingMatrix:
    """Routing matrix from shortest paths on an undirected topology.

    Each undirected edge becomes two directed links. Among equally short
    paths the predecessor with the lowest node index wins, so the routing
    is deterministic. Every directed link carries at least the OD pair of
    its own endpoints.
    """
    adj: list[list[int]] = [[] for _ in range(S)]
    link_of: dict[tuple[int, int], int] = {}
    for t, (u, v) in enumerate(edges):
        adj[u].append(v)
        adj[v].append(u)
        link_of[(u, v)] = 2 * t
        link_of[(v, u)] = 2 * t + 1
    for nbrs in adj:
        nbrs.sort()
    M = 2 * len(edges)

    links, ods = [], []
    for src in range(S):
        # BFS distances, then lowest-index predecessor per node
        dist = np.full(S, -1, dtype=np.int64)
        dist[src] = 0
        queue = [src]
        while queue:
            nxt = []
            for u in queue:
                for v in adj[u]:
                    if dist[v] < 0:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            queue = nxt
        if (dist < 0).any():
            raise GenerationError("topology is not connected")
        pred = np.full(S, -1, dtype=np.int64)
        for v in range(S):
            if v == src:
                continue
            for u in adj[v]:  # ascending: first match is the lowest index
                if dist[u] == dist[v] - 1:
                    pred[v] = u
                    break
        for dst in range(S):
            if dst == src:
                continue  # self-OD uses no links
            n = dst * S + src  # 0-based column-stacking index of (src+1, dst+1)
            v = dst
            while v != src:
                u = int(pred[v])
                links.append(link_of[(u, v)])
                ods.append(n)
                v = u
    return RoutingMatrix(S=S, M=M, links=np.array(links, dtype=np.int64),
                         ods=np.array(ods, dtype=np.int64))


def _forward_loads(routing: RoutingMatrix, X: np.ndarray) -> np.ndarray:
    q = np.zeros(routing.M)
    i0 = routing.ods % routing.S
    j0 = routing.ods // routing.S
    np.add.at(q, routing.links, X[i0, j0])
    return q


def synthesize_instance(
    S: int,
    avg_degree: float = 3.0,
    T: int = 8,
    rank: int = 1,
    zero_fraction: float = 0.0,
    noise_level: float = 0.0,
    seed: int = 0,
) -> TomographyInstance:
    """Generate a seeded tomography instance with attached ground truth.

    The truth tensor is sum_l phi_l(k) * u_l v_l^T with nonnegative factors
    and per-component periodic profiles phi_l, so every slice has rank at
    most ``rank``. The smallest ``zero_fraction`` of OD pairs (by total
    volume) are zeroed and recorded in the mask, and link loads carry
    multiplicative noise of relative size ``noise_level``.
    """
    if S < 2:
        raise GenerationError("S must be at least 2")
    if not (0 <= zero_fraction < 1):
        raise GenerationError("zero_fraction must be in [0, 1)")
    if not (1 <= rank <= S):
        raise GenerationError("rank must be in 1..S")
    if T < 1:
        raise GenerationError("T must be at least 1")

    rng = np.random.default_rng(seed)
    N = S * S

    routing = None
    degree = float(avg_degree)
    for _ in range(_MAX_TOPOLOGY_ATTEMPTS):
        edges = random_connected_topology(S, degree, rng)
        M = 2 * len(edges)
        if S <= M + 1 < N:
            routing = shortest_path_routing(S, edges)
            break
        degree *= 1.5  # retry denser
    if routing is None:
        raise GenerationError(
            f"could not satisfy S <= M+1 < N for S={S}, avg_degree={avg_degree}"
        )

    U = rng.uniform(0.5, 1.5, size=(S, rank))
    V = rng.uniform(0.5, 1.5, size=(S, rank))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=rank)
    period = max(T, 2)
    k = np.arange(T)
    profiles = 1.0 + 0.4 * np.sin(2.0 * np.pi * k[None, :] / period + phases[:, None])

    values = np.einsum("il,jl,lk->ijk", U, V, profiles)
    truth = TrafficTensor(values)
    mask = apply_sparsity_protocol(truth, 100.0 * zero_fraction)
    if not mask.is_empty:
        values = values.copy()
        values[mask.bool_tensor(S, T)] = 0.0
        truth = TrafficTensor(values)

    loads = np.empty((routing.M, T))
    for kk in range(T):
        clean = _forward_loads(routing, truth.values[:, :, kk])
        noise = rng.standard_normal(routing.M)  # drawn even when unused: keeps
        loads[:, kk] = clean * (1.0 + noise_level * noise)  # streams comparable
    loads = np.maximum(loads, 0.0)

    return TomographyInstance(
        S=S, M=routing.M, T=T, routing=routing, link_loads=loads,
        mask=mask, truth=truth,
    )
