"""Pivot-timestep search over the levelled-graph memory.

A pivot timestep e_t is the inferred commit time of the action(s) responsible
for the reward observed at timestep t. Two per-agent schemes produce
candidates, and the per-reward pivot is chosen across agents by recency
(the candidate closest to t wins).

Scheme one ranks each path's visit counts and scans the rank sequence with a
two-pointer loop, forward from level 0 (downward scan) and backward from
level t-1 (upward scan); the downward scan has priority. Scheme two looks for
the level where the path bundle converges onto the fewest distinct nodes.
"""

from __future__ import annotations

from typing import Callable

from .core import Episode, discretize_return, episode_return
from .memory import GraphNode, MemoryStore, SubGraph

PivotMap = dict[int, int]

SCHEME_ONE = "scheme1"
SCHEME_TWO = "scheme2"

NOT_FOUND = -1


def visit_count_ranks(
    paths: list[list[GraphNode]],
    count_of: Callable[[GraphNode], int] | None = None,
) -> list[list[int]]:
    """Per path, replace each node's visit count by its rank among the
    path's distinct counts (ascending: smallest count -> rank 0)."""
    if not paths:
        raise ValueError("need at least one path")
    if count_of is None:
        count_of = lambda n: n.visit_count
    masks = []
    for path in paths:
        counts = [count_of(n) for n in path]
        order = {c: i for i, c in enumerate(sorted(set(counts)))}
        masks.append([order[c] for c in counts])
    return masks


def _scan_increases(ranks: list[int]) -> int:
    # Two-pointer scan: walk right while equal, record each strict increase,
    # stop at the first strict decrease; return last recorded index or -1.
    res = -1
    left, right = 0, 1
    while right < len(ranks):
        if ranks[right] == ranks[left]:
            right += 1
        elif ranks[right] > ranks[left]:
            res = right
            left = right
            right += 1
        else:
            break
    return res


def ul_search(ranks: list[int], t: int) -> int:
    """Downward scan (level 0 toward t) of ranks[:t]; -1 when no pattern."""
    return _scan_increases(ranks[:t])


def lu_search(ranks: list[int], t: int) -> int:
    """Upward scan: the same loop over reversed ranks[:t], mapped back."""
    window = ranks[:t][::-1]
    idx = _scan_increases(window)
    if idx == NOT_FOUND:
        return NOT_FOUND
    return len(window) - idx - 1


def summarize(candidates: list[int]) -> int:
    """Modal candidate; ties broken toward the smallest timestep."""
    if not candidates:
        raise ValueError("need at least one candidate")
    counts: dict[int, int] = {}
    for c in candidates:
        counts[c] = counts.get(c, 0) + 1
    best = NOT_FOUND
    best_n = 0
    for value, n in counts.items():
        if n > best_n or (n == best_n and value < best):
            best, best_n = value, n
    return best


def scheme_one(
    paths: list[list[GraphNode]],
    t: int,
    count_of: Callable[[GraphNode], int] | None = None,
) -> int:
    """Per path take the downward-scan result, else the upward one, else t;
    then summarize across paths."""
    masks = visit_count_ranks(paths, count_of)
    candidates = []
    for ranks in masks:
        down = ul_search(ranks, t)
        if down != NOT_FOUND:
            candidates.append(down)
            continue
        up = lu_search(ranks, t)
        candidates.append(up if up != NOT_FOUND else t)
    return summarize(candidates)


def scheme_two(paths: list[list[GraphNode]], t: int) -> int:
    """Level of strongest path convergence, ties toward the nearest timestep.

    Falls back to t when the bundle never converges (every level shows as
    many distinct nodes as there are paths).
    """
    if not paths:
        return t
    distinct: dict[int, int] = {}
    for level in range(t - 1, -1, -1):
        distinct[level] = len({p[level].ordinal for p in paths})
    if not distinct:
        return t
    if len(paths) > 1 and all(c == len(paths) for c in distinct.values()):
        return t
    # smallest distinct-node count, preferring the largest (nearest) level
    return min(distinct, key=lambda lv: (distinct[lv], -lv))


def _pivot_from_node(
    graph_sub: SubGraph | None,
    node: GraphNode | None,
    t: int,
    scheme: str,
    enumerate_paths,
    path_cap: int,
) -> int:
    if node is None or graph_sub is None:
        return t
    counts = graph_sub.node_visits
    if node.ordinal not in counts:
        return t
    if graph_sub.episodes == 1:
        # single stored episode: every count is 1, both scans see a flat
        # rank mask and report no pattern
        return t
    paths = enumerate_paths(node, subgraph=graph_sub, cap=path_cap)
    if not paths:
        return t
    if scheme == SCHEME_ONE:
        return scheme_one(paths, t, count_of=lambda n: counts[n.ordinal])
    if scheme == SCHEME_TWO:
        return scheme_two(paths, t)
    raise ValueError(f"unknown search scheme {scheme!r}")


def agent_pivot(
    store: MemoryStore,
    agent: int,
    episode: Episode,
    t: int,
    scheme: str = SCHEME_ONE,
    path_cap: int = 10_000,
) -> int:
    """One agent's pivot candidate for the reward at timestep t.

    Falls back to t (treat the reward as on-beat) when the afterstate node or
    the return sub-graph is missing from memory.
    """
    traj = episode.trajectories[agent]
    graph = store.graph_for(agent, len(traj))
    step = traj.steps[t]
    key = step.afterstate_key
    if key is None:
        key = store.key_maker(step.observation, step.action)
    node = graph.get_node(t, key)
    return_key = discretize_return(episode_return(traj))
    return _pivot_from_node(
        graph.subgraph(return_key), node, t, scheme, graph.enumerate_paths, path_cap
    )


def search_pivot_timesteps(
    episode: Episode,
    store: MemoryStore,
    scheme: str = SCHEME_ONE,
    path_cap: int = 10_000,
    trace: list[str] | None = None,
) -> PivotMap:
    """Pivot map t -> e_t for every nonzero-reward timestep of the episode.

    Every agent searches its own memory; the winner is the most recent
    candidate (the e maximizing recency, i.e. minimizing t - e). When
    ``trace`` is given, one CSV row per searched reward is appended:
    ``t,cand_agent0,...,cand_agentN-1,winner``.
    """
    kappa: PivotMap = {}
    n_agents = episode.n_agents
    length = len(episode)
    return_key = discretize_return(episode_return(episode.trajectories[0]))
    graphs = [store.graph_for(agent, length) for agent in range(n_agents)]
    subs = [g.subgraph(return_key) for g in graphs]
    keyed: list[list[GraphNode | None]] = []
    for agent in range(n_agents):
        nodes = []
        level_maps = graphs[agent].levels
        for t, step in enumerate(episode.trajectories[agent].steps):
            key = step.afterstate_key
            if key is None:
                key = store.key_maker(step.observation, step.action)
            nodes.append(level_maps[t].get(key))
        keyed.append(nodes)
    for t, transition in enumerate(episode.transitions):
        if transition.reward == 0:
            continue
        candidates = [
            _pivot_from_node(
                subs[agent],
                keyed[agent][t],
                t,
                scheme,
                graphs[agent].enumerate_paths,
                path_cap,
            )
            for agent in range(n_agents)
        ]
        e_t = max(candidates)
        if not 0 <= e_t <= t:
            raise AssertionError(f"pivot {e_t} outside [0, {t}]")
        kappa[t] = e_t
        if trace is not None:
            trace.append(",".join([str(t), *map(str, candidates), str(e_t)]))
    return kappa


def subgraph_stamps(episode: Episode, store: MemoryStore) -> tuple[int, ...]:
    """Version stamps of the sub-graphs a search of this episode would read;
    a cached pivot map stays valid while these are unchanged."""
    length = len(episode)
    return_key = discretize_return(episode_return(episode.trajectories[0]))
    stamps = []
    for agent in range(episode.n_agents):
        sub = store.graph_for(agent, length).subgraph(return_key)
        stamps.append(-1 if sub is None else sub.stamp)
    return tuple(stamps)
