"""Per-agent levelled-graph episodic memory.

Each agent keeps one directed acyclic graph per episode length; level k of a
graph holds the afterstate nodes seen at timestep k of episodes of that
length. A node is keyed by a digest of the (observation, action) pair, counts
how often it was visited, and links bidirectionally to its neighbours on the
adjacent levels. Episodes additionally index a return-keyed sub-graph: the
restriction of the graph to the trajectories whose discretized episode return
equals the sub-graph's key. Sub-graphs share node objects with the parent
graph and keep their own edge sets plus traversal tallies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Observation, ReturnKey, Trajectory, discretize_return, episode_return, fold_digest


class PathCapExceeded(RuntimeError):
    """Raised when path enumeration exceeds the configured cap.

    ``partial_count`` carries how many complete paths were produced before
    the cap tripped.
    """

    def __init__(self, cap: int, partial_count: int) -> None:
        super().__init__(f"path enumeration exceeded cap of {cap}")
        self.cap = cap
        self.partial_count = partial_count


# --- afterstate keys --------------------------------------------------------


class KeyMaker:
    """Digests (observation, action) pairs into fixed-width afterstate keys.

    ``exact`` mode encodes the pair through a 64-bit mixing digest, which in
    practice is injective for the integer grid observations used here.
    ``simhash`` mode takes ``bits`` sign bits of random-hyperplane projections
    of the concatenated (observation, one-hot action) vector; the hyperplanes
    are drawn once per run from the seeded generator, so keys are stable for
    the whole run.
    """

    def __init__(self, mode: str = "exact", bits: int = 32, n_actions: int = 0, seed: int = 0) -> None:
        if mode not in ("exact", "simhash"):
            raise ValueError(f"unknown key mode {mode!r}")
        self.mode = mode
        self.bits = bits
        self.n_actions = n_actions
        self._rng = np.random.default_rng(seed)
        self._planes: dict[int, np.ndarray] = {}  # input dim -> (bits, dim)

    def __call__(self, obs: Observation, action: int) -> int:
        if self.mode == "exact":
            return fold_digest(0xAF7E5, len(obs), *obs, action)
        return self._simhash(obs, action)

    def _simhash(self, obs: Observation, action: int) -> int:
        vec = np.asarray(obs, dtype=np.float64)
        if vec.size and not np.all(np.isfinite(vec)):
            raise ValueError("observation contains non-finite values")
        one_hot = np.zeros(max(self.n_actions, action + 1), dtype=np.float64)
        # the action block scales with the observation so the concatenated
        # vector is homogeneous: positively scaled inputs keep their key
        norm = float(np.linalg.norm(vec)) or 1.0
        one_hot[action] = norm
        x = np.concatenate([vec, one_hot])
        planes = self._planes.get(x.size)
        if planes is None:
            planes = self._rng.standard_normal((self.bits, x.size))
            self._planes[x.size] = planes
        signs = planes @ x > 0.0
        key = 0
        for b in signs:
            key = (key << 1) | int(b)
        return key


def make_key(
    obs: Observation,
    action: int,
    mode: str = "exact",
    bits: int = 32,
    seed: int = 0,
    _cache: dict = {},
) -> int:
    """One-shot afterstate key; KeyMaker instances are cached per (mode, bits, seed)."""
    maker = _cache.get((mode, bits, seed))
    if maker is None:
        maker = _cache[(mode, bits, seed)] = KeyMaker(mode=mode, bits=bits, seed=seed)
    return maker(obs, action)


# --- graph structure --------------------------------------------------------


class GraphNode:
    """Afterstate node: key, level, visit count, and level-adjacent links.

    ``precursors`` / ``successors`` are insertion-ordered (dict-backed) so
    traversal order is deterministic across runs.
    """

    __slots__ = ("key", "level", "visit_count", "ordinal", "precursors", "successors")

    def __init__(self, key: int, level: int, ordinal: int) -> None:
        self.key = key
        self.level = level
        self.visit_count = 1
        self.ordinal = ordinal  # creation order within the graph, for stable iteration
        self.precursors: dict[int, GraphNode] = {}
        self.successors: dict[int, GraphNode] = {}

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"GraphNode(level={self.level}, key={self.key:#x}, visits={self.visit_count})"


@dataclass
class SubGraph:
    """Return-indexed restriction of a levelled graph.

    Shares node objects with the parent; stores its own edge set together
    with per-node and per-edge traversal counts (how many of the sub-graph's
    episodes passed through). ``stamp`` records the store version of the
    last insert, letting searches cache results until the sub-graph changes.
    """

    return_key: ReturnKey
    episodes: int = 0
    stamp: int = 0
    node_visits: dict[int, int] = field(default_factory=dict)  # node ordinal -> count
    edge_visits: dict[tuple[int, int], int] = field(default_factory=dict)
    nodes: dict[int, GraphNode] = field(default_factory=dict)  # ordinal -> node
    # incremental adjacency restricted to this sub-graph's edges
    pre_adj: dict[int, list[GraphNode]] = field(default_factory=dict)

    def successors_in(self, node: GraphNode) -> list[GraphNode]:
        return [n for o, n in node.successors.items() if (node.ordinal, o) in self.edge_visits]

    def precursors_in(self, node: GraphNode) -> list[GraphNode]:
        return [n for o, n in node.precursors.items() if (o, node.ordinal) in self.edge_visits]


class LevelledGraph:
    """All afterstate nodes of one agent's episodes of one fixed length.

    A graph covering episodes of length L has max_level L: level k holds the
    nodes of timestep k. Inserting one trajectory contributes exactly one
    visit per level.
    """

    def __init__(self, agent: int, max_level: int) -> None:
        self.agent = agent
        self.max_level = max_level
        self.levels: list[dict[int, GraphNode]] = [{} for _ in range(max_level)]
        self.subgraphs: dict[ReturnKey, SubGraph] = {}
        self.episodes = 0
        self._next_ordinal = 0

    def get_node(self, level: int, key: int) -> GraphNode | None:
        if level >= self.max_level:
            raise ValueError(f"level {level} out of range (max_level {self.max_level})")
        return self.levels[level].get(key)

    def subgraph(self, return_key: ReturnKey) -> SubGraph | None:
        return self.subgraphs.get(return_key)

    def _node_for(self, level: int, key: int) -> tuple[GraphNode, bool]:
        node = self.levels[level].get(key)
        if node is not None:
            node.visit_count += 1
            return node, False
        node = GraphNode(key, level, self._next_ordinal)
        self._next_ordinal += 1
        self.levels[level][key] = node
        return node, True

    def insert(self, keys: list[int], return_key: ReturnKey, stamp: int = 0) -> None:
        """Record one trajectory (already keyed per timestep) and index it
        under its discretized-return sub-graph."""
        if len(keys) != self.max_level:
            raise ValueError(f"trajectory length {len(keys)} != graph length {self.max_level}")
        sub = self.subgraphs.get(return_key)
        if sub is None:
            sub = self.subgraphs[return_key] = SubGraph(return_key)
        sub.episodes += 1
        sub.stamp = stamp
        self.episodes += 1
        prev: GraphNode | None = None
        for level, key in enumerate(keys):
            node, _created = self._node_for(level, key)
            if prev is not None:
                # bidirectional, level-adjacent links
                prev.successors[node.ordinal] = node
                node.precursors[prev.ordinal] = prev
                edge = (prev.ordinal, node.ordinal)
                seen = sub.edge_visits.get(edge, 0)
                sub.edge_visits[edge] = seen + 1
                if not seen:
                    sub.pre_adj.setdefault(node.ordinal, []).append(prev)
            sub.node_visits[node.ordinal] = sub.node_visits.get(node.ordinal, 0) + 1
            sub.nodes[node.ordinal] = node
            prev = node

    # -- path enumeration ---------------------------------------------------

    def enumerate_paths(
        self,
        node: GraphNode,
        subgraph: SubGraph | None = None,
        cap: int = 10_000,
    ) -> list[list[GraphNode]]:
        """All level-monotone chains from a level-0 node up to ``node``.

        Paths are returned root-first (index 0 = level 0). When a sub-graph
        is given, only its edges are traversed. Exceeding ``cap`` complete
        paths raises PathCapExceeded carrying the partial count.
        """
        paths: list[list[GraphNode]] = []
        stack: list[GraphNode] = [node]
        if subgraph is None:
            preds_of = lambda n: n.precursors.values()
        else:
            adj = subgraph.pre_adj
            preds_of = lambda n: adj.get(n.ordinal, ())

        def descend(n: GraphNode) -> None:
            if n.level == 0:
                if len(paths) >= cap:
                    raise PathCapExceeded(cap, len(paths))
                paths.append(stack[::-1])
                return
            for p in preds_of(n):
                stack.append(p)
                descend(p)
                stack.pop()

        descend(node)
        return paths

    # -- fixtures -------------------------------------------------------------

    def dump(self) -> str:
        """Line format: ``level key_hex visit_count succ_hex,succ_hex,...``"""
        lines = []
        for level, nodes in enumerate(self.levels):
            for key, node in sorted(nodes.items()):
                succ = ",".join(f"{n.key:x}" for n in sorted(node.successors.values(), key=lambda m: m.key))
                lines.append(f"{level} {key:x} {node.visit_count} {succ}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str, agent: int = 0) -> "LevelledGraph":
        """Rebuild graph structure from :meth:`dump` output.

        Sub-graphs are not part of the dump format, so the loaded graph
        carries nodes, counts and links only (enough for inspection and
        golden tests).
        """
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            level_s, key_s, count_s, *succ = line.split(" ")
            succ_keys = [int(s, 16) for s in succ[0].split(",")] if succ and succ[0] else []
            rows.append((int(level_s), int(key_s, 16), int(count_s), succ_keys))
        if not rows:
            raise ValueError("empty memory dump")
        graph = cls(agent, max(level for level, *_ in rows) + 1)
        for level, key, count, _succ in rows:
            node, _ = graph._node_for(level, key)
            node.visit_count = count
        for level, key, _count, succ_keys in rows:
            node = graph.levels[level][key]
            for sk in succ_keys:
                succ = graph.levels[level + 1][sk]
                node.successors[succ.ordinal] = succ
                succ.precursors[node.ordinal] = node
        return graph


class MemoryStore:
    """Per-agent arrays of levelled graphs indexed by episode length - 1."""

    def __init__(
        self,
        n_agents: int,
        max_length: int,
        key_mode: str = "exact",
        simhash_bits: int = 32,
        seed: int = 0,
    ) -> None:
        if n_agents < 1 or max_length < 1:
            raise ValueError("need n_agents >= 1 and max_length >= 1")
        self.n_agents = n_agents
        self.max_length = max_length
        self.key_maker = KeyMaker(mode=key_mode, bits=simhash_bits, seed=seed)
        self.graphs: list[list[LevelledGraph]] = [
            [LevelledGraph(agent, length + 1) for length in range(max_length)]
            for agent in range(n_agents)
        ]
        self.version = 0  # bumped on every update; lets callers memoize searches

    def graph_for(self, agent: int, length: int) -> LevelledGraph:
        if not (1 <= length <= self.max_length):
            raise ValueError(f"episode length {length} outside [1, {self.max_length}]")
        return self.graphs[agent][length - 1]

    def update(self, trajectories: list[Trajectory]) -> None:
        """Insert one episode's per-agent trajectories.

        All trajectories must have the same length; each contributes one node
        visit per level of the length-matched graph, and the sub-graph keyed
        by the episode's discretized return is updated with the same shared
        nodes.
        """
        lengths = {len(t) for t in trajectories}
        if len(lengths) != 1:
            raise ValueError(f"trajectories disagree on length: {sorted(lengths)}")
        (length,) = lengths
        if length > self.max_length:
            raise ValueError(f"episode length {length} exceeds configured max {self.max_length}")
        return_key = discretize_return(episode_return(trajectories[0]))
        self.version += 1
        for traj in trajectories:
            keys = []
            for s in traj.steps:
                if s.afterstate_key is None:
                    s.afterstate_key = self.key_maker(s.observation, s.action)
                keys.append(s.afterstate_key)
            self.graphs[traj.agent][length - 1].insert(keys, return_key, stamp=self.version)
