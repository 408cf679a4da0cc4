"""Document-level dependency graph: construction, GCN, entity pooling, paths.

The graph has one node per token (the sentence's syntactic root is marked
as its own kind), one node per mention, and one document node. Unit-weight
undirected edges follow the dependency arcs, chain adjacent sentence
roots, tie every root to the document node, and attach mentions to their
member tokens. On top of that skeleton, directed soft edges run from each
earlier root to each later non-adjacent root, weighted by the cosine of
their sentence vectors; those weights feed the GCN but are not hops, so
hop distances (and the extracted shortest paths) live on the skeleton
alone.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .corpus import AnnotatedDocument, dependency_root

TOKEN = "token"
ROOT_TOKEN = "root_token"
MENTION = "mention"
DOCUMENT = "document"

PATH_ROWS = 14
PATH_INTERIOR = PATH_ROWS - 2


@dataclass(frozen=True)
class GraphNode:
    kind: str
    sentence_index: int = -1
    token_index: int = -1    # global token index for token/root_token nodes
    entity_id: int = -1      # for mention nodes
    mention_ordinal: int = -1


@dataclass
class GraphSkeleton:
    """Structural view: nodes plus unit-weight undirected adjacency lists."""
    nodes: list
    neighbors: list          # sorted adjacency lists
    edges: set               # frozenset pairs {i, j}
    root_node: dict          # sentence index -> node index
    mention_node: dict       # (entity_id, mention_ordinal) -> node index
    document_node: int | None

    def mention_nodes_of(self, entity_id):
        return sorted(index for (eid, _), index in self.mention_node.items()
                      if eid == entity_id)


@dataclass
class SyntaxGraph:
    skeleton: GraphSkeleton
    adjacency: nm.Tensor     # [n x n], unit edges plus directed cosine entries
    features: nm.Tensor      # [n x gcn_dim] node features before the GCN

    @property
    def node_count(self):
        return len(self.skeleton.nodes)


def build_skeleton(doc: AnnotatedDocument, include_document_node=True):
    """Nodes and unit edges only; needs no model state.

    Node order: tokens by global index, then mentions in entity order,
    then the document node.
    """
    nodes = []
    root_node = {}
    for s_index, (sentence, parse) in enumerate(zip(doc.sentences, doc.dependency_parses)):
        root_position = dependency_root(parse)
        for token in sentence:
            kind = ROOT_TOKEN if token.position_in_sentence == root_position else TOKEN
            if kind == ROOT_TOKEN:
                root_node[s_index] = token.global_index
            nodes.append(GraphNode(kind=kind, sentence_index=s_index,
                                   token_index=token.global_index))

    mention_node = {}
    for entity in doc.entities:
        for ordinal, mention in enumerate(entity.mentions):
            mention_node[(entity.entity_id, ordinal)] = len(nodes)
            nodes.append(GraphNode(kind=MENTION, sentence_index=mention.sentence_index,
                                   entity_id=entity.entity_id, mention_ordinal=ordinal))

    document_node = None
    if include_document_node:
        document_node = len(nodes)
        nodes.append(GraphNode(kind=DOCUMENT))

    edges = set()

    def connect(a, b):
        if a != b:
            edges.add(frozenset((a, b)))

    offsets = doc.sentence_offsets()
    for s_index, parse in enumerate(doc.dependency_parses):
        base = offsets[s_index]
        for position, head in enumerate(parse.heads):
            if head > 0:
                connect(base + position, base + head - 1)

    sentence_count = len(doc.sentences)
    for s_index in range(sentence_count - 1):
        connect(root_node[s_index], root_node[s_index + 1])
    if document_node is not None:
        for s_index in range(sentence_count):
            connect(root_node[s_index], document_node)

    for entity in doc.entities:
        for ordinal, mention in enumerate(entity.mentions):
            for token_index in range(mention.start, mention.end):
                connect(mention_node[(entity.entity_id, ordinal)], token_index)

    neighbors = [[] for _ in nodes]
    for edge in edges:
        a, b = tuple(edge)
        neighbors[a].append(b)
        neighbors[b].append(a)
    for adjacency_list in neighbors:
        adjacency_list.sort()

    return GraphSkeleton(nodes=nodes, neighbors=neighbors, edges=edges,
                         root_node=root_node, mention_node=mention_node,
                         document_node=document_node)


class DepGraphParams:
    """Root fusion, per-kind input adapters, GCN stack, pair head, score head."""

    def __init__(self, rng, token_dim, sentence_dim, cfg, num_scores):
        gcn_dim = cfg.gcn_dim
        fuse_in = token_dim + sentence_dim
        self.cfg = cfg
        self.w_fuse1 = nm.Parameter("depgraph.w_fuse1",
                                    nm.uniform_init(rng, (fuse_in, cfg.fusion_hidden_dim)))
        self.b_fuse1 = nm.Parameter("depgraph.b_fuse1",
                                    nm.uniform_init(rng, (cfg.fusion_hidden_dim,), fuse_in))
        self.w_fuse2 = nm.Parameter("depgraph.w_fuse2",
                                    nm.uniform_init(rng, (cfg.fusion_hidden_dim, token_dim)))
        self.b_fuse2 = nm.Parameter("depgraph.b_fuse2",
                                    nm.uniform_init(rng, (token_dim,), cfg.fusion_hidden_dim))
        self.w_adapt_token = nm.Parameter("depgraph.w_adapt_token",
                                          nm.uniform_init(rng, (token_dim, gcn_dim)))
        self.w_adapt_document = nm.Parameter("depgraph.w_adapt_document",
                                             nm.uniform_init(rng, (sentence_dim, gcn_dim)))
        self.gcn_weights = [
            nm.Parameter(f"depgraph.gcn.w{layer}", nm.uniform_init(rng, (gcn_dim, gcn_dim)))
            for layer in range(cfg.gcn_layers)]
        self.w_pair_subject = nm.Parameter("depgraph.w_pair_subject",
                                           nm.uniform_init(rng, (gcn_dim, cfg.pair_dim)))
        self.w_pair_object = nm.Parameter("depgraph.w_pair_object",
                                          nm.uniform_init(rng, (gcn_dim, cfg.pair_dim)))
        score_in = 2 * gcn_dim + cfg.pair_dim + PATH_ROWS * gcn_dim
        self.w_score1 = nm.Parameter("depgraph.w_score1",
                                     nm.uniform_init(rng, (score_in, cfg.score_hidden_dim)))
        self.b_score1 = nm.Parameter("depgraph.b_score1",
                                     nm.uniform_init(rng, (cfg.score_hidden_dim,), score_in))
        self.w_score2 = nm.Parameter("depgraph.w_score2",
                                     nm.uniform_init(rng, (cfg.score_hidden_dim, num_scores)))
        self.b_score2 = nm.Parameter("depgraph.b_score2",
                                     nm.uniform_init(rng, (num_scores,), cfg.score_hidden_dim))

    def parameters(self):
        yield from (self.w_fuse1, self.b_fuse1, self.w_fuse2, self.b_fuse2,
                    self.w_adapt_token, self.w_adapt_document)
        yield from self.gcn_weights
        yield from (self.w_pair_subject, self.w_pair_object,
                    self.w_score1, self.b_score1, self.w_score2, self.b_score2)


def _cosine(a_row, b_row):
    dot = nm.tensor_sum(a_row * b_row)
    norm_a = nm.sqrt(nm.tensor_sum(a_row * a_row))
    norm_b = nm.sqrt(nm.tensor_sum(b_row * b_row))
    return dot / (norm_a * norm_b)


def build_graph(doc, enc, bank, attention_weights, params: DepGraphParams):
    """Assemble node features and the weighted adjacency for one entity pair.

    `attention_weights` is the pair's sentence weight vector ([I]); the
    document node is that weighted average of sentence vectors, which is
    what makes the graph pair-specific.
    """
    skeleton = build_skeleton(doc, include_document_node=True)
    n = len(skeleton.nodes)

    token_rows = []
    for s_index, sentence in enumerate(doc.sentences):
        root_position = dependency_root(doc.dependency_parses[s_index])
        for token in sentence:
            row = enc.hidden[enc.index_map[token.global_index]:
                             enc.index_map[token.global_index] + 1, :]
            if token.position_in_sentence == root_position:
                fused_in = nm.concat([row, bank.sentence_row(s_index)], axis=1)
                hidden = nm.tanh(fused_in @ params.w_fuse1 + params.b_fuse1)
                row = hidden @ params.w_fuse2 + params.b_fuse2
            token_rows.append(row)

    mention_rows = []
    for entity in doc.entities:
        for mention in entity.mentions:
            positions = [enc.index_map[i] for i in range(mention.start, mention.end)]
            mention_rows.append(nm.reshape(
                nm.mean(nm.gather(enc.hidden, positions), axis=0), (1, enc.width)))

    weight_row = nm.reshape(attention_weights, (1, bank.sentence_count))
    document_row = weight_row @ bank.vectors

    token_block = nm.concat(token_rows + mention_rows, axis=0) @ params.w_adapt_token
    document_block = document_row @ params.w_adapt_document
    features = nm.concat([token_block, document_block], axis=0)

    base = np.zeros((n, n), dtype=np.float64)
    for edge in skeleton.edges:
        a, b = tuple(edge)
        base[a, b] = 1.0
        base[b, a] = 1.0

    sentence_count = len(doc.sentences)
    soft_rows, soft_cols, soft_values = [], [], []
    for i in range(sentence_count):
        for j in range(i + 2, sentence_count):
            soft_rows.append(skeleton.root_node[i])
            soft_cols.append(skeleton.root_node[j])
            soft_values.append(_cosine(bank.sentence_row(i), bank.sentence_row(j)))
    adjacency = nm.constant(base)
    if soft_values:
        flat = nm.concat([nm.reshape(v, (1,)) for v in soft_values], axis=0)
        adjacency = adjacency + nm.scatter(flat, soft_rows, soft_cols, (n, n))

    return SyntaxGraph(skeleton=skeleton, adjacency=adjacency, features=features)


def gcn_apply(adjacency, features, weights):
    """Row-normalized propagation with self-loops; tanh between layers only."""
    n = adjacency.shape[0]
    with_loops = adjacency + nm.constant(np.eye(n))
    row_sums = nm.tensor_sum(with_loops, axis=1)
    if np.any(np.abs(row_sums.data) < 1e-9):
        raise nm.ShapeError("adjacency row sum too small to normalize")
    normalized = nm.diag(nm.constant(np.ones(n)) / row_sums) @ with_loops
    out = features
    for layer, weight in enumerate(weights):
        out = normalized @ out @ weight
        if layer + 1 < len(weights):
            out = nm.tanh(out)
    return out


def gcn_forward(graph: SyntaxGraph, params: DepGraphParams):
    return gcn_apply(graph.adjacency, graph.features, params.gcn_weights)


def entity_pool(graph: SyntaxGraph, node_features, entity_id):
    """Smooth-maximum pool over the entity's mention-node features."""
    indices = graph.skeleton.mention_nodes_of(entity_id)
    if not indices:
        raise KeyError(f"entity {entity_id} has no mention nodes")
    if len(indices) == 1:
        i = indices[0]
        return nm.reshape(node_features[i:i + 1, :], (node_features.shape[1],))
    return nm.logsumexp(nm.gather(node_features, indices), axis=0)


def hop_distance(skeleton: GraphSkeleton, source):
    """BFS distances over the unit-edge skeleton from one node."""
    distances = [-1] * len(skeleton.nodes)
    distances[source] = 0
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for neighbor in skeleton.neighbors[node]:
            if distances[neighbor] < 0:
                distances[neighbor] = distances[node] + 1
                queue.append(neighbor)
    return distances


def shortest_path_nodes(skeleton: GraphSkeleton, subject_id, object_id):
    """Fewest-hop node sequence between the closest mention pair.

    Ties break on the lexicographically smallest node-index sequence. The
    walk is greedy over a BFS distance field, which realizes exactly that
    tie rule. Returns None when the entities are disconnected.
    """
    subject_nodes = skeleton.mention_nodes_of(subject_id)
    object_nodes = skeleton.mention_nodes_of(object_id)
    best = None
    for target in object_nodes:
        distances = hop_distance(skeleton, target)
        for source in subject_nodes:
            if distances[source] < 0:
                continue
            path = [source]
            node = source
            while node != target:
                node = min(neighbor for neighbor in skeleton.neighbors[node]
                           if distances[neighbor] == distances[node] - 1)
                path.append(node)
            candidate = (len(path) - 1, path)
            if best is None or candidate < best:
                best = candidate
    return None if best is None else best[1]


def entity_pair_distance(skeleton: GraphSkeleton, subject_id, object_id):
    """Hop count between the nearest mention nodes; None if disconnected."""
    subject_nodes = skeleton.mention_nodes_of(subject_id)
    object_nodes = skeleton.mention_nodes_of(object_id)
    best = None
    for source in subject_nodes:
        distances = hop_distance(skeleton, source)
        for target in object_nodes:
            if distances[target] >= 0 and (best is None or distances[target] < best):
                best = distances[target]
    return best


def path_feature(graph: SyntaxGraph, node_features, subject_id, object_id,
                 pooled_subject, pooled_object):
    """Fixed 14-row path block: pooled endpoints, interior node features,
    zero padding; interiors past 12 are dropped from the far (object) end.
    """
    width = node_features.shape[1]
    path = shortest_path_nodes(graph.skeleton, subject_id, object_id)
    rows = [nm.reshape(pooled_subject, (1, width))]
    if path is not None:
        interior = path[1:-1][:PATH_INTERIOR]
        for index in interior:
            rows.append(node_features[index:index + 1, :])
    rows.append(nm.reshape(pooled_object, (1, width)))
    if len(rows) < PATH_ROWS:
        rows.append(nm.constant(np.zeros((PATH_ROWS - len(rows), width))))
    return nm.concat(rows, axis=0)


def pair_transform(pooled_subject, pooled_object, params: DepGraphParams, slope=0.01):
    """Leaky-rectified affine mix of the pooled pair; deliberately bias-free."""
    width = pooled_subject.shape[0]
    subject_row = nm.reshape(pooled_subject, (1, width))
    object_row = nm.reshape(pooled_object, (1, width))
    return nm.leaky_relu(subject_row @ params.w_pair_subject +
                         object_row @ params.w_pair_object, slope=slope)


def pair_representation(pooled_subject, pooled_object, pair_row, path_rows):
    width = pooled_subject.shape[0]
    flat_path = nm.reshape(path_rows, (1, PATH_ROWS * path_rows.shape[1]))
    return nm.concat([nm.reshape(pooled_subject, (1, width)),
                      nm.reshape(pooled_object, (1, width)),
                      pair_row, flat_path], axis=1)


def dep_score(pair_repr, params: DepGraphParams):
    """Two-layer feed-forward head over the assembled pair representation."""
    hidden = nm.sigmoid(pair_repr @ params.w_score1 + params.b_score1)
    out = hidden @ params.w_score2 + params.b_score2
    return nm.reshape(out, (out.shape[1],))


def graph_distance_stats(documents, with_document_node=True):
    """Hop-distance statistics between nearest mention nodes, over all
    unordered entity pairs of every document.
    """
    distances = []
    unreachable = 0
    for doc in documents:
        skeleton = build_skeleton(doc, include_document_node=with_document_node)
        ids = [entity.entity_id for entity in doc.entities]
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                distance = entity_pair_distance(skeleton, ids[a], ids[b])
                if distance is None:
                    unreachable += 1
                else:
                    distances.append(distance)
    if not distances:
        return {"pairs": 0, "unreachable": unreachable,
                "avg": 0.0, "std": 0.0, "max": 0, "min": 0}
    array = np.asarray(distances, dtype=np.float64)
    return {"pairs": len(distances), "unreachable": unreachable,
            "avg": float(array.mean()), "std": float(array.std()),
            "max": int(array.max()), "min": int(array.min())}
