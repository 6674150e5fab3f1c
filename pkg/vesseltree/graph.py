"""
Grafo geodésico sobre os landmarks levantados: matriz de distâncias (n_l execuções de
fast marching), clusterização single-linkage e árvores geradoras mínimas por cluster,
com as arestas realizadas como geodésicas.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .cache_manager import DistanceMapCache
from .core import LiftedField, LiftedLandmark, MetricParams
from .eikonal import GeodesicPath, backtrack_geodesic, path_length, solve_distance
from .errors import ConfigError, InfeasibleClusterError, NumericalError


@dataclass
class DistanceMatrix:
    nodes: List[LiftedLandmark]
    d: np.ndarray
    # leituras antes da simetrização; NaN onde a linha não leu o par
    raw: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self):
        return len(self.nodes)


@dataclass
class Clustering:
    labels: np.ndarray
    threshold: float

    @property
    def n_clusters(self):
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def members(self, cluster_id):
        return [int(i) for i in np.flatnonzero(self.labels == cluster_id)]


@dataclass
class VesselEdge:
    i: int
    j: int
    weight: float
    path: GeodesicPath
    degraded: bool = False
    error: Optional[str] = None

    def to_dict(self):
        data = {'i': self.i, 'j': self.j, 'weight': float(self.weight), 'polyline': self.path.to_list()}
        if self.degraded:
            data.update({'degraded': True, 'error': self.error})
        return data


@dataclass
class VesselTree:
    cluster_id: int
    nodes: List[int]
    edges: List[VesselEdge]

    def to_dict(self):
        return {'id': self.cluster_id, 'nodes': list(self.nodes), 'edges': [e.to_dict() for e in self.edges]}


class UnionFind:
    def __init__(self, num):
        self.parents = list(range(num))
        self.rank = [0] * num

    def find(self, x):
        root = x
        while self.parents[root] != root:
            root = self.parents[root]
        while self.parents[x] != root:
            self.parents[x], x = root, self.parents[x]
        return root

    def union(self, x, y):
        x, y = self.find(x), self.find(y)
        if x == y:
            return False
        if self.rank[x] < self.rank[y]:
            x, y = y, x
        self.parents[y] = x
        if self.rank[x] == self.rank[y]:
            self.rank[x] += 1
        return True


def _symmetrize(raw):
    """Média das leituras (i,j) e (j,i) quando ambas existem e são finitas."""
    transposed = raw.T
    both = np.isfinite(raw) & np.isfinite(transposed)
    d = np.where(both, 0.5 * (raw + transposed), np.inf)
    only_one = ~both & (np.isfinite(raw) | np.isfinite(transposed))
    d[only_one] = np.fmin(raw, transposed)[only_one]
    np.fill_diagonal(d, 0.0)
    return d


def pairwise_distances(cost: LiftedField, params: MetricParams, nodes: Sequence[LiftedLandmark],
                       cache: Optional[DistanceMapCache] = None, workers=1, upper_rows_only=False,
                       init_radius=2) -> DistanceMatrix:
    """
    Uma execução de fast marching por nó, com parada antecipada quando os demais nós
    (ou só os de índice maior, com `upper_rows_only`) estão finalizados.
    As linhas rodam em paralelo; a montagem é feita na ordem dos índices.
    """
    nodes = list(nodes)
    n = len(nodes)
    spec = cost.spec
    for node in nodes:
        spec.node_of(*node.position)
    raw = np.full((n, n), np.nan)

    def compute_row(i):
        others = [j for j in range(n) if j != i and (j > i or not upper_rows_only)]
        if not others:
            return i, None, others
        distance_map = solve_distance(cost, params, nodes[i], targets=[nodes[j] for j in others],
                                      init_radius=init_radius)
        if cache is not None:
            cache.set(i, distance_map)
        logging.info(f"Distance row {i + 1}/{n} finalized {distance_map.finalized} nodes")
        return i, distance_map, others

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        rows = list(executor.map(compute_row, range(n)))

    for i, distance_map, others in rows:
        raw[i, i] = 0.0
        for j in others:
            raw[i, j] = distance_map.value_at(nodes[j])

    return DistanceMatrix(nodes, _symmetrize(raw), raw)


def cluster_landmarks(matrix: DistanceMatrix, s_cluster: float) -> Clustering:
    """
    Single linkage cortado em s_cluster: componentes conexas do grafo {(i, j): d_ij < s}.
    Os ids seguem o menor índice de cada cluster.
    """
    if not s_cluster > 0:
        raise ConfigError(f"s_cluster must be positive, got {s_cluster}.")
    n = len(matrix)
    if n == 0:
        return Clustering(np.zeros(0, dtype=int), float(s_cluster))
    with np.errstate(invalid='ignore'):
        adjacency = np.isfinite(matrix.d) & (matrix.d < s_cluster)
    np.fill_diagonal(adjacency, False)
    _, components = connected_components(csr_matrix(adjacency), directed=False)

    relabel = {}
    labels = np.empty(n, dtype=int)
    for i, component in enumerate(components):
        labels[i] = relabel.setdefault(component, len(relabel))
    logging.info(f"Clustering at s = {s_cluster:g}: {len(relabel)} clusters from {n} nodes.")
    return Clustering(labels, float(s_cluster))


def minimal_spanning_tree(matrix: DistanceMatrix, members: Sequence[int]):
    """Kruskal com union-find; empates resolvidos pela ordem lexicográfica de (i, j)."""
    members = sorted(int(m) for m in members)
    edges = []
    for a, i in enumerate(members):
        for j in members[a + 1:]:
            weight = float(matrix.d[i, j])
            if not np.isfinite(weight):
                raise InfeasibleClusterError(f"Nodes {i} and {j} are not connected by a finite geodesic.", (i, j))
            edges.append((weight, i, j))
    edges.sort()

    position = {node: a for a, node in enumerate(members)}
    forest = UnionFind(len(members))
    tree = []
    for weight, i, j in edges:
        if forest.union(position[i], position[j]):
            tree.append((i, j, weight))
            if len(tree) == len(members) - 1:
                break
    return tree


def _straight_path(cost, params, start, end):
    points = np.array([start, end], dtype=np.float64)
    return GeodesicPath(points, path_length(cost, params, points))


def build_vessel_trees(cost: LiftedField, params: MetricParams, matrix: DistanceMatrix, clustering: Clustering,
                       cache: Optional[DistanceMapCache] = None, step=0.25, stop_radius=1.0,
                       init_radius=2) -> List[VesselTree]:
    """
    MST por cluster; cada aresta vira a geodésica retraçada no mapa de distância do
    extremo de menor índice (recalculado se não estiver no cache).
    """
    nodes = matrix.nodes
    trees = []
    for cluster_id in range(clustering.n_clusters):
        members = clustering.members(cluster_id)
        edges = []
        for i, j, weight in minimal_spanning_tree(matrix, members):
            distance_map = cache.get(i) if cache is not None else None
            if distance_map is None or not np.isfinite(distance_map.value_at(nodes[j])):
                distance_map = solve_distance(cost, params, nodes[i], targets=[nodes[j]], init_radius=init_radius)
            try:
                path = backtrack_geodesic(distance_map, cost, params, nodes[j], step=step, stop_radius=stop_radius)
                edges.append(VesselEdge(i, j, weight, path))
            except NumericalError as e:
                logging.warning(f"Edge ({i}, {j}) of cluster {cluster_id} degraded to a straight segment: {e}")
                path = _straight_path(cost, params, nodes[j].position, nodes[i].position)
                edges.append(VesselEdge(i, j, weight, path, degraded=True, error=str(e)))
        trees.append(VesselTree(cluster_id, members, edges))

    logging.info(f"Built {len(trees)} vessel trees with {sum(len(t.edges) for t in trees)} edges.")
    return trees
