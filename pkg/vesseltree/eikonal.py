"""
Mapas de distância geodésica para a métrica Reeds-Shepp relaxada.

- solve_distance: fast marching semi-Lagrangiano (label-setting com heap) sobre a grade
  levantada. Cada atualização minimiza, sobre vértices, arestas e triângulos do stencil
  já aceitos, o comprimento métrico do segmento (custo no ponto médio) mais U interpolado.
  Com `factored`, interpola-se também o resíduo U - U0, onde U0 é a distância exata da
  métrica congelada na semente; isso remove o erro da singularidade da fonte.
- backtrack_geodesic: descida de U a partir de um alvo até a semente.
- dijkstra_oracle: caminho mínimo exato num grafo de vizinhança da mesma grade,
  usado para validação.

O laço do fast marching roda compilado (numba, sem GIL), então linhas da matriz de
distâncias rodam de fato em paralelo em threads.
"""
import math
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np
from numba import njit
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .core import GridSpec, LiftedField, LiftedLandmark, MetricParams, trilinear, wrap_theta
from .errors import BacktrackStallError, ConfigError, NumericalError
from .metric import inverse_orientation_tensor, orientation_tensor, unit_norm

FAR, TRIAL, ACCEPTED = 0, 1, 2


@dataclass(frozen=True)
class DistanceMap:
    field: LiftedField
    seed: LiftedLandmark
    params: MetricParams
    causality_violations: int = 0

    @property
    def spec(self):
        return self.field.spec

    @property
    def finalized(self):
        return int(np.isfinite(self.field.values).sum())

    def value_at(self, landmark: LiftedLandmark):
        """Valor de U no nó mais próximo do landmark (inf se não foi finalizado)."""
        i, j, k = self.spec.node_of(*landmark.position)
        return float(self.field.values[i, j, k])


@dataclass(frozen=True)
class GeodesicPath:
    """Amostras (x, y, theta) do alvo até a semente."""
    points: np.ndarray = field(repr=False)
    length: float
    fallback_steps: int = 0

    def __len__(self):
        return len(self.points)

    def to_list(self):
        return [[float(x), float(y), float(t)] for x, y, t in self.points]


# --- stencil -------------------------------------------------------------------------

BASE_OFFSETS = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1) if (a, b, c) != (0, 0, 0)]

# vizinhos de uma face do cubo, em ordem cíclica
_FACE_RING = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


def _base_facets():
    """Triângulos da superfície do cubo 3x3x3: cada face é um leque de 8 triângulos em torno do centro."""
    facets = []
    for axis in range(3):
        p, q = [a for a in range(3) if a != axis]
        for sign in (1, -1):
            center = [0, 0, 0]
            center[axis] = sign
            ring = []
            for dp, dq in _FACE_RING:
                vertex = list(center)
                vertex[p], vertex[q] = dp, dq
                ring.append(tuple(vertex))
            for t in range(len(ring)):
                facets.append((tuple(center), ring[t], ring[(t + 1) % len(ring)]))
    return facets


BASE_FACETS = _base_facets()


def stencil_radius(epsilon):
    """Raio espacial L-inf do stencil: cresce com a anisotropia 1/eps."""
    if 1.0 / epsilon > 6:
        return 3
    if 1.0 / epsilon > 2:
        return 2
    return 1


def stencil_offsets(theta, radius):
    """Offsets (di, dj, dk) do stencil de um nó com orientação theta."""
    offsets = list(BASE_OFFSETS)
    for a in range(-radius, radius + 1):
        for b in range(-radius, radius + 1):
            if max(abs(a), abs(b)) < 2 or math.gcd(abs(a), abs(b)) != 1:
                continue
            phi = math.atan2(b, a) % math.pi
            delta = abs(phi - theta % math.pi)
            if min(delta, math.pi - delta) <= math.pi / 4 + 1e-9:
                offsets.extend((a, b, dk) for dk in (-1, 0, 1))
    return offsets


def _physical(offset, spec: GridSpec):
    return np.array([offset[0] * spec.spacing, offset[1] * spec.spacing, offset[2] * spec.dtheta])


def _pair_partners(offsets):
    """Pares de offsets usados nas atualizações por aresta."""
    directions = sorted({math.atan2(b, a) for a, b, _ in offsets if (a, b) != (0, 0)})
    neighbor_directions = {}
    for n, phi in enumerate(directions):
        neighbor_directions[phi] = {directions[n - 1], directions[(n + 1) % len(directions)]}
    partners = {o: [] for o in offsets}
    for o in offsets:
        for other in offsets:
            if other == o:
                continue
            close = max(abs(o[0] - other[0]), abs(o[1] - other[1]), abs(o[2] - other[2])) <= 1
            adjacent = (abs(o[2] - other[2]) <= 1 and (o[0], o[1]) != (0, 0) and (other[0], other[1]) != (0, 0)
                        and math.atan2(other[1], other[0]) in neighbor_directions[math.atan2(o[1], o[0])])
            if close or adjacent:
                partners[o].append(other)
    return partners


def _symmetric_entries(matrix):
    return (float(matrix[0, 0]), float(matrix[0, 1]), float(matrix[0, 2]),
            float(matrix[1, 1]), float(matrix[1, 2]), float(matrix[2, 2]))


@dataclass(frozen=True, eq=False)
class UpdateTable:
    """
    Tabela reversa de atualização em formato CSR. As entradas do bin k_a (nó recém aceito)
    ficam em entry_start[k_a]:entry_start[k_a + 1]; cada entrada e tem seus pares em
    pair_start[e]:pair_start[e + 1] e seus triângulos em tri_start[e]:tri_start[e + 1].

    entry_int: (di, dj, dk, k_n), offset do nó n até o nó aceito e bin do nó n.
    pair_int: offset do segundo nó a partir de n; pair_real: (aa, bb, cc).
    tri_int: offsets dos outros dois vértices; tri_real: (s, r0, r1, r2, g[6], G[6]),
    com g = E^-1 M^-1 E^-T e G = E^T M E.
    """
    radius: int
    entry_start: np.ndarray
    entry_int: np.ndarray
    entry_length: np.ndarray
    pair_start: np.ndarray
    pair_int: np.ndarray
    pair_real: np.ndarray
    tri_start: np.ndarray
    tri_int: np.ndarray
    tri_real: np.ndarray

    def __len__(self):
        return len(self.entry_length)


@lru_cache(maxsize=8)
def build_update_table(spec: GridSpec, params: MetricParams) -> UpdateTable:
    """
    Para cada bin k_a, todos os nós n cujo stencil contém o nó aceito, com a geometria
    (métrica unitária no ponto médio) pré-calculada por bin de theta.
    """
    radius = stencil_radius(params.epsilon)
    buckets = [[] for _ in range(spec.n_theta)]
    eps, xi = params.epsilon, params.xi

    for k_n in range(spec.n_theta):
        theta_n = k_n * spec.dtheta
        offsets = stencil_offsets(theta_n, radius)
        partners = _pair_partners(offsets)
        facets_of = {o: [] for o in offsets}
        for facet in BASE_FACETS:
            for position, vertex in enumerate(facet):
                facets_of[vertex].append(facet[position:] + facet[:position])

        for o in offsets:
            e1 = _physical(o, spec)
            vertex_length = unit_norm(theta_n + 0.5 * o[2] * spec.dtheta, e1[0], e1[1], e1[2], eps, xi)

            pairs = []
            for other in partners[o]:
                e2 = _physical(other, spec)
                metric = orientation_tensor(theta_n + 0.25 * (o[2] + other[2]) * spec.dtheta, params)
                d = e1 - e2
                pairs.append((other, (float(d @ metric @ d), float(d @ metric @ e2), float(e2 @ metric @ e2))))

            triangles = []
            for facet in facets_of[o]:
                edges = np.column_stack([_physical(v, spec) for v in facet])
                theta_mid = theta_n + 0.5 * (sum(v[2] for v in facet) / 3.0) * spec.dtheta
                edges_inv = np.linalg.inv(edges)
                g = edges_inv @ inverse_orientation_tensor(theta_mid, params) @ edges_inv.T
                gram = edges.T @ orientation_tensor(theta_mid, params) @ edges
                row = g.sum(axis=1)
                (_, o2, o3) = facet
                triangles.append((o2 + o3, (float(row.sum()), float(row[0]), float(row[1]), float(row[2]))
                                  + _symmetric_entries(g) + _symmetric_entries(gram)))

            k_a = (k_n + o[2]) % spec.n_theta
            buckets[k_a].append((o, k_n, vertex_length, pairs, triangles))

    entry_start, entry_int, entry_length = [0], [], []
    pair_start, pair_int, pair_real = [0], [], []
    tri_start, tri_int, tri_real = [0], [], []
    for bucket in buckets:
        for o, k_n, vertex_length, pairs, triangles in bucket:
            entry_int.append(o + (k_n,))
            entry_length.append(vertex_length)
            for other, coefficients in pairs:
                pair_int.append(other)
                pair_real.append(coefficients)
            pair_start.append(len(pair_int))
            for corners, coefficients in triangles:
                tri_int.append(corners)
                tri_real.append(coefficients)
            tri_start.append(len(tri_int))
        entry_start.append(len(entry_int))

    table = UpdateTable(
        radius=radius,
        entry_start=np.array(entry_start, dtype=np.int64),
        entry_int=np.array(entry_int, dtype=np.int64).reshape(-1, 4),
        entry_length=np.array(entry_length, dtype=np.float64),
        pair_start=np.array(pair_start, dtype=np.int64),
        pair_int=np.array(pair_int, dtype=np.int64).reshape(-1, 3),
        pair_real=np.array(pair_real, dtype=np.float64).reshape(-1, 3),
        tri_start=np.array(tri_start, dtype=np.int64),
        tri_int=np.array(tri_int, dtype=np.int64).reshape(-1, 6),
        tri_real=np.array(tri_real, dtype=np.float64).reshape(-1, 16),
    )
    logging.debug(f"Stencil radius {radius}: {len(table)} reverse entries, {len(tri_int)} triangles "
                  f"for {spec.n_theta} bins.")
    return table


# --- fast marching -------------------------------------------------------------------

def _check_cost(cost: LiftedField):
    if not (cost.values > 0).all():
        raise ConfigError("Cost field must be strictly positive for the eikonal solver.")


def _segment_value(cost_flat, spec: GridSpec, params: MetricParams, seed_node, node):
    """Comprimento métrico do segmento reto entre dois nós (custo médio das pontas)."""
    (si, sj, sk), (i, j, k) = seed_node, node
    dk = (k - sk + spec.n_theta // 2) % spec.n_theta - spec.n_theta // 2
    c_mid = 0.5 * (cost_flat[spec.flat_index(si, sj, sk)] + cost_flat[spec.flat_index(i, j, k)])
    theta_mid = (sk + 0.5 * dk) * spec.dtheta
    return c_mid * unit_norm(theta_mid, (i - si) * spec.spacing, (j - sj) * spec.spacing, dk * spec.dtheta,
                             params.epsilon, params.xi)


@njit(cache=True, nogil=True)
def _source_distance(x, y, theta, geometry):
    """U0: distância da métrica congelada na semente, com custo da semente e theta periódico."""
    dx = x - geometry[0]
    dy = y - geometry[1]
    dt = theta - geometry[2]
    dt -= math.pi * math.floor(dt / math.pi + 0.5)
    along = dx * geometry[8] + dy * geometry[9]
    side = (dx * geometry[9] - dy * geometry[8]) * geometry[4]
    return geometry[3] * math.sqrt(along * along + side * side + geometry[5] * geometry[5] * dt * dt)


@njit(cache=True, nogil=True)
def _heap_less(values, a, b):
    return values[a] < values[b] or (values[a] == values[b] and a < b)


@njit(cache=True, nogil=True)
def _heap_push(heap, position, values, count, node):
    """Insere `node`, ou o sobe depois que seu valor diminuiu. Devolve o novo tamanho."""
    slot = position[node]
    if slot < 0:
        slot = count
        count += 1
    while slot > 0:
        parent = (slot - 1) >> 1
        other = heap[parent]
        if not _heap_less(values, node, other):
            break
        heap[slot] = other
        position[other] = slot
        slot = parent
    heap[slot] = node
    position[node] = slot
    return count


@njit(cache=True, nogil=True)
def _heap_pop(heap, position, values, count):
    top = heap[0]
    position[top] = -1
    count -= 1
    if count > 0:
        node = heap[count]
        slot = 0
        while True:
            child = 2 * slot + 1
            if child >= count:
                break
            if child + 1 < count and _heap_less(values, heap[child + 1], heap[child]):
                child += 1
            other = heap[child]
            if not _heap_less(values, other, node):
                break
            heap[slot] = other
            position[other] = slot
            slot = child
        heap[slot] = node
        position[node] = slot
    return top, count


@njit(cache=True, nogil=True)
def _march(costs, values, support, state, width, height, n_theta, geometry,
           entry_start, entry_int, entry_length, pair_start, pair_int, pair_real,
           tri_start, tri_int, tri_real, targets, remaining, factored):
    """
    Laço principal. `values`, `support` e `state` são atualizados no lugar; os nós TRIAL
    iniciais formam o heap. `remaining` < 0 desliga a parada antecipada.
    Devolve (nós finalizados, violações de causalidade).
    """
    size = width * height * n_theta
    h = geometry[6]
    dtheta = geometry[7]

    source = np.empty(size)
    for i in range(width):
        for j in range(height):
            for k in range(n_theta):
                source[(i * height + j) * n_theta + k] = _source_distance(i * h, j * h, k * dtheta, geometry)

    heap = np.empty(size, dtype=np.int64)
    position = np.full(size, -1, dtype=np.int64)
    count = 0
    for node in range(size):
        if state[node] == TRIAL:
            count = _heap_push(heap, position, values, count, node)

    accepted = 0
    violations = 0
    while count > 0:
        a, count = _heap_pop(heap, position, values, count)
        u_a = values[a]
        state[a] = ACCEPTED
        accepted += 1
        if u_a < support[a] * (1.0 - 1e-9):
            violations += 1
        if remaining >= 0:
            if targets[a]:
                remaining -= 1
            if remaining == 0:
                break

        ij_a = a // n_theta
        k_a = a - ij_a * n_theta
        i_a = ij_a // height
        j_a = ij_a - i_a * height
        c_a = costs[a]
        r_a = u_a - source[a]

        for e in range(entry_start[k_a], entry_start[k_a + 1]):
            i = i_a - entry_int[e, 0]
            j = j_a - entry_int[e, 1]
            if i < 0 or j < 0 or i >= width or j >= height:
                continue
            k_n = entry_int[e, 3]
            n = (i * height + j) * n_theta + k_n
            if state[n] == ACCEPTED:
                continue
            c_n = costs[n]
            best = values[n]
            best_support = support[n]

            candidate = u_a + 0.5 * (c_n + c_a) * entry_length[e]
            if candidate < best:
                best = candidate
                best_support = u_a

            x_n = i * h
            y_n = j * h
            theta_n = k_n * dtheta
            e1x = entry_int[e, 0] * h
            e1y = entry_int[e, 1] * h
            e1t = entry_int[e, 2] * dtheta

            for p in range(pair_start[e], pair_start[e + 1]):
                i2 = i + pair_int[p, 0]
                j2 = j + pair_int[p, 1]
                if i2 < 0 or j2 < 0 or i2 >= width or j2 >= height:
                    continue
                m = (i2 * height + j2) * n_theta + (k_n + pair_int[p, 2] + n_theta) % n_theta
                if state[m] != ACCEPTED:
                    continue
                u_m = values[m]
                c_mid = 0.5 * (c_n + 0.5 * (c_a + costs[m]))
                scale = c_mid * c_mid
                aa = pair_real[p, 0] * scale
                bb = pair_real[p, 1] * scale
                cc = pair_real[p, 2] * scale
                delta = u_a - u_m
                if aa <= delta * delta:
                    continue
                det = aa * cc - bb * bb
                if det <= 0.0:
                    continue
                lam = (-bb - delta * math.sqrt(det / (aa - delta * delta))) / aa
                if lam <= 0.0 or lam >= 1.0:
                    continue
                length = math.sqrt(aa * lam * lam + 2.0 * bb * lam + cc)
                candidate = length + u_m + delta * lam
                if factored:
                    mu = 1.0 - lam
                    u0 = _source_distance(x_n + lam * e1x + mu * pair_int[p, 0] * h,
                                          y_n + lam * e1y + mu * pair_int[p, 1] * h,
                                          theta_n + lam * e1t + mu * pair_int[p, 2] * dtheta, geometry)
                    alternative = length + u0 + lam * r_a + mu * (u_m - source[m])
                    if alternative < candidate:
                        candidate = alternative
                if candidate < best:
                    best = candidate
                    best_support = max(u_a, u_m)

            for t in range(tri_start[e], tri_start[e + 1]):
                i2 = i + tri_int[t, 0]
                j2 = j + tri_int[t, 1]
                i3 = i + tri_int[t, 3]
                j3 = j + tri_int[t, 4]
                if (i2 < 0 or j2 < 0 or i2 >= width or j2 >= height
                        or i3 < 0 or j3 < 0 or i3 >= width or j3 >= height):
                    continue
                m2 = (i2 * height + j2) * n_theta + (k_n + tri_int[t, 2] + n_theta) % n_theta
                m3 = (i3 * height + j3) * n_theta + (k_n + tri_int[t, 5] + n_theta) % n_theta
                if state[m2] != ACCEPTED or state[m3] != ACCEPTED:
                    continue
                u2 = values[m2]
                u3 = values[m3]
                c_mid = 0.5 * (c_n + (c_a + costs[m2] + costs[m3]) / 3.0)
                s = tri_real[t, 0]
                r0, r1, r2 = tri_real[t, 1], tri_real[t, 2], tri_real[t, 3]
                g00, g01, g02 = tri_real[t, 4], tri_real[t, 5], tri_real[t, 6]
                g11, g12, g22 = tri_real[t, 7], tri_real[t, 8], tri_real[t, 9]
                gu0 = g00 * u_a + g01 * u2 + g02 * u3
                gu1 = g01 * u_a + g11 * u2 + g12 * u3
                gu2 = g02 * u_a + g12 * u2 + g22 * u3
                tt = r0 * u_a + r1 * u2 + r2 * u3
                q = u_a * gu0 + u2 * gu1 + u3 * gu2
                disc = tt * tt - s * (q - c_mid * c_mid)
                if disc < 0.0:
                    continue
                candidate = (tt + math.sqrt(disc)) / s
                # pesos upwind: proporcionais às coordenadas baricêntricas do pé da característica
                w0 = candidate * r0 - gu0
                w1 = candidate * r1 - gu1
                w2 = candidate * r2 - gu2
                tolerance = -1e-12 * (1.0 + abs(candidate))
                if w0 < tolerance or w1 < tolerance or w2 < tolerance:
                    continue
                if factored:
                    w0 = max(w0, 0.0)
                    w1 = max(w1, 0.0)
                    w2 = max(w2, 0.0)
                    total = w0 + w1 + w2
                    if total > 0.0:
                        w0 /= total
                        w1 /= total
                        w2 /= total
                        norm2 = (tri_real[t, 10] * w0 * w0 + tri_real[t, 13] * w1 * w1 + tri_real[t, 15] * w2 * w2
                                 + 2.0 * (tri_real[t, 11] * w0 * w1 + tri_real[t, 12] * w0 * w2
                                          + tri_real[t, 14] * w1 * w2))
                        u0 = _source_distance(
                            x_n + w0 * e1x + (w1 * tri_int[t, 0] + w2 * tri_int[t, 3]) * h,
                            y_n + w0 * e1y + (w1 * tri_int[t, 1] + w2 * tri_int[t, 4]) * h,
                            theta_n + w0 * e1t + (w1 * tri_int[t, 2] + w2 * tri_int[t, 5]) * dtheta, geometry)
                        alternative = (c_mid * math.sqrt(max(norm2, 0.0)) + u0 + w0 * r_a
                                       + w1 * (u2 - source[m2]) + w2 * (u3 - source[m3]))
                        if alternative < candidate:
                            candidate = alternative
                if candidate < best:
                    best = candidate
                    best_support = max(u_a, u2, u3)

            if best < values[n]:
                values[n] = best
                support[n] = best_support
                state[n] = TRIAL
                count = _heap_push(heap, position, values, count, n)

    return accepted, violations


def solve_distance(cost: LiftedField, params: MetricParams, seed: LiftedLandmark,
                   targets: Optional[Iterable[LiftedLandmark]] = None, init_radius=2,
                   factored=True) -> DistanceMap:
    """
    Fast marching a partir da semente. Com `targets`, para assim que todos os alvos
    são finalizados; nós não finalizados ficam em +inf. Valores finalizados são
    idênticos aos de uma execução completa.
    """
    spec = cost.spec
    _check_cost(cost)
    seed_node = spec.node_of(*seed.position)
    width, height, n_theta = spec.shape
    table = build_update_table(spec, params)

    costs = np.array(cost.values, dtype=np.float64).ravel()
    values = np.full(spec.size, math.inf)
    support = np.zeros(spec.size)
    state = np.full(spec.size, FAR, dtype=np.uint8)

    seed_index = spec.flat_index(*seed_node)
    values[seed_index] = 0.0
    state[seed_index] = TRIAL
    si, sj, sk = seed_node
    for i in range(max(0, si - init_radius), min(width, si + init_radius + 1)):
        for j in range(max(0, sj - init_radius), min(height, sj + init_radius + 1)):
            for dk in (-1, 0, 1):
                k = (sk + dk) % n_theta
                index = spec.flat_index(i, j, k)
                if index == seed_index:
                    continue
                values[index] = _segment_value(costs, spec, params, seed_node, (i, j, k))
                state[index] = TRIAL

    target_mask = np.zeros(spec.size, dtype=np.bool_)
    remaining = -1
    if targets is not None:
        for target in targets:
            target_mask[spec.flat_index(*spec.node_of(*target.position))] = True
        target_mask[seed_index] = False
        remaining = int(target_mask.sum())

    theta_s = sk * spec.dtheta
    geometry = np.array([si * spec.spacing, sj * spec.spacing, theta_s, costs[seed_index], 1.0 / params.epsilon,
                         params.xi, spec.spacing, spec.dtheta, math.cos(theta_s), math.sin(theta_s)])

    accepted_count, violations = _march(
        costs, values, support, state, width, height, n_theta, geometry,
        table.entry_start, table.entry_int, table.entry_length, table.pair_start, table.pair_int, table.pair_real,
        table.tri_start, table.tri_int, table.tri_real, target_mask, remaining, bool(factored))

    output = np.where(state == ACCEPTED, values, math.inf)
    if violations:
        logging.warning(f"Causality audit: {violations} nodes finalized below their support value.")
    logging.debug(f"Fast marching from {seed_node}: {accepted_count} nodes finalized.")
    return DistanceMap(LiftedField(spec, output.reshape(spec.shape), allow_infinite=True), seed, params,
                       int(violations))


# --- backtracking --------------------------------------------------------------------

def _theta_gap(fk_a, fk_b, n_theta):
    delta = abs(fk_a - fk_b) % n_theta
    return min(delta, n_theta - delta)


def path_length(cost: LiftedField, params: MetricParams, points):
    """Comprimento métrico de uma poligonal por quadratura no ponto médio."""
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 2:
        return 0.0
    spec = cost.spec
    start, end = points[:-1], points[1:]
    dtheta = (end[:, 2] - start[:, 2] + math.pi / 2) % math.pi - math.pi / 2
    mid_x = 0.5 * (start[:, 0] + end[:, 0])
    mid_y = 0.5 * (start[:, 1] + end[:, 1])
    mid_theta = start[:, 2] + 0.5 * dtheta
    c_mid = trilinear(cost.values, spec, mid_x / spec.spacing, mid_y / spec.spacing, mid_theta / spec.dtheta)
    dx, dy = end[:, 0] - start[:, 0], end[:, 1] - start[:, 1]
    along = dx * np.cos(mid_theta) + dy * np.sin(mid_theta)
    side = dx * np.sin(mid_theta) - dy * np.cos(mid_theta)
    norm = np.sqrt(along ** 2 + side ** 2 / params.epsilon ** 2 + params.xi ** 2 * dtheta ** 2)
    return float(np.sum(c_mid * norm))


def backtrack_geodesic(dist: DistanceMap, cost: LiftedField, params: MetricParams, target: LiftedLandmark,
                       step=0.25, stop_radius=1.0, max_steps=None) -> GeodesicPath:
    """
    Integra gamma' = -M^-1 grad U do alvo até a semente, com passo fixo em voxels.
    Quando o passo não reduz U, desce para o vizinho de menor U (26-vizinhança).
    """
    spec = dist.spec
    values = dist.field.values
    if not math.isfinite(dist.value_at(target)):
        raise NumericalError(f"Target {target.position} was not reached by the distance map.")

    seed_x, seed_y, seed_theta = dist.seed.position
    si, sj, sk = spec.node_of(seed_x, seed_y, seed_theta)
    seed_position = spec.position_of(si, sj, sk)
    x, y, theta = target.position
    p = np.array([x / spec.spacing, y / spec.spacing, wrap_theta(theta) / spec.dtheta])
    seed_index = np.array([si, sj, sk], dtype=np.float64)

    def seed_gap(point):
        return max(abs(point[0] - si), abs(point[1] - sj), _theta_gap(point[2], sk, spec.n_theta))

    if seed_gap(p) <= 1e-9:
        return GeodesicPath(np.array([seed_position]), 0.0)

    finite = np.isfinite(values)
    filled = np.where(finite, values, 2.0 * values[finite].max() + 1.0)
    grad_i = np.gradient(filled, axis=0)
    grad_j = np.gradient(filled, axis=1)
    grad_k = 0.5 * (np.roll(filled, -1, axis=2) - np.roll(filled, 1, axis=2))

    def sample(array, point):
        return float(trilinear(array, spec, point[0], point[1], point[2]))

    if max_steps is None:
        max_steps = int(10 * sum(spec.shape) / step) + 100
    upper = np.array([spec.width - 1, spec.height - 1])
    trail = [p.copy()]
    fallback_steps = 0

    for _ in range(max_steps):
        if seed_gap(p) <= stop_radius:
            break
        u_here = sample(filled, p)
        theta_here = p[2] * spec.dtheta
        gradient = np.array([sample(grad_i, p) / spec.spacing, sample(grad_j, p) / spec.spacing,
                             sample(grad_k, p) / spec.dtheta])
        velocity = -inverse_orientation_tensor(theta_here, params) @ gradient
        direction = velocity / np.array([spec.spacing, spec.spacing, spec.dtheta])
        norm = float(np.linalg.norm(direction))

        moved = False
        if norm > 0 and math.isfinite(norm):
            candidate = p + step * direction / norm
            candidate[:2] = np.clip(candidate[:2], 0.0, upper)
            candidate[2] %= spec.n_theta
            if sample(filled, candidate) < u_here:
                p = candidate
                moved = True

        if not moved:
            node = np.rint(p).astype(int)
            node[:2] = np.clip(node[:2], 0, upper)
            node[2] %= spec.n_theta
            best, best_node = filled[tuple(node)], None
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    for dk in (-1, 0, 1):
                        ni, nj = node[0] + di, node[1] + dj
                        if (di, dj, dk) == (0, 0, 0) or not (0 <= ni < spec.width and 0 <= nj < spec.height):
                            continue
                        neighbor = (ni, nj, (node[2] + dk) % spec.n_theta)
                        if filled[neighbor] < best:
                            best, best_node = filled[neighbor], neighbor
            if best_node is None:
                if np.array_equal(node, seed_index.astype(int)):
                    break
                stall = spec.position_of(*node)
                raise BacktrackStallError(f"Backtracking stalled at {stall}.", stall)
            p = np.array(best_node, dtype=np.float64)
            fallback_steps += 1
        trail.append(p.copy())
    else:
        stall = spec.position_of(*np.rint(p).astype(int))
        raise BacktrackStallError(f"Backtracking did not reach the seed within {max_steps} steps.", stall)

    points = [(q[0] * spec.spacing, q[1] * spec.spacing, wrap_theta(q[2] * spec.dtheta)) for q in trail]
    points.append(seed_position)
    points = np.array(points)
    if fallback_steps:
        logging.debug(f"Backtracking used {fallback_steps} discrete descent steps.")
    return GeodesicPath(points, path_length(cost, params, points), fallback_steps)


# --- oracle --------------------------------------------------------------------------

def dijkstra_oracle(cost: LiftedField, params: MetricParams, seed: LiftedLandmark, radius=3) -> DistanceMap:
    """
    Caminho mínimo no grafo cujos nós são os pontos da grade e cujas arestas ligam nós a
    distância L-inf <= radius (theta periódico). Peso = comprimento métrico do segmento
    reto com o custo amostrado no ponto médio.
    """
    if radius < 1:
        raise ConfigError(f"Oracle radius must be >= 1, got {radius}.")
    spec = cost.spec
    _check_cost(cost)
    seed_node = spec.node_of(*seed.position)
    width, height, n_theta = spec.shape

    grid_i, grid_j, grid_k = np.meshgrid(np.arange(width), np.arange(height), np.arange(n_theta), indexing='ij')
    grid_i, grid_j, grid_k = grid_i.ravel(), grid_j.ravel(), grid_k.ravel()
    theta_radius = min(radius, n_theta // 2)

    sources, targets, weights = [], [], []
    for a in range(-radius, radius + 1):
        for b in range(-radius, radius + 1):
            for dk in range(-theta_radius, theta_radius + 1):
                if (a, b, dk) == (0, 0, 0):
                    continue
                valid = ((grid_i + a >= 0) & (grid_i + a < width) & (grid_j + b >= 0) & (grid_j + b < height))
                i, j, k = grid_i[valid], grid_j[valid], grid_k[valid]
                c_mid = trilinear(cost.values, spec, i + 0.5 * a, j + 0.5 * b, k + 0.5 * dk)
                theta_mid = (k + 0.5 * dk) * spec.dtheta
                dx, dy, dtheta = a * spec.spacing, b * spec.spacing, dk * spec.dtheta
                along = dx * np.cos(theta_mid) + dy * np.sin(theta_mid)
                side = dx * np.sin(theta_mid) - dy * np.cos(theta_mid)
                norm = np.sqrt(along ** 2 + side ** 2 / params.epsilon ** 2 + (params.xi * dtheta) ** 2)
                sources.append((i * height + j) * n_theta + k)
                targets.append(((i + a) * height + (j + b)) * n_theta + (k + dk) % n_theta)
                weights.append(c_mid * norm)

    sources = np.concatenate(sources)
    targets = np.concatenate(targets)
    weights = np.concatenate(weights)
    # offsets que dão a volta em theta podem repetir o mesmo par de nós: fica o menor peso
    keys = sources.astype(np.int64) * spec.size + targets
    order = np.lexsort((weights, keys))
    _, first = np.unique(keys[order], return_index=True)
    keep = order[first]
    graph = csr_matrix((weights[keep], (sources[keep], targets[keep])), shape=(spec.size, spec.size))

    seed_index = spec.flat_index(*seed_node)
    distances = dijkstra(graph, directed=True, indices=seed_index)
    logging.info(f"Dijkstra oracle: {len(keep)} edges, radius {radius}.")
    return DistanceMap(LiftedField(spec, distances.reshape(spec.shape), allow_infinite=True), seed, params)
