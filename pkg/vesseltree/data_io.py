"""
Leitura e escrita de todos os formatos de arquivo do vesseltree: imagens, trajetórias,
campos levantados (container LFT1), landmarks, heatmaps, matrizes e árvores.
"""
import json
import logging
import os
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from PIL import Image, ImageSequence

from .core import GridSpec, Landmark, LiftedField, LiftedLandmark, MetricParams
from .eikonal import DistanceMap
from .errors import ConfigError, InputError
from .graph import DistanceMatrix
from .landmarks import HEATMAP_CHANNELS, Heatmap
from .lift import Trajectory

LFT_MAGIC = b"LFT1"
LFT_HEADER = 16
FLOAT32_MAX = np.finfo(np.float32).max
TRAJECTORY_COLUMNS = ['track_id', 't', 'x', 'y', 'vx', 'vy']


def _require(path):
    if not os.path.exists(path):
        raise InputError(f"Input file not found: {path}")


def write_json(path, data):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True)


def read_json(path):
    _require(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(f"Could not parse JSON file {path}: {e}") from e


# --- LFT1 ----------------------------------------------------------------------------

def write_lifted(path, lifted: LiftedField):
    """Header de 16 bytes ("LFT1", N_x, N_y, N_theta em u32 little-endian) + float32 LE em ordem x-major."""
    values = np.where(np.isinf(lifted.values), FLOAT32_MAX, lifted.values).astype('<f4')
    header = LFT_MAGIC + np.array(lifted.spec.shape, dtype='<u4').tobytes()
    with open(path, 'wb') as f:
        f.write(header)
        f.write(np.ascontiguousarray(values).tobytes(order='C'))


def read_lifted(path, spacing=1.0) -> LiftedField:
    _require(path)
    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < LFT_HEADER or raw[:4] != LFT_MAGIC:
        raise InputError(f"{path} is not an LFT1 container.")
    width, height, n_theta = (int(v) for v in np.frombuffer(raw[4:LFT_HEADER], dtype='<u4'))
    data = np.frombuffer(raw[LFT_HEADER:], dtype='<f4')
    if data.size != width * height * n_theta:
        raise InputError(f"{path}: expected {width * height * n_theta} values, found {data.size}.")
    values = data.astype(np.float64).reshape(width, height, n_theta)
    unreached = values >= FLOAT32_MAX
    values[unreached] = np.inf
    return LiftedField(GridSpec(width, height, n_theta, spacing), values, allow_infinite=bool(unreached.any()))


def _sidecar(path):
    return f"{path}.json"


def write_distance_map(path, distance_map: DistanceMap):
    write_lifted(path, distance_map.field)
    write_json(_sidecar(path), {
        'seed': distance_map.seed.to_dict(),
        'params': distance_map.params.to_dict(),
        'causality_violations': distance_map.causality_violations,
    })


def read_distance_map(path) -> DistanceMap:
    lifted = read_lifted(path)
    meta = read_json(_sidecar(path))
    params = meta['params']
    return DistanceMap(LiftedField(lifted.spec, lifted.values, allow_infinite=True),
                       LiftedLandmark.from_dict(meta['seed']),
                       MetricParams(params['epsilon'], params['xi'], params['lambda']),
                       int(meta.get('causality_violations', 0)))


# --- imagens -------------------------------------------------------------------------

def read_image(path) -> np.ndarray:
    """PNG/PGM em tons de cinza (8 ou 16 bits) -> array (N_x, N_y) em [0, 1]."""
    _require(path)
    try:
        img = Image.open(path)
        if img.mode in ('I;16', 'I;16B', 'I;16L', 'I'):
            data = np.asarray(img, dtype=np.float64) / 65535.0
        else:
            data = np.asarray(img.convert('L'), dtype=np.float64) / 255.0
    except OSError as e:
        raise InputError(f"Could not read image {path}: {e}") from e
    return np.clip(data, 0.0, 1.0).T


def write_image(path, image, bits=8):
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0).T
    if bits == 16:
        Image.fromarray((image * 65535).round().astype(np.uint16)).save(path)
    else:
        Image.fromarray((image * 255).round().astype(np.uint8)).save(path)


def crop_image(image, crop):
    if crop is None:
        return image
    x, y, w, h = crop
    if x < 0 or y < 0 or x + w > image.shape[0] or y + h > image.shape[1]:
        raise InputError(f"Crop {crop} exceeds the image {image.shape}.")
    return image[x:x + w, y:y + h]


def crop_landmarks(landmarks: Sequence[Landmark], crop) -> List[Landmark]:
    """Leva os landmarks para as coordenadas do recorte, descartando os de fora."""
    if crop is None:
        return list(landmarks)
    x0, y0, w, h = crop
    kept = [Landmark(l.x - x0, l.y - y0, l.kind, l.confidence) for l in landmarks
            if 0 <= l.x - x0 <= w - 1 and 0 <= l.y - y0 <= h - 1]
    if len(kept) < len(landmarks):
        logging.warning(f"Crop dropped {len(landmarks) - len(kept)} landmarks outside {crop}.")
    return kept


# --- trajetórias ---------------------------------------------------------------------

def read_trajectories(path) -> List[Trajectory]:
    _require(path)
    try:
        df = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputError(f"Could not parse trajectories {path}: {e}") from e
    missing = [c for c in TRAJECTORY_COLUMNS if c not in df.columns]
    if missing:
        raise InputError(f"Trajectory file {path} is missing columns {missing}.")
    trajectories = []
    for track_id, group in df.sort_values(['track_id', 't'], kind='stable').groupby('track_id', sort=True):
        trajectories.append(Trajectory(int(track_id), group[['x', 'y', 'vx', 'vy', 't']].to_numpy(dtype=np.float64)))
    logging.info(f"Read {len(trajectories)} trajectories ({len(df)} points) from {path}.")
    return trajectories


def write_trajectories(path, trajectories: Sequence[Trajectory]):
    frames = []
    for trajectory in trajectories:
        df = pd.DataFrame(trajectory.points, columns=['x', 'y', 'vx', 'vy', 't'])
        df['track_id'] = trajectory.track_id
        frames.append(df)
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=TRAJECTORY_COLUMNS)
    df[TRAJECTORY_COLUMNS].to_csv(path, index=False)


# --- landmarks e heatmaps ------------------------------------------------------------

def read_landmarks(path) -> List[Landmark]:
    data = read_json(path)
    try:
        return [Landmark.from_dict(item) for item in data]
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise InputError(f"Malformed landmark file {path}: {e}") from e


def read_lifted_landmarks(path) -> List[LiftedLandmark]:
    data = read_json(path)
    try:
        return [LiftedLandmark.from_dict(item) for item in data]
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise InputError(f"Malformed lifted landmark file {path}: {e}") from e


def write_landmarks(path, landmarks):
    write_json(path, [l.to_dict() for l in landmarks])


def _heatmap_page_paths(path):
    stem, _ = os.path.splitext(path)
    return [f"{stem}_{name}.png" for name in HEATMAP_CHANNELS]


def write_heatmap(path, heatmap: Heatmap):
    """`.tif`/`.tiff`: TIFF float32 de 4 páginas. Outro sufixo: 4 PNGs `<stem>_<canal>.png`."""
    if path.lower().endswith(('.tif', '.tiff')):
        pages = [Image.fromarray(np.ascontiguousarray(channel.T, dtype=np.float32)) for channel in heatmap.channels]
        pages[0].save(path, save_all=True, append_images=pages[1:])
        return [path]
    paths = _heatmap_page_paths(path)
    for channel, page_path in zip(heatmap.channels, paths):
        write_image(page_path, channel, bits=16)
    return paths


def read_heatmap(path) -> Heatmap:
    if path.lower().endswith(('.tif', '.tiff')):
        _require(path)
        with Image.open(path) as img:
            pages = [np.asarray(page.convert('F'), dtype=np.float64).T for page in ImageSequence.Iterator(img)]
        if len(pages) != len(HEATMAP_CHANNELS):
            raise InputError(f"Heatmap {path} has {len(pages)} pages, expected {len(HEATMAP_CHANNELS)}.")
        return Heatmap(np.stack(pages))
    return Heatmap(np.stack([read_image(p) for p in _heatmap_page_paths(path)]))


# --- matriz e árvores ----------------------------------------------------------------

def write_matrix(path, matrix: DistanceMatrix):
    """CSV com cabeçalhos = índices dos nós, mais a lista de nós em `<stem>_nodes.json`."""
    index = list(range(len(matrix)))
    pd.DataFrame(matrix.d, index=index, columns=index).to_csv(path, index_label='node')
    stem, _ = os.path.splitext(path)
    write_json(f"{stem}_nodes.json", [node.to_dict() for node in matrix.nodes])


def read_matrix(path) -> DistanceMatrix:
    _require(path)
    df = pd.read_csv(path, index_col='node')
    stem, _ = os.path.splitext(path)
    nodes = [LiftedLandmark.from_dict(item) for item in read_json(f"{stem}_nodes.json")]
    if df.shape != (len(nodes), len(nodes)):
        raise InputError(f"Matrix {path} has shape {df.shape} but {len(nodes)} nodes.")
    return DistanceMatrix(nodes, df.to_numpy(dtype=np.float64))


def trees_to_dict(trees):
    return {'clusters': [tree.to_dict() for tree in trees]}


def write_trees(path, trees):
    write_json(path, trees_to_dict(trees))


def read_tree_polylines(path) -> List[dict]:
    """Lê o JSON de árvores como dicionários (id, nodes, edges com polyline)."""
    data = read_json(path)
    if 'clusters' not in data:
        raise InputError(f"Tree file {path} has no 'clusters' key.")
    return data['clusters']


def ensure_directory(directory: Optional[str]):
    if directory:
        os.makedirs(directory, exist_ok=True)
    return directory
