import logging
import os

import numpy as np
import plotly.graph_objects as go
import plotly.io as pio
from matplotlib import colormaps, rcParams
from matplotlib.figure import Figure
from PIL import Image, ImageDraw

from .errors import ConfigError

CLASS_COLORS = {
    'endpoint': (230, 25, 75),
    'bifurcation': (60, 180, 75),
    'crossing': (0, 130, 200),
}
MARKER_RADIUS = 2
CLUSTER_PALETTE = [tuple(int(round(255 * c)) for c in rgb) for rgb in colormaps['tab10'].colors]


def cluster_color(cluster_id):
    return CLUSTER_PALETTE[int(cluster_id) % len(CLUSTER_PALETTE)]


def _hex(rgb):
    return '#%02x%02x%02x' % rgb


def _as_tree_dicts(trees):
    """Aceita VesselTree ou os dicionários do JSON de árvores."""
    return [tree if isinstance(tree, dict) else tree.to_dict() for tree in trees or []]


def _as_markers(landmarks):
    markers = []
    for landmark in landmarks or []:
        data = landmark if isinstance(landmark, dict) else landmark.to_dict()
        markers.append((float(data['x']), float(data['y']), data['class']))
    return markers


def _polylines(tree_dicts):
    for tree in tree_dicts:
        for edge in tree['edges']:
            points = np.asarray(edge['polyline'], dtype=np.float64).reshape(-1, 3)
            yield tree['id'], points[:, 0], points[:, 1]


def _render_png(image, tree_dicts, markers, output_path):
    gray = (np.clip(image, 0.0, 1.0).T * 255).round().astype(np.uint8)
    canvas = Image.fromarray(gray).convert('RGB')
    draw = ImageDraw.Draw(canvas)
    for cluster_id, xs, ys in _polylines(tree_dicts):
        if len(xs) > 1:
            draw.line(list(zip(xs.tolist(), ys.tolist())), fill=cluster_color(cluster_id), width=1)
    for x, y, kind in markers:
        r = MARKER_RADIUS
        draw.ellipse([x - r, y - r, x + r, y + r], fill=CLASS_COLORS[kind])
    canvas.save(output_path, format='PNG')


def _render_svg(image, tree_dicts, markers, output_path):
    width, height = image.shape
    rcParams['svg.hashsalt'] = 'vesseltree'
    fig = Figure(figsize=(width / 100.0, height / 100.0), dpi=100)
    ax = fig.add_axes([0, 0, 1, 1])
    ax.imshow(image.T, cmap='gray', vmin=0.0, vmax=1.0, interpolation='nearest',
              extent=(-0.5, width - 0.5, height - 0.5, -0.5))
    for cluster_id, xs, ys in _polylines(tree_dicts):
        ax.plot(xs, ys, color=_hex(cluster_color(cluster_id)), linewidth=1.0)
    for x, y, kind in markers:
        ax.plot([x], [y], marker='o', markersize=2 * MARKER_RADIUS, color=_hex(CLASS_COLORS[kind]), linestyle='none')
    ax.set_xlim(-0.5, width - 0.5)
    ax.set_ylim(height - 0.5, -0.5)
    ax.set_axis_off()
    fig.savefig(output_path, format='svg', metadata={'Date': None})


def _create_figure(image, tree_dicts, markers):
    """Figura plotly interativa: imagem em tons de cinza, árvores por cluster e landmarks por classe."""
    fig = go.Figure(go.Heatmap(z=image.T, colorscale='gray', zmin=0.0, zmax=1.0, showscale=False))
    for cluster_id, xs, ys in _polylines(tree_dicts):
        fig.add_trace(go.Scatter(x=xs, y=ys, mode='lines', line=dict(color=_hex(cluster_color(cluster_id)), width=2),
                                 name=f"cluster {cluster_id}", showlegend=False))
    for kind, color in CLASS_COLORS.items():
        points = [(x, y) for x, y, k in markers if k == kind]
        if points:
            xs, ys = zip(*points)
            fig.add_trace(go.Scatter(x=xs, y=ys, mode='markers', marker=dict(color=_hex(color), size=8), name=kind))
    width, height = image.shape
    fig.update_xaxes(range=[-0.5, width - 0.5], showgrid=False)
    fig.update_yaxes(range=[height - 0.5, -0.5], showgrid=False, scaleanchor='x')
    fig.update_layout(title_text="Vessel trees", template='plotly_dark')
    return fig


def render_overlay(image, trees, landmarks, output_path, fmt=None):
    """
    Sobrepõe árvores (cor por cluster) e landmarks (cor por classe) à imagem base.
    Formato pela extensão: .png, .svg ou .html. Geometria fora da imagem é cortada.
    """
    fmt = (fmt or os.path.splitext(output_path)[1].lstrip('.')).lower()
    image = np.asarray(image, dtype=np.float64)
    tree_dicts = _as_tree_dicts(trees)
    markers = _as_markers(landmarks)
    if fmt == 'png':
        _render_png(image, tree_dicts, markers, output_path)
    elif fmt == 'svg':
        _render_svg(image, tree_dicts, markers, output_path)
    elif fmt == 'html':
        pio.write_html(_create_figure(image, tree_dicts, markers), file=output_path, auto_open=False,
                       include_plotlyjs='cdn')
    else:
        raise ConfigError(f"Unknown overlay format '{fmt}'.")
    logging.info(f"Overlay saved to: {output_path}")
    return output_path
