import logging
import math
import os
import time

import numpy as np

from . import data_io
from .cache_manager import DistanceMapCache, config_digest
from .config import PipelineConfig, resolve_thread_count
from .errors import EXIT_OK, StageError
from .graph import build_vessel_trees, cluster_landmarks, pairwise_distances
from .landmarks import Heatmap, extract_landmarks
from .lift import Trajectory, build_ulm_score, frangi_vesselness, is_degenerate_score, lift_image
from .metric import cost_from_score, inject_landmarks
from .overlay import render_overlay

STAGES = ("ingest", "lift", "inject", "cost", "distances", "cluster", "trees", "render")


def _crop_trajectories(trajectories, crop):
    if crop is None:
        return trajectories
    x0, y0, w, h = crop
    cropped = []
    for trajectory in trajectories:
        points = trajectory.points.copy()
        points[:, 0] -= x0
        points[:, 1] -= y0
        inside = (points[:, 0] >= 0) & (points[:, 0] <= w - 1) & (points[:, 1] >= 0) & (points[:, 1] <= h - 1)
        if inside.any():
            cropped.append(Trajectory(trajectory.track_id, points[inside]))
    return cropped


class VesselTracker:
    """
    Executa o pipeline completo a partir de uma PipelineConfig:
    ingest -> lift -> inject -> cost -> distances -> cluster -> trees -> render.
    Cada estágio é cronometrado; falhas saem como StageError com a etiqueta do estágio.
    """

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.output_dir = config.outputs.directory
        self.timings = {}
        self.artifacts = {}
        self.diagnostics = {}
        self.image = None
        self.trajectories = None
        self.landmarks = []
        self.spec = None
        self.params = None
        self.score = None
        self.cost = None
        self.nodes = []
        self.matrix = None
        self.clustering = None
        self.trees = []
        self.workers = 1
        self.cache = DistanceMapCache(config.solver.cache_size)
        logging.info(f"VesselTracker initialized, outputs in {self.output_dir}")

    def _ingest(self):
        inputs = self.config.inputs
        if inputs.image is not None:
            self.image = data_io.crop_image(data_io.read_image(inputs.image), inputs.crop)
            width, height = self.image.shape
        else:
            self.trajectories = _crop_trajectories(data_io.read_trajectories(inputs.trajectories), inputs.crop)
            if inputs.crop is not None:
                width, height = inputs.crop[2], inputs.crop[3]
            else:
                points = np.concatenate([t.points for t in self.trajectories]) if self.trajectories else np.zeros((1, 5))
                width = max(2, int(math.ceil(points[:, 0].max())) + 1)
                height = max(2, int(math.ceil(points[:, 1].max())) + 1)
        self.spec = self.config.grid_spec(width, height)
        self.params = self.config.metric_params(self.spec)
        self.workers = resolve_thread_count(self.config.solver.threads)

        if inputs.landmarks is not None:
            self.landmarks = data_io.crop_landmarks(data_io.read_landmarks(inputs.landmarks), inputs.crop)
        elif inputs.heatmap is not None:
            heatmap = data_io.read_heatmap(inputs.heatmap)
            if inputs.crop is not None:
                x, y, w, h = inputs.crop
                heatmap = Heatmap(heatmap.channels[:, x:x + w, y:y + h])
            self.landmarks = extract_landmarks(heatmap, self.config.detection_params())
        logging.info(f"Ingested {width}x{height} input with {len(self.landmarks)} landmarks.")

    def _lift(self):
        if self.image is not None:
            source = self.image
            if self.config.lift.use_frangi:
                source = frangi_vesselness(source, self.config.frangi_params())
            self.score = lift_image(source, self.spec, self.config.kernel_params(), workers=self.workers)
        else:
            self.score = build_ulm_score(self.trajectories, self.spec, self.config.lift.ulm_smoothing)
        self.diagnostics['degenerate_score'] = is_degenerate_score(self.score)
        if self.diagnostics['degenerate_score']:
            logging.warning("Orientation score is constant; geodesics will follow the uniform metric.")

    def _inject(self):
        self.score, self.nodes = inject_landmarks(self.score, self.landmarks, self.config.metric.min_sep)

    def _cost(self):
        self.cost = cost_from_score(self.score, self.params)

    def _distances(self):
        self.matrix = pairwise_distances(self.cost, self.params, self.nodes, cache=self.cache, workers=self.workers,
                                         upper_rows_only=self.config.solver.upper_rows_only,
                                         init_radius=self.config.solver.init_radius)

    def _cluster(self):
        self.clustering = cluster_landmarks(self.matrix, self.config.s_cluster)

    def _trees(self):
        solver = self.config.solver
        self.trees = build_vessel_trees(self.cost, self.params, self.matrix, self.clustering, cache=self.cache,
                                        step=solver.step, stop_radius=solver.stop_radius,
                                        init_radius=solver.init_radius)

    def _render(self):
        directory = data_io.ensure_directory(self.output_dir)
        matrix_path = os.path.join(directory, "distances.csv")
        data_io.write_matrix(matrix_path, self.matrix)
        trees_path = os.path.join(directory, "trees.json")
        data_io.write_trees(trees_path, self.trees)
        nodes_path = os.path.join(directory, "landmarks.json")
        data_io.write_landmarks(nodes_path, self.nodes)
        self.artifacts.update({'matrix': matrix_path, 'trees': trees_path, 'landmarks': nodes_path})

        base = self.image if self.image is not None else self.score.values.max(axis=2)
        for fmt in self.config.outputs.overlay_formats:
            path = os.path.join(directory, f"overlay.{fmt}")
            render_overlay(base, self.trees, self.landmarks, path, fmt)
            self.artifacts[f"overlay_{fmt}"] = path

    def _run_stage(self, stage):
        start = time.perf_counter()
        try:
            getattr(self, f"_{stage}")()
        except Exception as e:
            self.timings[stage] = time.perf_counter() - start
            logging.error(f"Stage '{stage}' failed: {e}", exc_info=True)
            raise StageError(stage, e) from e
        self.timings[stage] = time.perf_counter() - start
        logging.info(f"Stage '{stage}' finished in {self.timings[stage]:.3f}s")

    def report(self, wall_time, failure: StageError = None):
        effective = self.config.effective()
        degraded = [{'cluster': tree.cluster_id, 'i': e.i, 'j': e.j, 'error': e.error}
                    for tree in self.trees for e in tree.edges if e.degraded]
        report = {
            'status': 'failed' if failure else 'ok',
            'exit_code': failure.exit_code if failure else EXIT_OK,
            'stages': self.timings,
            'wall_time': wall_time,
            'config': effective,
            'config_digest': config_digest(effective),
            'n_landmarks': len(self.landmarks),
            'n_nodes': len(self.nodes),
            'n_clusters': self.clustering.n_clusters if self.clustering is not None else 0,
            'n_edges': sum(len(t.edges) for t in self.trees),
            'degraded_edges': degraded,
            'diagnostics': self.diagnostics,
            'artifacts': self.artifacts,
        }
        if failure:
            report.update({'failed_stage': failure.stage, 'error': str(failure.cause)})
        return report

    def _write_report(self, report):
        try:
            directory = data_io.ensure_directory(self.output_dir)
            path = os.path.join(directory, "report.json")
            data_io.write_json(path, report)
            self.artifacts['report'] = path
        except OSError as e:
            logging.error(f"Could not write run report: {e}")

    def run(self):
        """Executa todos os estágios e devolve o relatório da execução."""
        logging.info("Running vessel tracking pipeline...")
        start = time.perf_counter()
        try:
            for stage in STAGES:
                self._run_stage(stage)
        except StageError as failure:
            self._write_report(self.report(time.perf_counter() - start, failure))
            raise
        report = self.report(time.perf_counter() - start)
        self._write_report(report)
        logging.info(f"Pipeline finished: {report['n_clusters']} clusters, {report['n_edges']} edges.")
        return report


def run_pipeline(config: PipelineConfig):
    return VesselTracker(config).run()
