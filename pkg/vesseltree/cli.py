"""
Linha de comando: `python -m vesseltree <subcomando>`.

Subcomandos: synth, lift, cost, track, eval, oracle, render. Códigos de saída:
0 sucesso, 2 erro de entrada, 3 falha numérica, 4 erro de configuração.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from . import data_io
from .config import load_config, resolve_thread_count
from .core import GridSpec, LiftedLandmark, MetricParams
from .eikonal import dijkstra_oracle, solve_distance
from .errors import EXIT_NUMERICAL, EXIT_OK, ConfigError, VesselTreeError
from .landmarks import DetectionParams, extract_landmarks, match_and_score
from .lift import FrangiParams, LiftKernelParams, build_ulm_score, frangi_vesselness, lift_image
from .metric import DEFAULT_MIN_SEP, CostField, cost_from_score, inject_landmarks
from .overlay import render_overlay
from .pipeline import _crop_trajectories, run_pipeline
from .synthetic import SyntheticSpec, synth_generate


def parse_crop(text):
    if text is None:
        return None
    try:
        values = [int(v) for v in text.split(',')]
    except ValueError:
        raise ConfigError(f"--crop expects x,y,w,h integers, got '{text}'.")
    if len(values) != 4:
        raise ConfigError(f"--crop expects x,y,w,h, got '{text}'.")
    return values


def _emit(data):
    print(json.dumps(data, indent=2, sort_keys=True))


def cmd_synth(args):
    spec = SyntheticSpec(seed=args.seed, tree_count=args.trees, branch_depth=args.depth,
                         width_range=tuple(args.width_range), curvature_bound=args.curvature,
                         crossing_probability=args.crossing_probability, noise_std=args.noise,
                         width=args.size[0], height=args.size[1])
    result = synth_generate(spec)
    os.makedirs(args.out, exist_ok=True)
    paths = {
        'image': os.path.join(args.out, 'image.png'),
        'landmarks': os.path.join(args.out, 'landmarks.json'),
        'centerlines': os.path.join(args.out, 'centerlines.json'),
    }
    data_io.write_image(paths['image'], result.image, bits=16)
    data_io.write_landmarks(paths['landmarks'], result.landmarks)
    data_io.write_json(paths['centerlines'], result.centerline_dicts())
    _emit(paths)
    return EXIT_OK


def cmd_lift(args):
    crop = parse_crop(args.crop)
    if args.image:
        image = data_io.crop_image(data_io.read_image(args.image), crop)
        spec = GridSpec(image.shape[0], image.shape[1], args.n_theta, args.spacing)
        if args.frangi:
            image = frangi_vesselness(image, FrangiParams(invert=args.invert))
        kernel = LiftKernelParams(args.sigma_long, args.sigma_short, args.support_radius)
        score = lift_image(image, spec, kernel, workers=resolve_thread_count())
    else:
        trajectories = data_io.read_trajectories(args.trajectories)
        if crop is None:
            raise ConfigError("Lifting trajectories needs --crop x,y,w,h to fix the domain.")
        spec = GridSpec(crop[2], crop[3], args.n_theta, args.spacing)
        score = build_ulm_score(_crop_trajectories(trajectories, crop), spec, args.smoothing)
    data_io.write_lifted(args.out, score)
    _emit({'score': args.out, 'shape': list(spec.shape)})
    return EXIT_OK


def cmd_cost(args):
    score = data_io.read_lifted(args.score)
    params = MetricParams.for_grid(score.spec, args.epsilon, args.xi, args.lambda_)
    outputs = {'cost': args.out}
    if args.landmarks:
        score, lifted = inject_landmarks(score, data_io.read_landmarks(args.landmarks), args.min_sep)
        lifted_path = os.path.splitext(args.out)[0] + '_landmarks.json'
        data_io.write_landmarks(lifted_path, lifted)
        outputs['lifted_landmarks'] = lifted_path
    data_io.write_lifted(args.out, cost_from_score(score, params))
    _emit(outputs)
    return EXIT_OK


def cmd_track(args):
    overrides = list(args.set or [])
    if args.crop:
        overrides.append(f"inputs.crop={json.dumps(parse_crop(args.crop))}")
    if args.out:
        overrides.append(f"outputs.directory={json.dumps(args.out)}")
    config = load_config(args.config, overrides)
    report = run_pipeline(config)
    _emit({'artifacts': report['artifacts'], 'n_clusters': report['n_clusters'], 'n_edges': report['n_edges']})
    return EXIT_OK


def cmd_eval(args):
    params = DetectionParams(match_radius=args.match_radius, r=args.r, nms_radius=args.nms_radius)
    if args.heatmap:
        predicted = extract_landmarks(data_io.read_heatmap(args.heatmap), params)
    else:
        predicted = data_io.read_landmarks(args.predicted)
    truth = data_io.read_landmarks(args.truth)
    report = match_and_score(predicted, truth, params)
    if args.out:
        data_io.write_json(args.out, report)
    _emit({key: report[key] for key in ('per_class', 'aggregate', 'class_agnostic')})
    return EXIT_OK


def oracle_gaps(cost, params, n_pairs, seed=0, radius=3):
    """Diferença relativa entre fast marching e o oráculo de Dijkstra em pares aleatórios de nós."""
    spec = cost.spec
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_pairs):
        a, b = (LiftedLandmark.from_dict({'x': float(rng.integers(spec.width)) * spec.spacing,
                                          'y': float(rng.integers(spec.height)) * spec.spacing,
                                          'class': 'endpoint',
                                          'theta': float(rng.integers(spec.n_theta)) * spec.dtheta})
                for _ in range(2))
        fast = solve_distance(cost, params, a, targets=[b]).value_at(b)
        exact = dijkstra_oracle(cost, params, a, radius).value_at(b)
        gap = abs(fast - exact) / exact if exact > 0 else 0.0
        rows.append({'seed': list(a.position), 'target': list(b.position), 'fast_marching': fast,
                     'oracle': exact, 'relative_gap': gap})
    return rows


def cmd_oracle(args):
    lifted = data_io.read_lifted(args.cost)
    cost = CostField(lifted.spec, lifted.values)
    params = MetricParams.for_grid(cost.spec, args.epsilon, args.xi)
    rows = oracle_gaps(cost, params, args.pairs, args.seed, args.radius)
    summary = {'pairs': rows, 'max_relative_gap': max((r['relative_gap'] for r in rows), default=0.0)}
    if args.out:
        data_io.write_json(args.out, summary)
    _emit(summary)
    return EXIT_OK


def cmd_render(args):
    image = data_io.crop_image(data_io.read_image(args.image), parse_crop(args.crop))
    trees = data_io.read_tree_polylines(args.trees) if args.trees else []
    landmarks = data_io.read_landmarks(args.landmarks) if args.landmarks else []
    render_overlay(image, trees, landmarks, args.out)
    _emit({'overlay': args.out})
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog='vesseltree', description="Geodesic vessel tracking on lifted images.")
    parser.add_argument('--verbose', action='store_true', help="Log at DEBUG level.")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help="Generate a synthetic vessel image with ground truth.")
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--trees', type=int, default=1)
    p.add_argument('--depth', type=int, default=2)
    p.add_argument('--width-range', type=float, nargs=2, default=[2.0, 3.0])
    p.add_argument('--curvature', type=float, default=0.02)
    p.add_argument('--crossing-probability', type=float, default=0.0)
    p.add_argument('--noise', type=float, default=0.0)
    p.add_argument('--size', type=int, nargs=2, default=[128, 128], metavar=('W', 'H'))
    p.add_argument('--out', required=True, help="Output directory.")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('lift', help="Build the orientation score of an image or of ULM trajectories.")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--image')
    source.add_argument('--trajectories')
    p.add_argument('--n-theta', type=int, default=64)
    p.add_argument('--spacing', type=float, default=1.0)
    p.add_argument('--sigma-long', type=float, default=6.0)
    p.add_argument('--sigma-short', type=float, default=1.5)
    p.add_argument('--support-radius', type=float, default=18.0)
    p.add_argument('--frangi', action='store_true', help="Apply the Frangi filter before lifting.")
    p.add_argument('--invert', action='store_true', help="Dark vessels on bright background.")
    p.add_argument('--smoothing', type=float, default=1.0)
    p.add_argument('--crop')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser('cost', help="Turn a score into a cost field, optionally injecting landmarks.")
    p.add_argument('--score', required=True)
    p.add_argument('--landmarks')
    p.add_argument('--epsilon', type=float, default=0.1)
    p.add_argument('--xi', type=float, default=None)
    p.add_argument('--lambda', dest='lambda_', type=float, default=1e3)
    p.add_argument('--min-sep', type=float, default=DEFAULT_MIN_SEP)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser('track', help="Run the full pipeline from a config file.")
    p.add_argument('--config')
    p.add_argument('--set', action='append', metavar='SECTION.KEY=VALUE')
    p.add_argument('--crop')
    p.add_argument('--out')
    p.set_defaults(func=cmd_track)

    p = sub.add_parser('eval', help="Score predicted landmarks against ground truth.")
    predicted = p.add_mutually_exclusive_group(required=True)
    predicted.add_argument('--predicted')
    predicted.add_argument('--heatmap')
    p.add_argument('--truth', required=True)
    p.add_argument('--match-radius', type=float, default=5.0)
    p.add_argument('--r', type=float, default=0.5)
    p.add_argument('--nms-radius', type=int, default=3)
    p.add_argument('--out')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('oracle', help="Compare fast marching with the Dijkstra oracle.")
    p.add_argument('--cost', required=True)
    p.add_argument('--epsilon', type=float, default=1.0)
    p.add_argument('--xi', type=float, default=None)
    p.add_argument('--pairs', type=int, default=10)
    p.add_argument('--radius', type=int, default=3)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out')
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser('render', help="Draw trees and landmarks over an image.")
    p.add_argument('--image', required=True)
    p.add_argument('--trees')
    p.add_argument('--landmarks')
    p.add_argument('--crop')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s')
    try:
        return args.func(args)
    except VesselTreeError as e:
        logging.error(f"{args.command} failed: {e}", exc_info=args.verbose)
        return e.exit_code
    except Exception as e:
        logging.error(f"{args.command} failed with an unexpected error: {e}", exc_info=True)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
