import json
import logging
import os
import tempfile
from typing import Any, Dict, List, Optional, Tuple

from fastapi import BackgroundTasks, FastAPI, File, Form, HTTPException, Query, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from . import cache_manager, data_io
from .cache_manager import config_digest, load_from_cache, save_to_cache
from .cli import parse_crop
from .config import build_config, resolve_thread_count
from .core import GridSpec, Landmark
from .errors import EXIT_NUMERICAL, ConfigError, VesselTreeError
from .landmarks import DetectionParams, match_and_score
from .lift import LiftKernelParams, lift_image
from .overlay import render_overlay
from .pipeline import run_pipeline
from .synthetic import SyntheticSpec, synth_generate

# --- Basic Configuration ---
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')

# --- FastAPI Application Initialization ---
app = FastAPI(
    title="VesselTree API",
    description="Geodesic vessel tracking: lifting, landmark evaluation, synthetic data and full pipeline runs.",
    version="1.0.0"
)

origins = ["*"]

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

MEDIA_TYPES = {'png': 'image/png', 'svg': 'image/svg+xml', 'html': 'text/html'}


def _run_directory(run_id):
    return os.path.join(cache_manager.CACHE_DIR, 'runs', run_id)


def _http_error(e: VesselTreeError) -> HTTPException:
    """Erros de entrada/configuração viram 400; falhas numéricas viram 500."""
    status = 500 if e.exit_code == EXIT_NUMERICAL else 400
    return HTTPException(status_code=status, detail=str(e))


# --- Pipeline ---

@app.get("/health")
def health_endpoint():
    return {"status": "ok"}


@app.post("/api/track")
def track_endpoint(payload: Dict[str, Any]):
    """
    Runs the full pipeline for a PipelineConfig body and returns the run report.
    The report is cached under its run id (the digest of the submitted config).
    Plain def: FastAPI runs it in its threadpool, off the event loop.
    """
    try:
        logging.info("Received track request.")
        try:
            config = build_config(payload)
        except ConfigError as e:
            raise HTTPException(status_code=422, detail=str(e))
        run_id = config_digest(config.effective())
        config = build_config(payload, [f"outputs.directory={json.dumps(_run_directory(run_id))}"])
        report = run_pipeline(config)
        save_to_cache(run_id, report)
        return {'run_id': run_id, **report}
    except HTTPException:
        raise
    except VesselTreeError as e:
        logging.error(f"Track request failed: {e}", exc_info=True)
        raise _http_error(e)
    except Exception as e:
        logging.error(f"Error during pipeline execution: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"An internal server error occurred: {str(e)}")


@app.get("/api/runs/{run_id}/overlay")
def run_overlay_endpoint(run_id: str, background_tasks: BackgroundTasks,
                         fmt: str = Query('png', pattern='^(png|svg|html)$')):
    """Overlay de uma execução concluída; renderizado sob demanda se o formato não foi gerado."""
    try:
        report = load_from_cache(run_id)
        if report is None:
            raise HTTPException(status_code=404, detail=f"Run {run_id} not found.")
        artifacts = report.get('artifacts', {})
        path = artifacts.get(f"overlay_{fmt}")
        if path and os.path.exists(path):
            return FileResponse(path, media_type=MEDIA_TYPES[fmt], filename=f"{run_id}_overlay.{fmt}")

        inputs = report['config']['inputs']
        if inputs.get('image') is None or 'trees' not in artifacts:
            raise HTTPException(status_code=404, detail=f"Run {run_id} has no {fmt} overlay.")
        image = data_io.crop_image(data_io.read_image(inputs['image']), inputs.get('crop'))
        trees = data_io.read_tree_polylines(artifacts['trees'])
        landmarks = data_io.read_json(artifacts['landmarks']) if 'landmarks' in artifacts else []
        with tempfile.NamedTemporaryFile(suffix=f".{fmt}", delete=False) as tmpfile:
            overlay_path = tmpfile.name
        render_overlay(image, trees, landmarks, overlay_path, fmt)
        background_tasks.add_task(os.remove, overlay_path)
        return FileResponse(overlay_path, media_type=MEDIA_TYPES[fmt], filename=f"{run_id}_overlay.{fmt}")
    except HTTPException:
        raise
    except VesselTreeError as e:
        raise _http_error(e)
    except Exception as e:
        logging.error(f"Error rendering overlay of run {run_id}: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"An internal server error occurred: {str(e)}")


# --- Landmarks ---

class EvalRequest(BaseModel):
    predicted: List[Dict[str, Any]]
    truth: List[Dict[str, Any]]
    detection: Dict[str, Any] = {}


@app.post("/api/eval")
def eval_endpoint(request: EvalRequest):
    try:
        try:
            params = DetectionParams(**request.detection)
            predicted = [Landmark.from_dict(item) for item in request.predicted]
            truth = [Landmark.from_dict(item) for item in request.truth]
        except (KeyError, TypeError, ValueError) as e:
            raise HTTPException(status_code=400, detail=f"Malformed landmarks or detection params: {e}")
        return match_and_score(predicted, truth, params)
    except HTTPException:
        raise
    except VesselTreeError as e:
        raise _http_error(e)
    except Exception as e:
        logging.error(f"Error during landmark evaluation: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"An internal server error occurred: {str(e)}")


class SynthRequest(BaseModel):
    seed: int = 0
    tree_count: int = 1
    branch_depth: int = 2
    width_range: Tuple[float, float] = (2.0, 3.0)
    curvature_bound: float = 0.02
    crossing_probability: float = 0.0
    noise_std: float = 0.0
    width: int = 128
    height: int = 128


@app.post("/api/synth")
def synth_endpoint(request: SynthRequest):
    """Gera uma imagem sintética e devolve o ground truth (a imagem fica de fora)."""
    try:
        result = synth_generate(SyntheticSpec(**request.model_dump()))
        return {
            'landmarks': [l.to_dict() for l in result.landmarks],
            'centerlines': result.centerline_dicts(),
        }
    except HTTPException:
        raise
    except VesselTreeError as e:
        raise _http_error(e)
    except Exception as e:
        logging.error(f"Error generating synthetic data: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"An internal server error occurred: {str(e)}")


# --- Lifting ---

@app.post("/api/lift")
async def lift_endpoint(background_tasks: BackgroundTasks,
                        file: UploadFile = File(...),
                        n_theta: int = Form(64),
                        sigma_long: float = Form(6.0),
                        sigma_short: float = Form(1.5),
                        support_radius: float = Form(18.0),
                        crop: Optional[str] = Form(None)):
    """Levanta a imagem enviada para R^2 x P^1 e devolve o container LFT1."""
    try:
        suffix = os.path.splitext(file.filename or '')[1] or '.png'
        with tempfile.NamedTemporaryFile(suffix=suffix, delete=False) as tmpfile:
            tmpfile.write(await file.read())
            image_path = tmpfile.name
        background_tasks.add_task(os.remove, image_path)

        crop_box = parse_crop(crop)
        image = data_io.crop_image(data_io.read_image(image_path), crop_box)
        spec = GridSpec(image.shape[0], image.shape[1], n_theta)
        kernel = LiftKernelParams(sigma_long, sigma_short, support_radius)
        score = await run_in_threadpool(lift_image, image, spec, kernel, workers=resolve_thread_count())

        with tempfile.NamedTemporaryFile(suffix=".lft", delete=False) as tmpfile:
            lifted_path = tmpfile.name
        data_io.write_lifted(lifted_path, score)
        background_tasks.add_task(os.remove, lifted_path)
        logging.info(f"Lifted uploaded image {file.filename} to {spec.shape}.")
        return FileResponse(lifted_path, media_type='application/octet-stream', filename="score.lft")
    except HTTPException:
        raise
    except VesselTreeError as e:
        raise _http_error(e)
    except Exception as e:
        logging.error(f"Error lifting uploaded image: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail=f"An internal server error occurred: {str(e)}")


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
