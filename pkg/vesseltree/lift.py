import math
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .core import GridSpec, LiftedField
from .errors import ConfigError, EmptyInputError

ULM_ANGULAR_FILTER = np.array([1.0, 2.0, 1.0]) / 4.0


class DegenerateScoreWarning(UserWarning):
    """Emitida quando normalize_score recebe um campo constante."""


@dataclass(frozen=True)
class LiftKernelParams:
    sigma_long: float = 6.0
    sigma_short: float = 1.5
    support_radius: float = 18.0

    def __post_init__(self):
        if not self.sigma_long > self.sigma_short > 0:
            raise ConfigError(f"Lift kernel needs sigma_long > sigma_short > 0, got {self.sigma_long}, {self.sigma_short}.")
        if self.support_radius < 3 * self.sigma_long:
            raise ConfigError(f"support_radius must be >= 3 * sigma_long ({3 * self.sigma_long}), got {self.support_radius}.")


@dataclass(frozen=True)
class FrangiParams:
    scales: Tuple[float, ...] = (1.0, 2.0, 3.0)
    beta: float = 0.5
    c: Optional[float] = None
    invert: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'scales', tuple(float(s) for s in self.scales))
        if not self.scales:
            raise ConfigError("Frangi filter needs at least one scale.")
        if any(s <= 0 for s in self.scales):
            raise ConfigError(f"Frangi scales must be positive, got {self.scales}.")
        if self.beta <= 0 or (self.c is not None and self.c <= 0):
            raise ConfigError("Frangi beta and c must be positive.")


@dataclass(frozen=True)
class Trajectory:
    """Trajetória de uma microbolha. Colunas de `points`: x, y, vx, vy, t."""
    track_id: int
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if points.shape[0] < 1 or points.shape[1] != 5:
            raise ConfigError(f"Trajectory {self.track_id} needs at least one (x, y, vx, vy, t) point.")
        object.__setattr__(self, 'points', points)


def rotated_gaussian_kernel(theta, params: LiftKernelParams, spacing=1.0):
    """Kernel gaussiano anisotrópico de massa unitária, alinhado com e_theta, indexado [dx, dy]."""
    radius = int(math.ceil(params.support_radius / spacing))
    offsets = np.arange(-radius, radius + 1) * spacing
    dx, dy = np.meshgrid(offsets, offsets, indexing='ij')
    along = dx * math.cos(theta) + dy * math.sin(theta)
    across = -dx * math.sin(theta) + dy * math.cos(theta)
    kernel = np.exp(-along ** 2 / (2 * params.sigma_long ** 2) - across ** 2 / (2 * params.sigma_short ** 2))
    kernel[dx ** 2 + dy ** 2 > params.support_radius ** 2] = 0.0
    return kernel / kernel.sum()


def normalize_score(lifted: LiftedField) -> LiftedField:
    """Reescala min-max do campo inteiro para [0, 1]. Campo constante vira zeros (com aviso)."""
    values = lifted.values
    low, high = float(values.min()), float(values.max())
    if high <= low:
        logging.warning("normalize_score received a constant field; returning zeros.")
        warnings.warn("constant field, score is degenerate", DegenerateScoreWarning, stacklevel=2)
        return lifted.with_values(np.zeros_like(values))
    return lifted.with_values((values - low) / (high - low))


def is_degenerate_score(score: LiftedField) -> bool:
    """Campo constante: sem contraste de orientação, o custo vira uniforme."""
    return not float(score.values.max()) > float(score.values.min())


def lift_image(image, spec: GridSpec, params: LiftKernelParams = LiftKernelParams(), normalize=True, workers=1) -> LiftedField:
    """
    Levanta a imagem 2D para o espaço de posições e orientações: para cada theta_k,
    convolução com o kernel gaussiano rotacionado (zero-padding na borda).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (spec.width, spec.height):
        raise ConfigError(f"Image shape {image.shape} does not match grid ({spec.width}, {spec.height}).")
    if (image < 0).any():
        raise ConfigError("lift_image expects a nonnegative image.")

    def lift_slice(theta):
        kernel = rotated_gaussian_kernel(theta, params, spec.spacing)
        return ndimage.convolve(image, kernel, mode='constant', cval=0.0)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        slices = list(executor.map(lift_slice, spec.thetas))

    lifted = LiftedField(spec, np.stack(slices, axis=-1))
    logging.info(f"Lifted image {image.shape} into {spec.n_theta} orientations.")
    return normalize_score(lifted) if normalize else lifted


def _hessian_eigenvalues(image, sigma):
    """Autovalores da hessiana normalizada na escala, ordenados por |lambda1| <= |lambda2|."""
    hxx = ndimage.gaussian_filter(image, sigma, order=(2, 0)) * sigma ** 2
    hyy = ndimage.gaussian_filter(image, sigma, order=(0, 2)) * sigma ** 2
    hxy = ndimage.gaussian_filter(image, sigma, order=(1, 1)) * sigma ** 2
    root = np.sqrt((hxx - hyy) ** 2 + 4 * hxy ** 2)
    mu1 = 0.5 * (hxx + hyy + root)
    mu2 = 0.5 * (hxx + hyy - root)
    swap = np.abs(mu1) > np.abs(mu2)
    return np.where(swap, mu2, mu1), np.where(swap, mu1, mu2)


def frangi_vesselness(image, params: FrangiParams = FrangiParams()):
    """
    Filtro de Frangi multi-escala para vasos claros em fundo escuro.
    Saída em [0, 1]: máximo sobre as escalas de exp(-Rb^2/2beta^2) * (1 - exp(-S^2/2c^2)).
    """
    image = np.asarray(image, dtype=np.float64)
    if not np.isfinite(image).all():
        raise ConfigError("frangi_vesselness expects a finite image.")
    if params.invert:
        image = image.max() - image

    tolerance = 1e-10 * max(1.0, float(np.abs(image).max()))
    eigenvalues = [_hessian_eigenvalues(image, sigma) for sigma in params.scales]
    structures = [np.sqrt(lambda1 ** 2 + lambda2 ** 2) for lambda1, lambda2 in eigenvalues]
    peak = max(float(s.max()) for s in structures)
    response = np.zeros_like(image)
    if peak <= tolerance:
        return response
    # c único para todas as escalas: metade da maior norma da hessiana
    c = params.c if params.c is not None else 0.5 * peak
    for (lambda1, lambda2), structure in zip(eigenvalues, structures):
        blobness = np.divide(lambda1, lambda2, out=np.zeros_like(lambda1), where=lambda2 != 0)
        vesselness = np.exp(-blobness ** 2 / (2 * params.beta ** 2)) * (1.0 - np.exp(-structure ** 2 / (2 * c ** 2)))
        vesselness[lambda2 > 0] = 0.0
        response = np.maximum(response, vesselness)
    return np.clip(response, 0.0, 1.0)


def build_ulm_score(trajectories: Sequence[Trajectory], spec: GridSpec, smoothing=1.0) -> LiftedField:
    """
    Orientation score a partir do histograma das microbolhas: cada ponto cai no bin
    (x, y, atan2(vy, vx) mod pi). Suavização gaussiana espacial + filtro [1,2,1]/4 em theta.
    """
    if not trajectories:
        raise EmptyInputError("No trajectories given.")
    points = np.concatenate([t.points for t in trajectories], axis=0)
    x, y, vx, vy = points[:, 0], points[:, 1], points[:, 2], points[:, 3]
    max_x, max_y = spec.extent
    valid = (np.hypot(vx, vy) > 0) & (x >= 0) & (x <= max_x) & (y >= 0) & (y <= max_y)
    if not valid.any():
        raise EmptyInputError("No trajectory point with nonzero velocity inside the domain.")
    skipped = int((~valid).sum())
    if skipped:
        logging.warning(f"Skipped {skipped} trajectory points (zero velocity or outside the domain).")

    i = np.minimum(np.rint(x[valid] / spec.spacing).astype(int), spec.width - 1)
    j = np.minimum(np.rint(y[valid] / spec.spacing).astype(int), spec.height - 1)
    theta = np.mod(np.arctan2(vy[valid], vx[valid]), math.pi)
    k = np.rint(theta / spec.dtheta).astype(int) % spec.n_theta

    histogram = np.zeros(spec.shape)
    np.add.at(histogram, (i, j, k), 1.0)
    if smoothing > 0:
        sigma = smoothing / spec.spacing
        histogram = ndimage.gaussian_filter(histogram, sigma=(sigma, sigma, 0), mode='constant')
    histogram = ndimage.convolve1d(histogram, ULM_ANGULAR_FILTER, axis=2, mode='wrap')

    logging.info(f"ULM score built from {int(valid.sum())} points of {len(trajectories)} trajectories.")
    return normalize_score(LiftedField(spec, histogram))
