"""White-box attacks: l2 / linf PGD and an l2 Carlini-Wagner style objective."""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..domain.attack_types import EPSILON_GRIDS, AdversarialResult, AttackTag, CwConfig, Norm, PgdConfig, PixelBounds
from ..domain.errors import NonFiniteError, ValidationError
from ..infrastructure.logger import get_logger
from ..infrastructure.storage.tensor_container import write_tensor
from .model_zoo.dual_task_model import eval_mode, logits_of


logger = get_logger("Attacks")

AttackConfig = Union[PgdConfig, CwConfig]


def epsilon_grid(attack_tag: Union[str, AttackTag]) -> List[float]:
    """Built-in attack strengths of an attack."""
    try:
        tag = AttackTag(attack_tag)
    except ValueError:
        known = ", ".join(t.value for t in AttackTag)
        raise ValidationError(f"Unknown attack '{attack_tag}' (expected one of: {known})", target="attack_tag")
    return list(EPSILON_GRIDS[tag])


def _flat_norms(delta: torch.Tensor) -> torch.Tensor:
    return delta.flatten(1).norm(p=2, dim=1)


def _expand(values: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    return values.view(-1, *([1] * (like.dim() - 1)))


def project(delta: torch.Tensor, norm: Union[str, Norm], eps: float) -> torch.Tensor:
    """Nearest point of the eps-ball, per item of a [batch x ...] tensor."""
    if eps < 0:
        raise ValidationError(f"eps must be >= 0, got {eps}", target="eps")
    if Norm(norm) == Norm.LINF:
        return delta.clamp(-eps, eps)
    norms = _flat_norms(delta)
    scale = torch.where(norms > eps, eps / norms.clamp_min(torch.finfo(delta.dtype).tiny), torch.ones_like(norms))
    return delta * _expand(scale, delta)


def pixel_limits(bounds: PixelBounds, like: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Low and high bound tensors broadcastable against a [batch x channels x ...] tensor."""
    shape = [1] * like.dim()
    limits = []
    for bound in bounds:
        values = torch.as_tensor(bound, dtype=like.dtype, device=like.device).reshape(-1)
        if values.numel() > 1:
            if like.dim() < 2 or like.shape[1] != values.numel():
                raise ValidationError(
                    f"{values.numel()} per-channel pixel bounds do not match input shape {tuple(like.shape)}",
                    target="pixel_bounds",
                )
            shape[1] = values.numel()
        limits.append(values.reshape(shape if values.numel() > 1 else [1] * like.dim()))
    return limits[0], limits[1]


def clamp_pixels(x: torch.Tensor, bounds: PixelBounds) -> torch.Tensor:
    """Clamp every channel of x to its own valid range."""
    low, high = pixel_limits(bounds, x)
    return torch.max(torch.min(x, high), low)


def achieved_norms(delta: torch.Tensor, norm: Union[str, Norm]) -> np.ndarray:
    flat = delta.detach().flatten(1)
    if Norm(norm) == Norm.LINF:
        values = flat.abs().amax(dim=1) if flat.shape[1] else torch.zeros(flat.shape[0])
    else:
        values = flat.norm(p=2, dim=1)
    return values.cpu().double().numpy()


def _check_epsilon(eps: float, grid: Sequence[float]) -> None:
    if eps == 0:
        return
    if not any(np.isclose(eps, g, rtol=1e-9, atol=0.0) for g in grid):
        raise ValidationError(f"eps {eps:g} is not on the configured grid", target="eps")


def _loss_and_grad(model: nn.Module, x_adv: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    x_adv = x_adv.detach().requires_grad_(True)
    loss = F.cross_entropy(logits_of(model(x_adv)), y, reduction="sum")
    (grad,) = torch.autograd.grad(loss, x_adv)
    _check_items(grad)
    return grad


def _check_items(grad: torch.Tensor) -> None:
    bad = ~torch.isfinite(grad.flatten(1)).all(dim=1)
    if bad.any():
        item = int(torch.nonzero(bad)[0])
        raise NonFiniteError(f"Non-finite input gradient for item {item}", item=item)


@torch.no_grad()
def _predictions(model: nn.Module, x: torch.Tensor) -> torch.Tensor:
    return logits_of(model(x)).argmax(dim=1)


def _result(model: nn.Module, x: torch.Tensor, x_adv: torch.Tensor, y: torch.Tensor,
            norm: Norm, eps: float, tag: AttackTag) -> AdversarialResult:
    adversarial = _predictions(model, x_adv)
    clean = _predictions(model, x)
    return AdversarialResult(
        x_adv=x_adv.detach(),
        achieved_norm=achieved_norms(x_adv - x, norm),
        fooled=(adversarial != y).cpu().numpy(),
        epsilon=float(eps),
        attack_tag=tag.value,
        clean_correct=(clean == y).cpu().numpy(),
    )


def _random_start(x: torch.Tensor, norm: Norm, eps: float, seed: int) -> torch.Tensor:
    generator = torch.Generator(device="cpu").manual_seed(seed)
    if norm == Norm.LINF:
        noise = torch.rand(x.shape, generator=generator, dtype=x.dtype) * 2 * eps - eps
    else:
        direction = torch.randn(x.shape, generator=generator, dtype=x.dtype)
        direction = direction / _expand(_flat_norms(direction).clamp_min(1e-12), direction)
        radius = torch.rand(x.shape[0], generator=generator, dtype=x.dtype) * eps
        noise = direction * _expand(radius, direction)
    return noise.to(x.device)


def pgd_attack(model: nn.Module, x: torch.Tensor, y: torch.Tensor, cfg: PgdConfig, eps: float) -> AdversarialResult:
    """Untargeted PGD maximizing the true-class cross-entropy."""
    _check_epsilon(eps, cfg.epsilons)
    y = y.long()
    with eval_mode(model):
        if eps == 0:
            return _result(model, x, x.clone(), y, cfg.norm, 0.0, cfg.attack_tag)
        alpha = eps * cfg.rel_step
        delta = torch.zeros_like(x)
        if cfg.random_start:
            delta = project(_random_start(x, cfg.norm, eps, cfg.seed), cfg.norm, eps)
        x_adv = clamp_pixels(x + delta, cfg.pixel_bounds)
        for _ in range(cfg.steps):
            grad = _loss_and_grad(model, x_adv, y)
            if cfg.norm == Norm.LINF:
                step = grad.sign()
            else:
                norms = _flat_norms(grad)
                step = grad / _expand(torch.where(norms > 0, norms, torch.ones_like(norms)), grad)
            delta = project(x_adv.detach() + alpha * step - x, cfg.norm, eps)
            x_adv = clamp_pixels(x + delta, cfg.pixel_bounds)
        x_adv = clamp_pixels(x + project(x_adv - x, cfg.norm, eps), cfg.pixel_bounds)
        return _result(model, x, x_adv, y, cfg.norm, eps, cfg.attack_tag)


def _distance(x_adv: torch.Tensor, x: torch.Tensor, kind: str) -> torch.Tensor:
    squared = (x_adv - x).flatten(1).pow(2).sum(dim=1)
    if kind == "l2":
        return torch.sqrt(squared + 1e-12)
    return squared


def cw_attack(model: nn.Module, x: torch.Tensor, y: torch.Tensor, cfg: CwConfig, eps: float) -> AdversarialResult:
    """Gradient descent on J = dist_weight * dist(x, x') - loss_weight * CE, then projected to the eps-ball."""
    _check_epsilon(eps, cfg.epsilons)
    y = y.long()
    with eval_mode(model):
        if eps == 0:
            return _result(model, x, x.clone(), y, Norm.L2, 0.0, AttackTag.CW_L2)
        eta = eps * cfg.rel_step
        x_adv = x.clone()
        if cfg.init_noise > 0:
            generator = torch.Generator(device="cpu").manual_seed(cfg.seed)
            noise = torch.randn(x.shape, generator=generator, dtype=x.dtype).to(x.device)
            x_adv = x + cfg.init_noise * noise
        for _ in range(cfg.iterations):
            x_adv = x_adv.detach().requires_grad_(True)
            ce = F.cross_entropy(logits_of(model(x_adv)), y, reduction="none")
            objective = cfg.dist_weight * _distance(x_adv, x, cfg.distance) - cfg.loss_weight * ce
            (grad,) = torch.autograd.grad(objective.sum(), x_adv)
            _check_items(grad)
            x_adv = x_adv.detach() - eta * grad
        x_adv = clamp_pixels(x + project(x_adv.detach() - x, Norm.L2, eps), cfg.pixel_bounds)
        return _result(model, x, x_adv, y, Norm.L2, eps, AttackTag.CW_L2)


def run_attack(model: nn.Module, x: torch.Tensor, y: torch.Tensor, cfg: AttackConfig, eps: float) -> AdversarialResult:
    """Dispatch on the configuration type."""
    if isinstance(cfg, CwConfig):
        return cw_attack(model, x, y, cfg, eps)
    return pgd_attack(model, x, y, cfg, eps)


def save_adversarial_batch(
    path: Union[str, Path],
    result: AdversarialResult,
    checkpoint_hash: str,
    extra: Optional[Dict[str, Any]] = None,
) -> None:
    """Persist x_adv with the fields needed to replay it."""
    x_adv = result.x_adv.cpu().numpy() if isinstance(result.x_adv, torch.Tensor) else np.asarray(result.x_adv)
    sidecar: Dict[str, Any] = {
        "attack_tag": result.attack_tag,
        "epsilon": result.epsilon,
        "checkpoint_hash": checkpoint_hash,
        "achieved_norm": [float(v) for v in result.achieved_norm],
        "fooled": [bool(v) for v in result.fooled],
    }
    sidecar.update(extra or {})
    write_tensor(path, x_adv, sidecar=sidecar)
    logger.debug(f"Saved {result.attack_tag} eps={result.epsilon:g} batch to {path}")
