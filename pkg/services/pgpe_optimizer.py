"""
PGPE 优化器
对称（镜像）采样的参数探索策略梯度，用于门控网络权重的黑盒最大化
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from models.experience_model import PgpeConfig
from utils.exceptions import ValidationError
from utils.logger import log_debug, log_info


@dataclass
class PgpeResult:
    best_weights: np.ndarray
    best_value: float
    history: List[float] = field(default_factory=list)       # 每轮迭代后的现任最优值
    sigma_min: List[float] = field(default_factory=list)     # 每轮更新后 σ 的最小分量
    evaluations: int = 0


def mirrored_samples(mu: np.ndarray, sigma: np.ndarray, half: int, rng: np.random.Generator) -> np.ndarray:
    """采样 N 个 w_i ~ N(μ, σ²)，并追加镜像 w_{N+i} = 2μ − w_i"""
    eps = rng.standard_normal((half, mu.shape[0])) * sigma
    return np.concatenate([mu + eps, mu - eps], axis=0)


def pgpe_optimize(objective: Callable[[np.ndarray], float], dim: int, config: PgpeConfig = None,
                  rng: Optional[np.random.Generator] = None, mu0: Optional[np.ndarray] = None,
                  label: str = "PGPE") -> PgpeResult:
    """最大化 objective；返回现任最优权重（严格改进时替换）"""
    config = config or PgpeConfig()
    rng = rng or np.random.default_rng(0)
    if dim < 1:
        raise ValidationError(f"优化维度必须 ≥ 1，当前 {dim}", field="dim")
    mu = np.zeros(dim) if mu0 is None else np.array(mu0, dtype=np.float64)
    if mu.shape != (dim,):
        raise ValidationError(f"μ0 形状 {mu.shape} 与维度 {dim} 不一致", field="mu0")
    sigma = np.full(dim, config.sigma_init)
    half = config.half_population
    evaluations = 0

    def score(weights: np.ndarray) -> float:
        value = float(objective(weights))
        if not np.isfinite(value):
            raise ValidationError(f"{label} 目标函数返回非有限值: {value}", field="objective")
        return value

    def score_all(batch: np.ndarray) -> np.ndarray:
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as executor:
                return np.array(list(executor.map(score, batch)))
        return np.array([score(w) for w in batch])

    best_w, best_f = mu.copy(), score(mu)
    evaluations += 1
    result = PgpeResult(best_w, best_f)

    for iteration in range(config.max_iter):
        samples = mirrored_samples(mu, sigma, half, rng)
        eps = samples[:half] - mu
        values = score_all(np.concatenate([samples, mu[None, :]], axis=0))
        evaluations += values.shape[0]
        f_pos, f_neg, f_b = values[:half], values[half:2 * half], values[-1]

        star = int(np.argmax(values))
        if values[star] > best_f:
            best_f = float(values[star])
            best_w = samples[star].copy() if star < 2 * half else mu.copy()

        f_m = f_pos - f_neg
        s_mat = (eps ** 2 - sigma ** 2) / sigma
        f_s = (f_pos + f_neg) / 2.0 - f_b
        mu = mu + config.alpha_mu * (eps.T @ f_m)
        sigma = np.maximum(sigma + config.alpha_sigma * (s_mat.T @ f_s), config.sigma_limit)

        result.history.append(best_f)
        result.sigma_min.append(float(sigma.min()))
        log_debug(f"{label} 第 {iteration + 1} 轮: f(μ)={f_b:.6f}, 现任最优 {best_f:.6f}")

    result.best_weights, result.best_value, result.evaluations = best_w, best_f, evaluations
    log_info(f"{label} 完成 {config.max_iter} 轮迭代，最优值 {best_f:.6f}")
    return result
