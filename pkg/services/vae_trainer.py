"""
代理模型训练服务
基于动量 SGD 训练 VAE，以及解码器的迁移微调
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.neural_model import (DenseLayer, FinetuneConfig, MlpParams, TrainConfig,
                                 TrainingResult, VaeSurrogate)
from services.neural_network import (build_surrogate, decoder_loss_and_gradient, encode,
                                     loss_and_gradient, vae_loss)
from utils.exceptions import TrainingDivergenceError, ValidationError
from utils.logger import log_debug, log_info


class MomentumSGD:
    """作用于参数数组列表（原地更新）的动量 SGD，按全局范数裁剪梯度"""

    def __init__(self, params: Sequence[np.ndarray], learning_rate: float, momentum: float,
                 clip_norm: Optional[float] = None):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray], scale: float = 1.0) -> float:
        """执行一步更新，返回缩放后、裁剪前的梯度全局范数；范数非有限时不更新"""
        norm = scale * float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))
        if not np.isfinite(norm):
            return norm
        factor = scale
        if self.clip_norm is not None and norm > self.clip_norm:
            factor *= self.clip_norm / norm
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v -= self.learning_rate * factor * g
            p += v
        return norm


def normalize_objectives(y: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """按数据集做 min-max 归一化；常数目标映射为 0"""
    y = np.asarray(y, dtype=np.float64)
    y_min, y_max = float(np.min(y)), float(np.max(y))
    span = y_max - y_min
    if span <= 0:
        return np.zeros_like(y), y_min, y_max
    return (y - y_min) / span, y_min, y_max


def _mean_loss(surrogate: VaeSurrogate, x: np.ndarray, y: np.ndarray, config: TrainConfig,
               eps: np.ndarray) -> float:
    return vae_loss(surrogate, x, y, config.score_weight, config.kl_weight, eps=eps) / x.shape[0]


def train_vae(x: np.ndarray, y: np.ndarray, config: TrainConfig = None, latent_dim: Optional[int] = None,
              instance_id: Optional[str] = None) -> TrainingResult:
    """在数据集 (x, y) 上训练代理模型；返回全数据集评估损失最低的权重"""
    config = config or TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError(f"数据集形状不一致: x {x.shape}, y {y.shape}", field="dataset")
    count, dim = x.shape
    if count < config.batch_size:
        raise ValidationError(f"数据集样本数 {count} 小于 batch_size {config.batch_size}", field="dataset")

    rng = np.random.default_rng(config.seed)
    surrogate = build_surrogate(dim, rng, latent_dim, config.hidden_activation)
    # 固定一份 ε 用于评估，使初始与各轮损失可比
    eval_eps = rng.standard_normal((count, surrogate.latent_dim))

    initial = _mean_loss(surrogate, x, y, config, eval_eps)
    best_loss, best = initial, surrogate.copy()
    params = [a for part in surrogate.parts() for a in part.arrays()]
    optimizer = MomentumSGD(params, config.learning_rate, config.momentum, config.clip_norm)
    epoch_losses: List[float] = []

    for epoch in range(config.epochs):
        order = rng.permutation(count)
        total = 0.0
        for start in range(0, count, config.batch_size):
            idx = order[start:start + config.batch_size]
            eps = rng.standard_normal((idx.size, surrogate.latent_dim))
            loss, grads = loss_and_gradient(surrogate, x[idx], y[idx], config.score_weight,
                                            config.kl_weight, eps)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(
                    f"第 {epoch + 1} 轮训练损失非有限 ({loss})，实例: {instance_id}", instance_id=instance_id
                )
            total += loss
            norm = optimizer.step([g for group in grads for g in group], scale=1.0 / idx.size)
            if not np.isfinite(norm):
                raise TrainingDivergenceError(
                    f"第 {epoch + 1} 轮梯度非有限，实例: {instance_id}", instance_id=instance_id
                )
        epoch_losses.append(total / count)

        current = _mean_loss(surrogate, x, y, config, eval_eps)
        if not np.isfinite(current):
            raise TrainingDivergenceError(
                f"第 {epoch + 1} 轮评估损失非有限，实例: {instance_id}", instance_id=instance_id
            )
        if current < best_loss:
            best_loss, best = current, surrogate.copy()
        if (epoch + 1) % 50 == 0:
            log_debug(f"[{instance_id}] epoch {epoch + 1}/{config.epochs} 训练损失 {epoch_losses[-1]:.6f}")

    log_info(f"代理模型训练完成 [{instance_id}]: 初始损失 {initial:.6f} -> {best_loss:.6f}")
    return TrainingResult(best, initial, best_loss, epoch_losses, instance_id)


def resize_output_layer(decoder: MlpParams, target_dim: int, rng: np.random.Generator,
                        init_std: float = 0.01) -> MlpParams:
    """调整解码器最后一层宽度：截断保留前 target_dim 个输出，或追加 N(0, init_std) 初始化的输出"""
    if target_dim < 1:
        raise ValidationError(f"目标维度必须为正: {target_dim}", field="target_dim")
    resized = decoder.copy()
    last = resized.layers[-1]
    old = last.out_dim
    if target_dim <= old:
        weight = last.weight[:, :target_dim].copy()
        bias = last.bias[:target_dim].copy()
    else:
        extra = target_dim - old
        weight = np.concatenate([last.weight, rng.normal(0.0, init_std, (last.in_dim, extra))], axis=1)
        bias = np.concatenate([last.bias, rng.normal(0.0, init_std, extra)])
    resized.layers[-1] = DenseLayer(weight, bias, last.activation)
    return resized


def finetune_decoder(surrogate: VaeSurrogate, x_in: np.ndarray, x_out: np.ndarray, target_dim: int,
                     config: FinetuneConfig = None) -> Tuple[VaeSurrogate, List[float]]:
    """只微调解码器：编码路径使用确定性 z = μ_z；返回新模型与逐轮最优损失序列（非增）"""
    config = config or FinetuneConfig()
    x_in = np.asarray(x_in, dtype=np.float64)
    x_out = np.asarray(x_out, dtype=np.float64)
    if x_in.ndim != 2 or x_in.shape[0] == 0:
        raise ValidationError("微调样本对不能为空", field="pairs")
    if x_in.shape[1] != surrogate.input_dim:
        raise ValidationError(f"输入维度 {x_in.shape[1]} 与模型输入维度 {surrogate.input_dim} 不一致",
                              field="x_in")
    if x_out.shape != (x_in.shape[0], target_dim):
        raise ValidationError(f"目标解形状 {x_out.shape} 与目标维度 {target_dim} 不一致", field="x_out")

    rng = np.random.default_rng(config.seed)
    decoder = resize_output_layer(surrogate.decoder, target_dim, rng, config.init_std)
    z, _ = encode(surrogate, x_in)
    z = np.atleast_2d(z)

    count = z.shape[0]
    best_loss, _ = decoder_loss_and_gradient(decoder, z, x_out, need_grad=False)
    best = decoder.copy()
    history = [best_loss]
    optimizer = MomentumSGD(decoder.arrays(), config.learning_rate, config.momentum, config.clip_norm)
    for _ in range(config.epochs):
        order = rng.permutation(count)
        for start in range(0, count, config.batch_size):
            idx = order[start:start + config.batch_size]
            _, grads = decoder_loss_and_gradient(decoder, z[idx], x_out[idx])
            optimizer.step(grads, scale=1.0 / idx.size)
        loss, _ = decoder_loss_and_gradient(decoder, z, x_out, need_grad=False)
        if np.isfinite(loss) and loss < best_loss:
            best_loss, best = loss, decoder.copy()
        history.append(best_loss)

    tuned = VaeSurrogate(surrogate.encoder.copy(), best, surrogate.scorer.copy())
    return tuned, history
