"""
最小前馈神经网络
MLP 前向/反向传播、VAE 代理模型的前向、损失与精确梯度
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.neural_model import DenseLayer, MlpParams, VaeSurrogate
from utils.exceptions import ValidationError

LOG_SIGMA_MIN = -6.0
LOG_SIGMA_MAX = 2.0

ENCODER_HIDDEN = (64, 32)
DECODER_HIDDEN = (32, 64)
SCORER_HIDDEN = (32,)


def default_latent_dim(dim: int) -> int:
    return max(4, math.ceil(dim / 8))


def _activate(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        # 数值稳定的 logistic
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def init_mlp(sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator,
             scale: Optional[float] = None) -> MlpParams:
    """按层宽构造 MLP；默认使用 He/Glorot 风格的缩放正态初始化"""
    if len(sizes) < 2 or len(activations) != len(sizes) - 1:
        raise ValidationError(f"层宽 {list(sizes)} 与激活函数 {list(activations)} 数量不匹配", field="layers")
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        std = scale if scale is not None else math.sqrt((2.0 if act == "relu" else 1.0) / fan_in)
        weight = rng.normal(0.0, std, size=(fan_in, fan_out))
        layers.append(DenseLayer(weight, np.zeros(fan_out), act))
    return MlpParams(layers)


def build_surrogate(input_dim: int, rng: np.random.Generator, latent_dim: Optional[int] = None,
                    hidden_activation: str = "relu", output_dim: Optional[int] = None) -> VaeSurrogate:
    """构造默认结构的 VAE 代理模型"""
    if input_dim < 1:
        raise ValidationError(f"输入维度必须为正: {input_dim}", field="input_dim")
    dz = latent_dim or default_latent_dim(input_dim)
    d_out = output_dim or input_dim
    h = hidden_activation
    encoder = init_mlp([input_dim, *ENCODER_HIDDEN, 2 * dz], [h, h, "identity"], rng)
    decoder = init_mlp([dz, *DECODER_HIDDEN, d_out], [h, h, "sigmoid"], rng)
    scorer = init_mlp([dz, *SCORER_HIDDEN, 1], [h, "identity"], rng)
    return VaeSurrogate(encoder, decoder, scorer)


@dataclass
class ForwardCache:
    """反向传播所需的中间量"""
    inputs: List[np.ndarray]
    pre: List[np.ndarray]
    post: List[np.ndarray]


def mlp_forward(params: MlpParams, x: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    """批量前向传播，x 形状 (B, in)"""
    inputs, pre, post = [], [], []
    a = np.asarray(x, dtype=np.float64)
    for layer in params.layers:
        inputs.append(a)
        z = a @ layer.weight + layer.bias
        a = _activate(z, layer.activation)
        pre.append(z)
        post.append(a)
    return a, ForwardCache(inputs, pre, post)


def mlp_backward(params: MlpParams, cache: ForwardCache,
                 grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """反向传播；返回与 params.arrays() 同序的梯度列表以及对输入的梯度"""
    grads: List[np.ndarray] = [None] * (2 * len(params.layers))
    g = grad_out
    for idx in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[idx]
        g = g * _activation_grad(cache.pre[idx], cache.post[idx], layer.activation)
        grads[2 * idx] = cache.inputs[idx].T @ g
        grads[2 * idx + 1] = g.sum(axis=0)
        g = g @ layer.weight.T
    return grads, g


def mlp_predict(params: MlpParams, x: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(params, x)
    return out


def _as_batch(x: np.ndarray, dim: int, name: str = "x") -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValidationError(f"{name} 维度 {arr.shape} 与模型输入维度 {dim} 不一致", field=name)
    return arr, single


def encode(surrogate: VaeSurrogate, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """编码：返回 μ_z 与 σ_z（log σ 已截断）"""
    batch, single = _as_batch(x, surrogate.input_dim)
    out = mlp_predict(surrogate.encoder, batch)
    dz = surrogate.latent_dim
    mu = out[:, :dz]
    sigma = np.exp(np.clip(out[:, dz:], LOG_SIGMA_MIN, LOG_SIGMA_MAX))
    if single:
        return mu[0], sigma[0]
    return mu, sigma


@dataclass
class VaeOutput:
    x_recon: np.ndarray
    y_pred: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray


def vae_forward(surrogate: VaeSurrogate, x: np.ndarray, mode: str = "deterministic",
                rng: Optional[np.random.Generator] = None) -> VaeOutput:
    """VAE 前向：deterministic 使用 z = μ，sample 使用重参数化 z = μ + σ ⊙ ε"""
    batch, single = _as_batch(x, surrogate.input_dim)
    mu, sigma = encode(surrogate, batch)
    if mode == "sample":
        if rng is None:
            raise ValidationError("sample 模式需要提供随机数生成器", field="rng")
        z = mu + sigma * rng.standard_normal(mu.shape)
    elif mode == "deterministic":
        z = mu
    else:
        raise ValidationError(f"未知的前向模式: {mode}", field="mode")
    x_recon = mlp_predict(surrogate.decoder, z)
    y_pred = mlp_predict(surrogate.scorer, z)[:, 0]
    if single:
        return VaeOutput(x_recon[0], y_pred[0], mu[0], sigma[0])
    return VaeOutput(x_recon, y_pred, mu, sigma)


def _loss_and_grads(surrogate: VaeSurrogate, x: np.ndarray, y: np.ndarray, score_weight: float,
                    kl_weight: float, eps: np.ndarray, need_grad: bool = True):
    dz = surrogate.latent_dim
    enc_out, enc_cache = mlp_forward(surrogate.encoder, x)
    mu = enc_out[:, :dz]
    raw_s = enc_out[:, dz:]
    log_s = np.clip(raw_s, LOG_SIGMA_MIN, LOG_SIGMA_MAX)
    sigma = np.exp(log_s)
    z = mu + sigma * eps

    x_recon, dec_cache = mlp_forward(surrogate.decoder, z)
    y_out, sc_cache = mlp_forward(surrogate.scorer, z)
    y_pred = y_out[:, 0]

    d_out = x.shape[1]
    recon = np.mean((x_recon - x) ** 2, axis=1)
    score = (y_pred - y) ** 2
    kl = 0.5 * np.sum(mu ** 2 + sigma ** 2 - 1.0 - 2.0 * log_s, axis=1)
    loss = float(np.sum(recon + score_weight * score + kl_weight * kl))
    if not need_grad:
        return loss, None

    g_recon = 2.0 * (x_recon - x) / d_out
    dec_grads, g_z_dec = mlp_backward(surrogate.decoder, dec_cache, g_recon)
    g_score = (2.0 * score_weight * (y_pred - y))[:, None]
    sc_grads, g_z_sc = mlp_backward(surrogate.scorer, sc_cache, g_score)
    g_z = g_z_dec + g_z_sc

    g_mu = g_z + kl_weight * mu
    g_log_s = g_z * eps * sigma + kl_weight * (sigma ** 2 - 1.0)
    # 截断区间外 log σ 的梯度为 0
    g_log_s = g_log_s * ((raw_s > LOG_SIGMA_MIN) & (raw_s < LOG_SIGMA_MAX))
    enc_grads, _ = mlp_backward(surrogate.encoder, enc_cache, np.concatenate([g_mu, g_log_s], axis=1))
    return loss, (enc_grads, dec_grads, sc_grads)


def _prepare_batch(surrogate: VaeSurrogate, x, y, eps):
    xb, _ = _as_batch(x, surrogate.input_dim)
    if surrogate.output_dim != surrogate.input_dim:
        raise ValidationError("训练损失要求解码器输出维度等于输入维度", field="output_dim")
    yb = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if xb.shape[0] == 0 or yb.shape[0] != xb.shape[0]:
        raise ValidationError(f"批次为空或 x/y 数量不一致: {xb.shape[0]} vs {yb.shape[0]}", field="batch")
    if eps is None:
        eps = np.zeros((xb.shape[0], surrogate.latent_dim))
    eps = np.asarray(eps, dtype=np.float64).reshape(xb.shape[0], surrogate.latent_dim)
    return xb, yb, eps


def vae_loss(surrogate: VaeSurrogate, x: np.ndarray, y: np.ndarray, score_weight: float = 1.0,
             kl_weight: float = 1e-3, rng: Optional[np.random.Generator] = None,
             eps: Optional[np.ndarray] = None) -> float:
    """求和形式的 VAE 损失：重构 MSE + λ1·评分 MSE + λ2·KL"""
    if eps is None and rng is not None:
        eps = rng.standard_normal((np.atleast_2d(x).shape[0], surrogate.latent_dim))
    xb, yb, eps = _prepare_batch(surrogate, x, y, eps)
    loss, _ = _loss_and_grads(surrogate, xb, yb, score_weight, kl_weight, eps, need_grad=False)
    return loss


def loss_and_gradient(surrogate: VaeSurrogate, x: np.ndarray, y: np.ndarray, score_weight: float,
                      kl_weight: float, eps: Optional[np.ndarray] = None
                      ) -> Tuple[float, Tuple[List[np.ndarray], List[np.ndarray], List[np.ndarray]]]:
    """固定 ε 下的损失与按 (encoder, decoder, scorer) 分组的参数梯度"""
    xb, yb, eps = _prepare_batch(surrogate, x, y, eps)
    return _loss_and_grads(surrogate, xb, yb, score_weight, kl_weight, eps)


def gradient(surrogate: VaeSurrogate, x: np.ndarray, y: np.ndarray, score_weight: float,
             kl_weight: float, eps: Optional[np.ndarray] = None) -> np.ndarray:
    """与 VaeSurrogate.flatten() 同序的扁平梯度向量"""
    _, grads = loss_and_gradient(surrogate, x, y, score_weight, kl_weight, eps)
    return np.concatenate([g.ravel() for group in grads for g in group])


def decoder_loss_and_gradient(decoder: MlpParams, z: np.ndarray, targets: np.ndarray,
                              need_grad: bool = True) -> Tuple[float, Optional[List[np.ndarray]]]:
    """微调损失 Σ MSE(x_out, dec(z)) 及其对解码器参数的梯度"""
    out, cache = mlp_forward(decoder, z)
    diff = out - targets
    loss = float(np.sum(np.mean(diff ** 2, axis=1)))
    if not need_grad:
        return loss, None
    grads, _ = mlp_backward(decoder, cache, 2.0 * diff / targets.shape[1])
    return loss, grads


def decode(surrogate: VaeSurrogate, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """确定性重构（z = μ_z），分块处理大批量输入"""
    xb, single = _as_batch(x, surrogate.input_dim)
    chunks = []
    for start in range(0, xb.shape[0], batch_size):
        mu, _ = encode(surrogate, xb[start:start + batch_size])
        chunks.append(mlp_predict(surrogate.decoder, mu))
    out = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, surrogate.output_dim))
    return out[0] if single else out


def predict_scores(surrogate: VaeSurrogate, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """确定性评分预测，一个输入对应一个分数且保持顺序"""
    xb, _ = _as_batch(x, surrogate.input_dim)
    chunks = []
    for start in range(0, xb.shape[0], batch_size):
        mu, _ = encode(surrogate, xb[start:start + batch_size])
        chunks.append(mlp_predict(surrogate.scorer, mu)[:, 0])
    return np.concatenate(chunks) if chunks else np.zeros(0)
