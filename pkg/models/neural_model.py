"""
神经网络数据模型
MLP 参数、VAE 经验代理模型、训练配置
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from utils.exceptions import ValidationError

ACTIVATIONS = ("relu", "tanh", "identity", "sigmoid")
ACTIVATION_CODES = {name: code for code, name in enumerate(ACTIVATIONS)}


@dataclass
class DenseLayer:
    """全连接层：输出 = act(x @ weight + bias)"""
    weight: np.ndarray   # (in, out)
    bias: np.ndarray     # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"不支持的激活函数: {self.activation}", field="activation")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValidationError(
                f"层形状不匹配: weight {self.weight.shape}, bias {self.bias.shape}", field="layers"
            )

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.weight.shape[1])

    def copy(self) -> 'DenseLayer':
        return DenseLayer(self.weight.copy(), self.bias.copy(), self.activation)


@dataclass
class MlpParams:
    """多层感知机参数"""
    layers: List[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("MLP 至少需要一层", field="layers")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValidationError(
                    f"相邻层形状无法衔接: {prev.out_dim} -> {nxt.in_dim}", field="layers"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def num_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def copy(self) -> 'MlpParams':
        return MlpParams([layer.copy() for layer in self.layers])

    def arrays(self) -> List[np.ndarray]:
        """按 (W1, b1, W2, b2, ...) 顺序返回参数数组的引用"""
        result = []
        for layer in self.layers:
            result.extend([layer.weight, layer.bias])
        return result

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vector: np.ndarray) -> 'MlpParams':
        """用扁平向量构造同结构的新参数"""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.num_params,):
            raise ValidationError(
                f"扁平参数长度 {vector.shape} 与网络参数数量 {self.num_params} 不一致", field="weights"
            )
        layers = []
        offset = 0
        for layer in self.layers:
            w_size = layer.weight.size
            weight = vector[offset:offset + w_size].reshape(layer.weight.shape).copy()
            offset += w_size
            bias = vector[offset:offset + layer.bias.size].copy()
            offset += layer.bias.size
            layers.append(DenseLayer(weight, bias, layer.activation))
        return MlpParams(layers)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class VaeSurrogate:
    """VAE 经验代理模型：编码器 / 解码器 / 评分器"""
    encoder: MlpParams   # d -> 2*d_z (μ ⊕ log σ)
    decoder: MlpParams   # d_z -> d_out
    scorer: MlpParams    # d_z -> 1

    def __post_init__(self):
        if self.encoder.out_dim % 2:
            raise ValidationError("编码器输出维度必须为偶数 (μ ⊕ log σ)", field="encoder")
        latent = self.encoder.out_dim // 2
        if self.decoder.in_dim != latent or self.scorer.in_dim != latent:
            raise ValidationError(
                f"隐空间维度不一致: encoder {latent}, decoder {self.decoder.in_dim}, scorer {self.scorer.in_dim}",
                field="latent_dim"
            )
        if self.scorer.out_dim != 1:
            raise ValidationError("评分器输出维度必须为 1", field="scorer")

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim // 2

    @property
    def input_dim(self) -> int:
        return self.encoder.in_dim

    @property
    def output_dim(self) -> int:
        return self.decoder.out_dim

    def parts(self) -> Tuple[MlpParams, MlpParams, MlpParams]:
        return self.encoder, self.decoder, self.scorer

    def copy(self) -> 'VaeSurrogate':
        return VaeSurrogate(self.encoder.copy(), self.decoder.copy(), self.scorer.copy())

    def flatten(self) -> np.ndarray:
        return np.concatenate([part.flatten() for part in self.parts()])

    def with_flat(self, vector: np.ndarray) -> 'VaeSurrogate':
        sizes = [part.num_params for part in self.parts()]
        if len(vector) != sum(sizes):
            raise ValidationError(f"扁平参数长度 {len(vector)} 与模型参数数量 {sum(sizes)} 不一致",
                                  field="weights")
        e, d = sizes[0], sizes[0] + sizes[1]
        return VaeSurrogate(
            self.encoder.with_flat(vector[:e]),
            self.decoder.with_flat(vector[e:d]),
            self.scorer.with_flat(vector[d:]),
        )


@dataclass(frozen=True)
class TrainConfig:
    """代理模型训练配置"""
    learning_rate: float = 1e-2
    epochs: int = 300
    batch_size: int = 32
    score_weight: float = 1.0    # λ1
    kl_weight: float = 1e-3      # λ2
    momentum: float = 0.9
    clip_norm: float = 1.0       # 小批量平均梯度的全局范数上限
    seed: int = 0
    hidden_activation: str = "relu"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("learning_rate / epochs / batch_size 必须为正", field="train")
        if self.score_weight < 0 or self.kl_weight < 0:
            raise ValidationError("λ1、λ2 不能为负", field="train")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum 必须位于 [0, 1)", field="train.momentum")
        if self.clip_norm <= 0:
            raise ValidationError("clip_norm 必须为正", field="train.clip_norm")
        if self.hidden_activation not in ACTIVATIONS:
            raise ValidationError(f"不支持的激活函数: {self.hidden_activation}", field="train.hidden_activation")


@dataclass(frozen=True)
class FinetuneConfig:
    """解码器微调配置"""
    learning_rate: float = 1e-2
    epochs: int = 200
    batch_size: int = 32
    momentum: float = 0.9
    clip_norm: float = 1.0
    seed: int = 0
    init_std: float = 0.01

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("learning_rate / epochs / batch_size 必须为正", field="finetune")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum 必须位于 [0, 1)", field="finetune.momentum")
        if self.clip_norm <= 0:
            raise ValidationError("clip_norm 必须为正", field="finetune.clip_norm")


@dataclass
class TrainingResult:
    """训练结果：模型、初始与最终的全数据集平均损失、每轮训练损失"""
    surrogate: VaeSurrogate
    initial_loss: float
    final_loss: float
    epoch_losses: List[float] = field(default_factory=list)
    instance_id: Optional[str] = None
