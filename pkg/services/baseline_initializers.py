"""
基线初始化方法
Rand（均匀随机）、OBL（反向学习）、SVM-SS（线性最大间隔分类器引导的逐个选样）
"""
import warnings
from typing import List, Optional

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import SGDClassifier

from models.population_model import BudgetMeter, InitResult, PopulationMember, Provenance, SvmSsConfig
from models.problem_model import EvaluatedSample, ProblemInstance, complement, random_solutions
from services.problem_service import repair
from utils.exceptions import ValidationError
from utils.logger import log_debug


def _result(samples: List[EvaluatedSample], fes: int, p: Optional[int] = None) -> InitResult:
    members = [PopulationMember(s.solution, s.objective, Provenance.RANDOM) for s in samples]
    members.sort(key=lambda m: -m.objective)
    return InitResult(members[:p] if p else members, fes)


def init_rand(instance: ProblemInstance, p: int, meter: BudgetMeter, rng: np.random.Generator) -> InitResult:
    """p 个均匀随机解，消耗 p 次评估"""
    meter.require(p, "Rand 初始化")
    start = meter.used
    samples = [meter.evaluate(instance, x) for x in random_solutions(rng, p, instance.dim)]
    return _result(samples, meter.used - start)


def init_obl(instance: ProblemInstance, p: int, meter: BudgetMeter, rng: np.random.Generator) -> InitResult:
    """p/2 个随机解及其（修复前的）按位取反"""
    if p % 2:
        raise ValidationError(f"OBL 需要偶数的种群规模，当前 p={p}", field="p")
    meter.require(p, "OBL 初始化")
    start = meter.used
    raw = random_solutions(rng, p // 2, instance.dim)
    opposite = np.array([complement(x) for x in raw], dtype=np.uint8)
    samples = [meter.evaluate(instance, x) for x in np.concatenate([raw, opposite], axis=0)]
    return _result(samples, meter.used - start)


def _fit_classifier(x: np.ndarray, y: np.ndarray, config: SvmSsConfig, seed: int) -> SGDClassifier:
    """前一半（目标值高）标为 1，后一半标为 0，拟合线性 hinge 损失分类器"""
    order = np.argsort(-y, kind="stable")
    labels = np.zeros(len(y), dtype=np.int64)
    labels[order[:len(y) // 2]] = 1
    classifier = SGDClassifier(loss="hinge", alpha=config.regularization, max_iter=1000, tol=1e-3,
                               random_state=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=ConvergenceWarning)
        classifier.fit(x.astype(np.float64), labels)
    return classifier


def init_svmss(instance: ProblemInstance, p: int, budget: int, meter: BudgetMeter, rng: np.random.Generator,
               config: SvmSsConfig = None) -> InitResult:
    """SVM-SS：随机初始样本后，每轮评估分类器打分最高的未评估候选，直到用完 budget"""
    config = config or SvmSsConfig()
    if budget < p or budget < config.initial:
        raise ValidationError(f"SVM-SS 预算 {budget} 小于种群规模 {p} 或初始样本数 {config.initial}",
                              field="svmss.budget")
    meter.require(budget, "SVM-SS 初始化")
    start = meter.used

    samples = [meter.evaluate(instance, x) for x in random_solutions(rng, config.initial, instance.dim)]
    seen = {s.solution.tobytes() for s in samples}
    while len(samples) < budget:
        x = np.array([s.solution for s in samples], dtype=np.uint8)
        y = np.array([s.objective for s in samples])
        classifier = _fit_classifier(x, y, config, int(rng.integers(0, 2 ** 31)))

        pool = np.array([repair(instance, c) for c in random_solutions(rng, config.pool_size, instance.dim)])
        fresh = np.array([c.tobytes() not in seen for c in pool])
        if fresh.any():
            pool = pool[fresh]
        scores = classifier.decision_function(pool.astype(np.float64))
        chosen = pool[int(np.argmax(scores))]
        sample = meter.evaluate(instance, chosen)
        seen.add(sample.solution.tobytes())
        samples.append(sample)

    log_debug(f"SVM-SS 完成: {len(samples)} 次评估")
    return _result(samples, meter.used - start, p)
