"""
统计服务
Wilcoxon 秩和检验（小样本精确分布 / 大样本正态近似）与 W-D-L 汇总
"""
from collections import OrderedDict
from math import comb
from typing import Dict, List, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from models.experiment_model import ComparisonCell, RunRecord, WdlRow
from utils.exceptions import ValidationError

EXACT_LIMIT = 20


def _exact_pvalue(doubled_ranks: np.ndarray, n: int, w2: int) -> float:
    """精确分布：对 n 个（二倍）秩之和做计数动态规划"""
    total = int(doubled_ranks.sum())
    counts = [[0] * (total + 1) for _ in range(n + 1)]
    counts[0][0] = 1
    for r in doubled_ranks.tolist():
        for k in range(n, 0, -1):
            row, prev = counts[k], counts[k - 1]
            for s in range(total, r - 1, -1):
                if prev[s - r]:
                    row[s] += prev[s - r]
    size = len(doubled_ranks)
    expected2 = n * (size + 1)
    observed = abs(w2 - expected2)
    extreme = sum(c for s, c in enumerate(counts[n]) if c and abs(s - expected2) >= observed)
    return min(1.0, extreme / comb(size, n))


def _normal_pvalue(ranks: np.ndarray, n: int, m: int, w: float) -> float:
    size = n + m
    u = w - n * (n + 1) / 2.0
    mean = n * m / 2.0
    _, ties = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(ties ** 3 - ties)) / (size * (size - 1))
    var = n * m / 12.0 * ((size + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = (abs(u - mean) - 0.5) / np.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))


def wilcoxon_ranksum(a: Sequence[float], b: Sequence[float], exact_limit: int = EXACT_LIMIT) -> float:
    """双侧 Wilcoxon 秩和检验的 p 值（并列取平均秩）"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValidationError("秩和检验的样本不能为空", field="samples")
    if a.size < 2 or b.size < 2:
        raise ValidationError(f"秩和检验要求每组至少 2 个样本: {a.size}, {b.size}", field="samples")
    ranks = rankdata(np.concatenate([a, b]), method="average")
    n, m = a.size, b.size
    w = float(ranks[:n].sum())
    if n + m <= exact_limit:
        doubled = np.rint(2 * ranks).astype(np.int64)
        return _exact_pvalue(doubled, n, int(round(2 * w)))
    return _normal_pvalue(ranks, n, m, w)


def compare_samples(instance_id: str, baseline: Sequence[float], challenger: Sequence[float],
                    alpha: float = 0.05) -> ComparisonCell:
    """挑战者相对基线的比较（最大化）"""
    a = np.asarray(baseline, dtype=np.float64)
    b = np.asarray(challenger, dtype=np.float64)
    p_value = wilcoxon_ranksum(a, b)
    if p_value >= alpha:
        verdict = "draw"
    else:
        verdict = "win" if b.mean() > a.mean() else "loss"
    return ComparisonCell(instance_id, float(a.mean()), float(a.std(ddof=1)),
                          float(b.mean()), float(b.std(ddof=1)), p_value, verdict)


def _group_key(record: RunRecord, group_by: str) -> str:
    if group_by == "class":
        return record.class_tag
    if group_by == "dim":
        return str(record.dim)
    if group_by == "all":
        return "all"
    raise ValidationError(f"未知的分组方式: {group_by}", field="group_by")


def _method_of(record: RunRecord) -> str:
    return record.initializer


def aggregate_wdl(results: Sequence[RunRecord], baseline_method: str, challenger_method: str,
                  group_by: str = "all", optimizer: str = None, budget: int = None,
                  alpha: float = 0.05) -> List[WdlRow]:
    """按组统计挑战者相对基线的显著胜 / 平 / 负个数以及均值更高的实例数"""
    samples: Dict[str, Dict[str, List[float]]] = OrderedDict()
    groups: Dict[str, str] = {}
    for record in results:
        if optimizer and record.optimizer != optimizer:
            continue
        method = _method_of(record)
        if method not in (baseline_method, challenger_method):
            continue
        value = record.best_at(budget) if budget else record.best_objective
        per_instance = samples.setdefault(record.instance_id, {baseline_method: [], challenger_method: []})
        per_instance[method].append(value)
        groups[record.instance_id] = _group_key(record, group_by)

    if not samples:
        raise ValidationError(f"结果中没有 {baseline_method} / {challenger_method} 的记录", field="results")

    rows: Dict[str, WdlRow] = OrderedDict()
    for instance_id in sorted(samples, key=lambda i: (groups[i], i)):
        values = samples[instance_id]
        if len(values[baseline_method]) < 2 or len(values[challenger_method]) < 2:
            raise ValidationError(f"实例 {instance_id} 缺少 {baseline_method} 或 {challenger_method} 的结果",
                                  field="results")
        cell = compare_samples(instance_id, values[baseline_method], values[challenger_method], alpha)
        row = rows.setdefault(groups[instance_id], WdlRow(groups[instance_id]))
        row.cells.append(cell)
        if cell.verdict == "win":
            row.wins += 1
        elif cell.verdict == "loss":
            row.losses += 1
        else:
            row.draws += 1
        if cell.mean_b > cell.mean_a:
            row.avg_up += 1
        if cell.mean_b >= cell.mean_a:
            row.avg_ge += 1
    return list(rows.values())
