"""
报告服务
CSV 原始结果、带 ↑/↓/→ 标记的文本比较表、预算曲线数据与验收门限检查
"""
import csv
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from models.experiment_model import AcceptanceSpec, ExperimentPlan, RunRecord, WdlRow
from services.statistics_service import aggregate_wdl
from utils.exceptions import ValidationError
from utils.logger import log_info

CSV_COLUMNS = ["class", "dim", "instance_seed", "method", "optimizer", "budget", "run_seed",
               "best_objective", "fes_init", "fes_total"]
REPORT_FORMATS = ("csv", "text-table", "curve-data")


@dataclass
class AcceptanceOutcome:
    spec: AcceptanceSpec
    value: float
    passed: bool
    row: WdlRow


def _filter(records: Sequence[RunRecord], classes: Sequence[str] = (), dims: Sequence[int] = ()) -> List[RunRecord]:
    return [r for r in records
            if (not classes or r.class_tag in classes) and (not dims or r.dim in dims)]


def write_csv(records: Sequence[RunRecord], path: str, budget: Optional[int] = None) -> str:
    """每条运行记录一行；给定 budget 时 best_objective 取该预算点的值"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            used = budget or r.budget
            writer.writerow([r.class_tag, r.dim, r.instance_seed, r.initializer, r.optimizer, used, r.run_seed,
                             repr(r.best_at(used) if budget else r.best_objective),
                             r.fes_init, min(r.fes_total, used)])
    return path


def comparison_pairs(records: Sequence[RunRecord], baseline: str = "rand") -> List[Tuple[str, str, str]]:
    """(优化器, 基线, 挑战者) 组合：每个优化器下其余初始化方法对基线"""
    pairs = []
    optimizers = sorted({r.optimizer for r in records})
    for optimizer in optimizers:
        initializers = sorted({r.initializer for r in records if r.optimizer == optimizer})
        if baseline not in initializers:
            continue
        pairs.extend((optimizer, baseline, challenger) for challenger in initializers if challenger != baseline)
    return pairs


def _format_row(row: WdlRow) -> str:
    return f"  #W-D-L {row.wins}-{row.draws}-{row.losses}   #Avg↑ {row.avg_up}/{row.total}"


def text_table(records: Sequence[RunRecord], budget: int, alpha: float = 0.05, baseline: str = "rand",
               group_by: str = "class") -> str:
    """逐实例 均值±标准差 比较表，按组给出 W-D-L 与 #Avg↑"""
    lines = []
    for optimizer, base, challenger in comparison_pairs(records, baseline):
        lines.append(f"== {challenger} vs {base} ({optimizer}, 预算 {budget}) ==")
        lines.append(f"{'instance':<24}{base:>26}{challenger:>26}  p-value")
        rows = aggregate_wdl(records, base, challenger, group_by, optimizer, budget, alpha)
        total = WdlRow("all")
        for row in rows:
            lines.append(f"[{row.group}]")
            for cell in row.cells:
                a = f"{cell.mean_a:.4g}±{cell.std_a:.3g}"
                b = f"{cell.mean_b:.4g}±{cell.std_b:.3g} {cell.marker}"
                lines.append(f"{cell.instance_id:<24}{a:>26}{b:>26}  {cell.p_value:.4f}")
            lines.append(_format_row(row))
            total.wins += row.wins
            total.draws += row.draws
            total.losses += row.losses
            total.avg_up += row.avg_up
            total.avg_ge += row.avg_ge
        if len(rows) > 1:
            lines.append("[all]")
            lines.append(_format_row(total))
        lines.append("")
    return "\n".join(lines)


def curve_data(records: Sequence[RunRecord], baseline: str, challenger: str, optimizer: str,
               budget_points: Sequence[int], alpha: float = 0.05) -> List[Dict[str, int]]:
    """每个预算点的 #Avg↑ 与 GoalDiff（胜数减负数）"""
    series = []
    for budget in sorted(budget_points):
        rows = aggregate_wdl(records, baseline, challenger, "all", optimizer, budget, alpha)
        row = rows[0]
        series.append({"budget": budget, "wins": row.wins, "draws": row.draws, "losses": row.losses,
                       "avg_up": row.avg_up, "goal_diff": row.goal_diff})
    return series


def write_curve_data(records: Sequence[RunRecord], path: str, budget_points: Sequence[int],
                     alpha: float = 0.05, baseline: str = "rand") -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["optimizer", "baseline", "challenger", "budget", "wins", "draws", "losses",
                         "avg_up", "goal_diff"])
        for optimizer, base, challenger in comparison_pairs(records, baseline):
            for point in curve_data(records, base, challenger, optimizer, budget_points, alpha):
                writer.writerow([optimizer, base, challenger, point["budget"], point["wins"], point["draws"],
                                 point["losses"], point["avg_up"], point["goal_diff"]])
    return path


def check_acceptance(records: Sequence[RunRecord], plan: ExperimentPlan) -> List[AcceptanceOutcome]:
    """按计划中的验收门限检查结果"""
    outcomes = []
    for spec in plan.acceptance:
        subset = _filter(records, spec.classes, spec.dims)
        rows = aggregate_wdl(subset, spec.baseline, spec.challenger, "all", spec.optimizer, plan.budget, plan.alpha)
        row = rows[0]
        if spec.metric == "avg_up_fraction":
            value = row.avg_up / row.total
            passed = value >= spec.threshold
        elif spec.metric == "avg_ge_fraction":
            value = row.avg_ge / row.total
            passed = value >= spec.threshold
        elif spec.metric == "goal_diff":
            value = float(row.goal_diff)
            passed = value > spec.threshold
        else:
            value = float(row.goal_diff)
            passed = row.wins > row.losses
        outcomes.append(AcceptanceOutcome(spec, value, passed, row))
    return outcomes


def format_acceptance(outcomes: Sequence[AcceptanceOutcome]) -> str:
    lines = ["== 验收检查 =="]
    for o in outcomes:
        status = "通过" if o.passed else "未通过"
        lines.append(f"{status}  {o.spec.name}: {o.spec.metric}={o.value:.4g} (门限 {o.spec.threshold:g}), "
                     f"W-D-L {o.row.wins}-{o.row.draws}-{o.row.losses}")
    return "\n".join(lines)


def emit_report(records: Sequence[RunRecord], plan: ExperimentPlan, out_dir: str,
                formats: Sequence[str] = REPORT_FORMATS, baseline: str = "rand") -> List[str]:
    """按所选格式写出报告文件，返回文件路径列表"""
    unknown = [f for f in formats if f not in REPORT_FORMATS]
    if unknown:
        raise ValidationError(f"未知的报告格式: {', '.join(unknown)}", field="format")
    if not records:
        raise ValidationError("没有可报告的运行记录", field="results")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        written.append(write_csv(records, os.path.join(out_dir, "results.csv"), plan.budget))
    if "text-table" in formats:
        path = os.path.join(out_dir, "comparison.txt")
        text = text_table(records, plan.budget, plan.alpha, baseline)
        if plan.acceptance:
            text += "\n" + format_acceptance(check_acceptance(records, plan)) + "\n"
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        written.append(path)
    if "curve-data" in formats:
        written.append(write_curve_data(records, os.path.join(out_dir, "curves.csv"), plan.budget_points,
                                        plan.alpha, baseline))
    log_info(f"报告已写出: {', '.join(written)}")
    return written
