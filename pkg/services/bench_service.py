"""
实验编排服务
读取 TOML 实验计划，按 (实例, 方法, 重复) 单元并行运行，结果写入只追加存储，可中断续跑
"""
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Dict, List, Optional, Tuple

from models.experiment_model import AcceptanceSpec, ExperimentPlan, InstanceSpec, MethodSpec, RunRecord
from models.problem_model import ProblemClass, ProblemInstance
from services.problem_service import GenerationOptions, generate_instance
from services.run_service import RunContext, run_single
from utils.exceptions import ConfigurationError, ValidationError, XferInitError, safe_execute
from utils.logger import log_info
from utils.result_store import ResultStore
from utils.seeding import derive_seed


def _as_list(value) -> list:
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


def parse_plan(data: Dict[str, Any], base_dir: str = ".",
               external_dims: Optional[Dict[str, int]] = None) -> ExperimentPlan:
    """把 TOML 解析结果转换为实验计划；相对路径以计划文件所在目录为基准"""
    external_dims = external_dims or {}
    bench = data.get("bench", {})
    artifacts = data.get("artifacts", {})

    def resolve(path: Optional[str]) -> Optional[str]:
        if not path:
            return None
        return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))

    instances: List[InstanceSpec] = []
    for entry in data.get("instances", []):
        class_tag = ProblemClass.parse(entry.get("class", "")).value
        if class_tag == ProblemClass.EXTERNAL.value:
            for name in _as_list(entry.get("name")):
                if name not in external_dims:
                    raise ConfigurationError(f"计划引用了未声明的外部实例: {name}",
                                             field=f"external_instances.{name}")
                instances.append(InstanceSpec(class_tag, external_dims[name], 0, name))
            continue
        for dim in _as_list(entry.get("dims", entry.get("dim"))):
            for seed in _as_list(entry.get("seeds", entry.get("seed", 0))):
                instances.append(InstanceSpec(class_tag, int(dim), int(seed)))

    methods: List[MethodSpec] = []
    for entry in data.get("methods", []):
        optimizers = _as_list(entry.get("optimizers", entry.get("optimizer", "ga-elite")))
        for optimizer in optimizers:
            methods.append(MethodSpec(str(entry["initializer"]), str(optimizer)))

    gating = {("" if name == "default" else name): resolve(path)
              for name, path in (artifacts.get("gating") or {}).items()}

    acceptance = [
        AcceptanceSpec(
            name=str(entry.get("name", f"{entry['challenger']}-vs-{entry['baseline']}")),
            challenger=str(entry["challenger"]),
            baseline=str(entry["baseline"]),
            optimizer=str(entry.get("optimizer", "ga-elite")),
            metric=str(entry.get("metric", "wdl_wins_gt_losses")),
            threshold=float(entry.get("threshold", 0.0)),
            classes=tuple(_as_list(entry.get("classes"))),
            dims=tuple(int(d) for d in _as_list(entry.get("dims"))),
        )
        for entry in data.get("acceptance", [])
    ]

    try:
        return ExperimentPlan(
            instances=instances,
            methods=methods,
            budget=int(bench.get("budget", 800)),
            sweep=[int(b) for b in bench.get("sweep", [])],
            repetitions=int(bench.get("repetitions", 30)),
            base_seed=int(bench.get("base_seed", 0)),
            alpha=float(bench.get("alpha", 0.05)),
            repository=resolve(artifacts.get("repository")),
            gating=gating,
            acceptance=acceptance,
            results=resolve(bench.get("results", "results/results.jsonl")),
        )
    except KeyError as e:
        raise ConfigurationError(f"实验计划缺少字段: {e}", field=str(e))


def load_plan(path: str, external_dims: Optional[Dict[str, int]] = None) -> ExperimentPlan:
    """读取 TOML 实验计划文件"""
    if not os.path.exists(path):
        raise ConfigurationError(f"实验计划文件不存在: {path}", field="plan")
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"实验计划文件格式错误: {path}: {e}", field="plan")
    return parse_plan(data, os.path.dirname(os.path.abspath(path)), external_dims)


def run_seed_for(plan: ExperimentPlan, instance_id: str, method: MethodSpec, repetition: int) -> int:
    """运行种子 = hash(base_seed, 实例 id, 方法 id, 重复序号)"""
    return derive_seed(plan.base_seed, instance_id, method.method_id, repetition)


def cell_id_for(instance_id: str, method: MethodSpec, repetition: int) -> str:
    return f"{instance_id}|{method.method_id}|{repetition}"


def initializer_cost(initializer: str, context: RunContext, p: int) -> int:
    base = initializer.split("@", 1)[0]
    if base == "svmss":
        return context.svmss.budget
    if base in ("rand", "obl"):
        return p
    if base == "no-interp":
        return context.mpi.e + context.mpi.k * context.mpi.q
    return context.mpi.planned_fes


def check_budget(plan: ExperimentPlan, context: RunContext) -> None:
    """总预算必须大于任一初始化方法的开销，否则不会留下搜索预算"""
    for method in plan.methods:
        cost = initializer_cost(method.initializer, context, context.pop_size(method.optimizer))
        if plan.budget <= cost:
            raise ConfigurationError(
                f"预算 {plan.budget} 不大于 {method.initializer} 的初始化开销 {cost}", field="bench.budget",
                suggestions=["增大 bench.budget"]
            )


def build_instances(plan: ExperimentPlan, options: GenerationOptions = None,
                    external=None) -> Dict[str, ProblemInstance]:
    """生成计划中的全部实例；external 为按名称构造外部实例的回调"""
    instances: Dict[str, ProblemInstance] = {}
    for spec in plan.instances:
        if spec.instance_id in instances:
            continue
        if spec.class_tag == ProblemClass.EXTERNAL.value:
            if external is None:
                raise ConfigurationError(f"无法构造外部实例 {spec.name}", field="external_instances")
            instances[spec.instance_id] = external(spec.name)
        else:
            instances[spec.instance_id] = generate_instance(spec.class_tag, spec.dim, spec.seed, options)
    return instances


def _cells(plan: ExperimentPlan) -> List[Tuple[InstanceSpec, MethodSpec, int]]:
    seen = set()
    cells = []
    for spec in plan.instances:
        for method in plan.methods:
            for repetition in range(plan.repetitions):
                key = cell_id_for(spec.instance_id, method, repetition)
                if key not in seen:
                    seen.add(key)
                    cells.append((spec, method, repetition))
    return cells


def run_experiment(plan: ExperimentPlan, context: RunContext, instances: Dict[str, ProblemInstance],
                   store: ResultStore, workers: int = 1) -> List[RunRecord]:
    """运行计划中所有未完成的单元，返回按计划顺序排列的全部运行记录"""
    check_budget(plan, context)
    cells = _cells(plan)
    pending = [cell for cell in cells if cell_id_for(cell[0].instance_id, cell[1], cell[2]) not in store]
    log_info(f"实验计划: {len(cells)} 个单元，已完成 {len(cells) - len(pending)}，待运行 {len(pending)}")

    def run_cell(cell) -> RunRecord:
        spec, method, repetition = cell
        instance_id = spec.instance_id
        record = run_single(instances[instance_id], method, plan.run_budget,
                            run_seed_for(plan, instance_id, method, repetition), context,
                            cell_id_for(instance_id, method, repetition), repetition)
        store.append(record)
        return record

    failures = []

    def guarded(cell) -> Optional[RunRecord]:
        cell_id = cell_id_for(cell[0].instance_id, cell[1], cell[2])
        return safe_execute(run_cell, cell, error_message=f"单元 {cell_id} 失败", context={"cell": cell_id},
                            on_error=lambda e: failures.append((cell_id, e)))

    done = 0
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {executor.submit(guarded, cell): cell for cell in pending}
        for future in as_completed(futures):
            record = future.result()
            if record is None:
                continue
            spec, method, repetition = futures[future]
            cell_id = cell_id_for(spec.instance_id, method, repetition)
            done += 1
            log_info(f"[{done}/{len(pending)}] {cell_id}: 最优 {record.best_objective:.6g}, "
                     f"初始化 {record.fes_init} FEs / 共 {record.fes_total} FEs")

    if failures:
        failures.sort(key=lambda failure: failure[0])
        first = failures[0][1]
        if isinstance(first, XferInitError) and len(failures) == len(pending):
            raise first
        raise XferInitError(f"{len(failures)} 个实验单元失败，首个失败: {failures[0][0]}: {first}",
                            "BENCH_CELL_FAILED", ["查看 logs/error_reports/ 中的错误报告后重新运行 bench 续跑"])

    ordered = []
    for spec, method, repetition in cells:
        record = store.get(cell_id_for(spec.instance_id, method, repetition))
        if record is None:
            raise ValidationError(f"结果存储缺少单元 {cell_id_for(spec.instance_id, method, repetition)}")
        ordered.append(record)
    return ordered
