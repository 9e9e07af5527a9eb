"""
主控制器
命令行子命令：gen / build-repo / train-gating / init / run / bench / report
"""
import argparse
import dataclasses
import json
import os
from typing import Dict, List, Optional, Sequence, Tuple

from config.app_config import AppConfig
from models.experience_model import ExperienceRepository, GatingModel
from models.experiment_model import MethodSpec
from models.population_model import BudgetMeter
from models.problem_model import ProblemClass, ProblemInstance
from services.bench_service import build_instances, load_plan, run_experiment
from services.gating_trainer import load_gating, prepare_training_instances, save_gating, train_gating
from services.instance_codec import read_instance_file, write_instance_file
from services.problem_service import generate_instance
from services.report_service import REPORT_FORMATS, check_acceptance, emit_report, format_acceptance
from services.repository_service import build_repository, load_repository, save_repository
from services.run_service import RunContext, run_single
from services.transfer_service import ABLATION_VARIANTS, mpi_initialize, population_lines
from utils.exceptions import ConfigurationError
from utils.logger import Logger, log_info
from utils.result_store import ResultStore
from utils.seeding import derive_rng

EXIT_OK = 0
EXIT_ACCEPTANCE_FAILED = 1
EXIT_ERROR = 2


class MainController:
    """主控制器类：把配置与各服务连接到子命令"""

    def __init__(self, config: AppConfig):
        self.config = config

    # 公共辅助
    def resolve_instance(self, source: str) -> ProblemInstance:
        """实例来源：XFI1 实例文件，或 "CLASS:dim:seed" / "EXTERNAL:name" 描述"""
        if os.path.exists(source):
            return read_instance_file(source)
        parts = source.split(":")
        if parts[0].upper() == ProblemClass.EXTERNAL.value and len(parts) == 2:
            return self.config.external_instance(parts[1])
        if len(parts) not in (2, 3):
            raise ConfigurationError(f"无法识别的实例: {source}", field="instance",
                                     suggestions=["传入实例文件路径，或使用 KP:30:1 / EXTERNAL:<name> 形式"])
        seed = int(parts[2]) if len(parts) == 3 else 0
        return generate_instance(parts[0], int(parts[1]), seed, self.config.generation_options())

    def grid_instances(self, classes: Sequence[str], dims: Sequence[int],
                       seeds: Sequence[int]) -> List[ProblemInstance]:
        options = self.config.generation_options()
        return [generate_instance(c, d, s, options) for c in classes for d in dims for s in seeds]

    def external_dims(self) -> Dict[str, int]:
        declared = self.config.get("external_instances", {}) or {}
        return {name: int(entry.get("dim", 0)) for name, entry in declared.items()}

    def load_artifacts(self, repository_path: Optional[str],
                       gating_paths: Dict[str, str]) -> Tuple[Optional[ExperienceRepository], Dict[str, GatingModel]]:
        repository = load_repository(repository_path) if repository_path else None
        gating = {name: load_gating(path, repository) for name, path in gating_paths.items() if path}
        return repository, gating

    def run_context(self, repository, gating, mpi_overrides: Dict = None) -> RunContext:
        mpi = self.config.mpi_config()
        if mpi_overrides:
            mpi = dataclasses.replace(mpi, **{k: v for k, v in mpi_overrides.items() if v is not None})
        return RunContext(repository, gating, mpi, self.config.finetune_config(), self.config.ga_elite_config(),
                          self.config.brkga_config(), self.config.svmss_config())

    # 子命令
    def cmd_gen(self, args) -> int:
        os.makedirs(args.out, exist_ok=True)
        for instance in self.grid_instances(args.classes, args.dims, args.seeds):
            path = write_instance_file(instance, os.path.join(args.out, f"{instance.instance_id}.xfi"))
            print(path)
        return EXIT_OK

    def cmd_build_repo(self, args) -> int:
        instances = [self.resolve_instance(s) for s in args.instances] if args.instances else \
            self.grid_instances(args.classes, args.dims, args.seeds)
        m = args.m or self.config.m_per_instance()
        repository = build_repository(instances, m, self.config.train_config(args.seed), args.seed,
                                      self.config.workers())
        save_repository(repository, args.out)
        print(f"{args.out}  n={repository.n}  fingerprint={repository.fingerprint}")
        return EXIT_OK

    def cmd_train_gating(self, args) -> int:
        profile = args.profile if args.profile is not None else self.config.get("gating.profile")
        if profile:
            self.config.apply_profile(profile)
        repository = load_repository(args.repository)
        instances = [self.resolve_instance(s) for s in args.instances] if args.instances else \
            self.grid_instances(args.classes, args.dims, args.seeds)
        training = prepare_training_instances(instances, int(self.config.get("gating.normalization_samples")),
                                              args.seed)
        variant = args.variant or self.config.gating_variant()
        model = train_gating(repository, training, variant, self.config.pgpe_config(), self.config.mpi_config(),
                             self.config.finetune_config(args.seed), args.seed,
                             int(self.config.get("gating.hidden_factor", 2)))
        save_gating(model, args.out)
        print(f"{args.out}  variant={variant}  best={model.best_value:.6g}")
        return EXIT_OK

    def cmd_init(self, args) -> int:
        instance = self.resolve_instance(args.instance)
        repository, gating = self.load_artifacts(args.repository, {"": args.gating})
        context = self.run_context(repository, gating,
                                   {"e": args.e, "k": args.k, "q": args.q, "q_m": args.q_m, "p": args.p})
        variant = None if args.variant == "MPI" else args.variant
        meter = BudgetMeter(context.mpi.planned_fes)
        result = mpi_initialize(instance, repository, gating.get(""), context.mpi, meter,
                                derive_rng("init", args.seed), context.finetune, variant)
        lines, tags = population_lines(result)
        self._write_lines(args.out, lines)
        self._write_lines(args.out + ".provenance", tags)
        print(f"{args.out}  FEs={result.fes_consumed}  selected={result.selected}")
        return EXIT_OK

    def cmd_run(self, args) -> int:
        instance = self.resolve_instance(args.instance)
        repository, gating = self.load_artifacts(args.repository, {"": args.gating})
        context = self.run_context(repository, gating)
        record = run_single(instance, MethodSpec(args.initializer, args.optimizer), args.budget, args.seed, context)
        text = json.dumps(record.to_dict(), ensure_ascii=False, indent=2)
        if args.out:
            self._write_lines(args.out, [text])
        print(text if not args.out else f"{args.out}  best={record.best_objective:.6g}")
        return EXIT_OK

    def cmd_bench(self, args) -> int:
        plan = load_plan(args.plan, self.external_dims())
        repository, gating = self.load_artifacts(plan.repository, plan.gating)
        context = self.run_context(repository, gating)
        instances = build_instances(plan, self.config.generation_options(), self.config.external_instance)
        store = ResultStore(args.results or plan.results)
        records = run_experiment(plan, context, instances, store, args.workers or self.config.workers())
        if args.report_dir:
            emit_report(records, plan, args.report_dir)
        return self._acceptance_exit(records, plan)

    def cmd_report(self, args) -> int:
        plan = load_plan(args.plan, self.external_dims())
        store = ResultStore(args.results or plan.results)
        records = store.records()
        for path in emit_report(records, plan, args.out, args.format or REPORT_FORMATS, args.baseline):
            print(path)
        return self._acceptance_exit(records, plan) if args.check else EXIT_OK

    def _acceptance_exit(self, records, plan) -> int:
        if not plan.acceptance:
            return EXIT_OK
        outcomes = check_acceptance(records, plan)
        print(format_acceptance(outcomes))
        return EXIT_OK if all(o.passed for o in outcomes) else EXIT_ACCEPTANCE_FAILED

    @staticmethod
    def _write_lines(path: str, lines: Sequence[str]) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")


def _add_grid(parser: argparse.ArgumentParser, default_classes: Sequence[str]) -> None:
    parser.add_argument("--classes", nargs="+", default=list(default_classes), help="问题类别")
    parser.add_argument("--dims", nargs="+", type=int, default=[20, 25, 30], help="维度")
    parser.add_argument("--seeds", nargs="+", type=int, default=[0], help="实例种子")
    parser.add_argument("--instances", nargs="*", default=None, help="实例文件或 CLASS:dim:seed，覆盖网格")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xferinit", description="基于经验迁移的二进制优化初始种群生成")
    parser.add_argument("--config", default="config.json", help="配置文件路径")
    parser.add_argument("--profile", dest="global_profile", default=None, help="叠加的配置方案")
    parser.add_argument("--log-level", default=None, help="控制台日志级别")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="生成实例文件")
    _add_grid(gen, ["OM", "KP", "MC"])
    gen.add_argument("--out", required=True, help="输出目录")

    repo = sub.add_parser("build-repo", help="离线构建经验库")
    _add_grid(repo, ["OM", "KP", "MC"])
    repo.add_argument("--m", type=int, default=None, help="每个实例的样本数")
    repo.add_argument("--seed", type=int, default=0)
    repo.add_argument("--out", required=True, help="经验库目录")

    gating = sub.add_parser("train-gating", help="用 PGPE 训练门控网络")
    _add_grid(gating, ["OM", "KP", "MC"])
    gating.add_argument("--repository", required=True)
    gating.add_argument("--variant", choices=["Max", "Mean", "MaxDiv", "MeanDiv"], default=None)
    gating.add_argument("--profile", default=None, help="门控训练期间叠加的配置方案（空字符串表示不叠加）")
    gating.add_argument("--seed", type=int, default=0)
    gating.add_argument("--out", required=True, help="门控权重文件")

    init = sub.add_parser("init", help="为单个实例生成初始种群")
    init.add_argument("--instance", required=True)
    init.add_argument("--repository", required=True)
    init.add_argument("--gating", default=None)
    init.add_argument("-e", type=int, default=None)
    init.add_argument("-k", type=int, default=None)
    init.add_argument("-q", type=int, default=None)
    init.add_argument("--q-m", dest="q_m", type=int, default=None)
    init.add_argument("-p", type=int, default=None)
    init.add_argument("--seed", type=int, default=0)
    init.add_argument("--variant", choices=["MPI", *ABLATION_VARIANTS], default="MPI")
    init.add_argument("--out", required=True, help="种群文本文件")

    run = sub.add_parser("run", help="单次 初始化 + 搜索 运行")
    run.add_argument("--instance", required=True)
    run.add_argument("--initializer", default="mpi")
    run.add_argument("--optimizer", choices=["ga-elite", "brkga"], default="ga-elite")
    run.add_argument("--budget", type=int, default=800)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--repository", default=None)
    run.add_argument("--gating", default=None)
    run.add_argument("--out", default=None)

    bench = sub.add_parser("bench", help="按实验计划批量运行")
    bench.add_argument("plan")
    bench.add_argument("--results", default=None, help="覆盖计划中的结果文件")
    bench.add_argument("--workers", type=int, default=None)
    bench.add_argument("--report-dir", default=None)

    report = sub.add_parser("report", help="从结果存储生成报告")
    report.add_argument("plan")
    report.add_argument("--results", default=None)
    report.add_argument("--format", nargs="+", choices=list(REPORT_FORMATS), default=None)
    report.add_argument("--baseline", default="rand")
    report.add_argument("--out", default="reports")
    report.add_argument("--check", action="store_true", help="验收门限未通过时以非零状态退出")
    return parser


COMMANDS = {
    "gen": MainController.cmd_gen,
    "build-repo": MainController.cmd_build_repo,
    "train-gating": MainController.cmd_train_gating,
    "init": MainController.cmd_init,
    "run": MainController.cmd_run,
    "bench": MainController.cmd_bench,
    "report": MainController.cmd_report,
}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """解析命令行并执行子命令"""
    args = build_parser().parse_args(argv)
    config = AppConfig(args.config)
    if args.global_profile:
        config.apply_profile(args.global_profile)
    Logger().set_console_level(args.log_level or config.get("log_level", "INFO"))
    log_info(f"{AppConfig.APP_NAME} {AppConfig.APP_VERSION}: {args.command}")
    return COMMANDS[args.command](MainController(config), args)
