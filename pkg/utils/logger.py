"""
日志系统
控制台 + 按大小轮转的文件日志，以及失败运行的 Markdown 错误报告
"""
import hashlib
import logging
import os
import platform
import sys
from datetime import datetime
from importlib import metadata
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, List, Optional

LOGGER_NAME = "XferInit"
FILE_FORMAT = '%(asctime)s - %(levelname)s - %(threadName)s - %(filename)s:%(lineno)d - %(message)s'
CONSOLE_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
REPORTED_PACKAGES = ("numpy", "scipy", "networkx", "scikit-learn", "psutil")
SENSITIVE_MARKERS = ("PASSWORD", "TOKEN", "KEY", "SECRET")


def _log_dir() -> str:
    return os.environ.get("XFERINIT_LOG_DIR", "logs")


class Logger:
    """进程内唯一的日志管理器"""

    _instance: Optional['Logger'] = None
    _logger: Optional[logging.Logger] = None

    def __new__(cls) -> 'Logger':
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if self._logger is None:
            self._setup_logger()

    def _setup_logger(self) -> None:
        self._logger = logging.getLogger(LOGGER_NAME)
        self._logger.setLevel(logging.DEBUG)
        self._logger.propagate = False

        # 重复初始化时沿用已有处理器
        existing = [h for h in self._logger.handlers if not isinstance(h, RotatingFileHandler)]
        if self._logger.handlers:
            self._console_handler = existing[0] if existing else logging.StreamHandler(sys.stderr)
            return

        log_dir = Path(_log_dir())
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(log_dir / f"xferinit_{datetime.now():%Y%m%d}.log",
                                           maxBytes=10 * 1024 * 1024, backupCount=5, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))

        self._logger.addHandler(file_handler)
        self._logger.addHandler(console_handler)
        self._console_handler = console_handler

    def set_console_level(self, level: str) -> None:
        """调整控制台日志级别（文件日志始终记录 DEBUG）"""
        self._console_handler.setLevel(getattr(logging, str(level).upper(), logging.INFO))

    def log(self, level: int, message: str, exc_info: bool = False) -> None:
        self._logger.log(level, message, exc_info=exc_info, stacklevel=3)


logger = Logger()


def log_debug(message: str) -> None:
    logger.log(logging.DEBUG, message)


def log_info(message: str) -> None:
    logger.log(logging.INFO, message)


def log_warning(message: str) -> None:
    logger.log(logging.WARNING, message)


def log_error(message: str) -> None:
    logger.log(logging.ERROR, message)


def log_exception(message: str) -> None:
    """记录 ERROR 日志并附带当前异常的堆栈"""
    logger.log(logging.ERROR, message, exc_info=True)


def _package_version(name: str) -> str:
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return "未安装"


def _memory_info() -> str:
    try:
        import psutil
    except ImportError:
        return "psutil 未安装"
    memory = psutil.virtual_memory()
    return f"总计 {memory.total // 1024 ** 3}GB, 可用 {memory.available // 1024 ** 3}GB, 使用率 {memory.percent}%"


class ErrorReporter:
    """把失败的单元或命令写成 Markdown 错误报告"""

    def __init__(self, reports_dir: str = None):
        self.error_reports_dir = Path(reports_dir or os.path.join(_log_dir(), "error_reports"))
        self.error_reports_dir.mkdir(parents=True, exist_ok=True)

    def generate_error_report(self, error_type: str, error_message: str,
                              context: Dict[str, Any] = None, stack_trace: str = None) -> str:
        """写出报告并返回报告 id"""
        now = datetime.now()
        digest = hashlib.blake2b(f"{error_type}:{error_message}".encode("utf-8"), digest_size=3).hexdigest()
        report_id = f"error_{now:%Y%m%d_%H%M%S}_{digest}"

        sections = [
            f"# 错误报告 {report_id}",
            "",
            f"- 时间: {now.isoformat()}",
            f"- 错误类型: {error_type}",
            f"- 错误消息: {error_message}",
            "",
            "## 运行上下文",
            *[f"- {key}: {value}" for key, value in (context or {}).items()],
            "",
            "## 运行环境",
            f"- 平台: {platform.platform()}",
            f"- Python: {sys.version.split()[0]}",
            f"- 内存: {_memory_info()}",
            f"- 工作目录: {os.getcwd()}",
            *[f"- {name}: {_package_version(name)}" for name in REPORTED_PACKAGES],
        ]
        if stack_trace:
            sections += ["", "## 堆栈跟踪", "```", stack_trace.rstrip(), "```"]
        sections += ["", "## XFERINIT 环境变量", *self._project_environment()]

        report_file = self.error_reports_dir / f"{report_id}.md"
        try:
            report_file.write_text("\n".join(sections) + "\n", encoding="utf-8")
            log_info(f"错误报告已生成: {report_file}")
        except OSError as e:
            log_error(f"写出错误报告失败: {e}")
        return report_id

    @staticmethod
    def _project_environment() -> List[str]:
        lines = []
        for key, value in sorted(os.environ.items()):
            if not key.startswith("XFERINIT"):
                continue
            if any(marker in key.upper() for marker in SENSITIVE_MARKERS):
                value = "***HIDDEN***"
            lines.append(f"- {key}: {value}")
        return lines

    def list_error_reports(self) -> List[Dict[str, Any]]:
        """按修改时间从新到旧列出报告"""
        reports = [{"filename": path.name, "filepath": str(path),
                    "created": datetime.fromtimestamp(path.stat().st_mtime)}
                   for path in self.error_reports_dir.glob("*.md")]
        return sorted(reports, key=lambda r: (r["created"], r["filename"]), reverse=True)

    def cleanup_old_reports(self, max_reports: int = 50) -> None:
        for report in self.list_error_reports()[max_reports:]:
            try:
                os.remove(report["filepath"])
            except OSError as e:
                log_warning(f"删除旧错误报告失败: {report['filename']}: {e}")


_error_reporter: Optional[ErrorReporter] = None


def get_error_reporter() -> ErrorReporter:
    global _error_reporter
    if _error_reporter is None:
        _error_reporter = ErrorReporter()
        _error_reporter.cleanup_old_reports()
    return _error_reporter


def report_error(error_type: str, error_message: str, context: Dict[str, Any] = None,
                 stack_trace: str = None) -> str:
    """生成错误报告并返回报告 id"""
    return get_error_reporter().generate_error_report(error_type, error_message, context, stack_trace)
