"""
自定义异常类和全局异常处理器
"""
import sys
import traceback
import logging
from typing import Optional, Dict, Any, List, Callable


class XferInitError(Exception):
    """XferInit 基础异常类"""

    def __init__(self, message: str, error_code: str = None, suggestions: List[str] = None):
        super().__init__(message)
        self.error_code = error_code or "UNKNOWN_ERROR"
        self.suggestions = suggestions or []


class ConfigurationError(XferInitError):
    """配置错误异常"""

    def __init__(self, message: str, field: str = None, suggestions: List[str] = None):
        super().__init__(message, "CONFIG_ERROR", suggestions)
        self.field = field


class ValidationError(XferInitError):
    """前置条件/参数校验错误"""

    def __init__(self, message: str, field: str = None, suggestions: List[str] = None):
        super().__init__(message, "VALIDATION_ERROR", suggestions)
        self.field = field


class UnsupportedProblemError(XferInitError):
    """不支持的问题类别"""

    def __init__(self, message: str, class_tag: str = None, suggestions: List[str] = None):
        super().__init__(message, "UNSUPPORTED_PROBLEM", suggestions)
        self.class_tag = class_tag


class EvaluationError(XferInitError):
    """目标函数评估错误（主要来自外部评估器）"""

    def __init__(self, message: str, command: str = None, suggestions: List[str] = None,
                 error_code: str = "EVALUATION_ERROR"):
        super().__init__(message, error_code, suggestions)
        self.command = command


class EvaluatorTimeoutError(EvaluationError):
    """外部评估器响应超时"""

    def __init__(self, message: str, command: str = None, timeout: float = None):
        super().__init__(message, command, [
            "检查评估器进程是否卡死",
            "在 config.json 中调大 problems.external_timeout",
        ], error_code="EVALUATOR_TIMEOUT")
        self.timeout = timeout


class BudgetExhaustedError(XferInitError):
    """函数评估预算耗尽"""

    def __init__(self, message: str, limit: int = None, used: int = None):
        super().__init__(message, "BUDGET_EXHAUSTED", ["增大评估预算或减小初始化参数 e/k/q/q_m"])
        self.limit = limit
        self.used = used


class PayloadError(XferInitError):
    """二进制文件损坏或被截断"""

    def __init__(self, message: str, path: str = None, suggestions: List[str] = None):
        super().__init__(message, "PAYLOAD_ERROR", suggestions)
        self.path = path


class FormatVersionError(PayloadError):
    """二进制格式版本不匹配"""

    def __init__(self, message: str, expected: int = None, found: int = None):
        super().__init__(message, suggestions=["使用当前版本重新生成该文件"])
        self.error_code = "FORMAT_VERSION_ERROR"
        self.expected = expected
        self.found = found


class RepositoryError(XferInitError):
    """经验库读写错误"""

    def __init__(self, message: str, record: str = None, suggestions: List[str] = None):
        super().__init__(message, "REPOSITORY_ERROR", suggestions)
        self.record = record


class TrainingDivergenceError(XferInitError):
    """训练损失出现非有限值"""

    def __init__(self, message: str, instance_id: str = None):
        super().__init__(message, "TRAINING_DIVERGED", ["降低 train.learning_rate 后重试"])
        self.instance_id = instance_id


class FingerprintMismatchError(XferInitError):
    """门控网络与经验库指纹不一致"""

    def __init__(self, message: str, expected: str = None, found: str = None):
        super().__init__(message, "FINGERPRINT_MISMATCH", ["针对当前经验库重新运行 train-gating"])
        self.expected = expected
        self.found = found


class GlobalExceptionHandler:
    """命令行全局异常处理器"""

    def __init__(self):
        self.logger = logging.getLogger("XferInit")
        self._original_excepthook = sys.excepthook
        sys.excepthook = self.handle_exception

    def handle_exception(self, exc_type, exc_value, exc_traceback):
        """处理未捕获的异常"""
        if issubclass(exc_type, KeyboardInterrupt):
            self._original_excepthook(exc_type, exc_value, exc_traceback)
            return

        error_msg = ''.join(traceback.format_exception(exc_type, exc_value, exc_traceback))
        self.logger.error(f"未处理的异常: {exc_type.__name__}\n{error_msg}")

        from utils.logger import report_error
        report_id = report_error(exc_type.__name__, str(exc_value), stack_trace=error_msg)

        print(format_error(exc_value), file=sys.stderr)
        print(f"错误报告: {report_id}", file=sys.stderr)

    def restore_original_excepthook(self):
        """恢复原始的异常处理"""
        sys.excepthook = self._original_excepthook


_global_exception_handler: Optional[GlobalExceptionHandler] = None


def setup_global_exception_handler() -> GlobalExceptionHandler:
    """设置全局异常处理器"""
    global _global_exception_handler
    if _global_exception_handler is None:
        _global_exception_handler = GlobalExceptionHandler()
    return _global_exception_handler


def format_error(exc: BaseException) -> str:
    """把异常格式化为带建议的用户提示"""
    if isinstance(exc, XferInitError):
        text = f"[{exc.error_code}] {exc}"
        if exc.suggestions:
            text += "\n建议的解决方案：\n"
            text += "\n".join(f"{i}. {s}" for i, s in enumerate(exc.suggestions, 1))
        return text
    return f"{type(exc).__name__}: {exc}"


def safe_execute(func: Callable, *args, error_message: str = "操作失败",
                 context: Dict[str, Any] = None, on_error: Callable[[Exception], None] = None, **kwargs):
    """安全执行函数，失败时记录并生成错误报告，返回 None

    on_error 收到捕获的异常，供调用方汇总失败
    """
    try:
        return func(*args, **kwargs)
    except Exception as e:
        from utils.logger import log_exception, report_error
        report_id = report_error(type(e).__name__, str(e), context, traceback.format_exc())
        log_exception(f"{error_message}: {format_error(e)} (错误报告: {report_id})")
        if on_error is not None:
            on_error(e)
        return None
