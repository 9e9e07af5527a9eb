"""
外部评估器客户端
通过 stdio 行协议与黑盒评估子进程通信：
    HELLO <dim>  ->  READY
    EVAL <bits>  ->  OK <float> | ERR <message>
    BYE
"""
import atexit
import math
import os
import queue
import subprocess
import sys
import threading
from typing import Dict, Optional, Tuple

import numpy as np

from models.problem_model import ProblemClass, ProblemInstance, to_bitstring
from utils.exceptions import EvaluationError, EvaluatorTimeoutError, ValidationError
from utils.logger import log_debug, log_info, log_warning

_EOF = object()


class ExternalEvaluatorClient:
    """单个评估子进程的客户端；同一进程上的请求串行化"""

    def __init__(self, command, dim: int, env: Optional[Dict[str, str]] = None, timeout: float = 30.0):
        self.command = [str(c) for c in command]
        self.dim = int(dim)
        self.env = dict(env or {})
        self.timeout = float(timeout)
        self.process: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue" = queue.Queue()
        self._lock = threading.Lock()
        self._reader: Optional[threading.Thread] = None

    @property
    def command_text(self) -> str:
        return " ".join(self.command)

    def start(self) -> None:
        """启动子进程并完成握手"""
        env = os.environ.copy()
        env.update(self.env)
        creationflags = subprocess.CREATE_NO_WINDOW if sys.platform == "win32" else 0
        try:
            self.process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                universal_newlines=True,
                encoding="utf-8",
                env=env,
                creationflags=creationflags,
                bufsize=1  # 行缓冲
            )
        except OSError as e:
            raise EvaluationError(f"无法启动外部评估器: {e}", command=self.command_text,
                                  suggestions=["检查 external_instances 中的命令路径"])

        # 读取线程把输出逐行放入队列，主线程按超时等待
        self._reader = threading.Thread(target=self._read_stdout, daemon=True)
        self._reader.start()

        reply = self._request(f"HELLO {self.dim}")
        if reply != "READY":
            self.close()
            raise EvaluationError(f"握手失败，期望 READY，收到 {reply!r}", command=self.command_text)
        log_info(f"外部评估器已就绪: {self.command_text} (d={self.dim})")

    def _read_stdout(self) -> None:
        stream = self.process.stdout
        for line in iter(stream.readline, ""):
            self._lines.put(line.rstrip("\r\n"))
        self._lines.put(_EOF)

    def _request(self, line: str) -> str:
        if self.process is None:
            raise EvaluationError("外部评估器尚未启动", command=self.command_text)
        try:
            self.process.stdin.write(line + "\n")
            self.process.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as e:
            raise EvaluationError(f"向外部评估器写入失败: {e} (退出码 {self.process.poll()})",
                                  command=self.command_text)
        try:
            reply = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self._kill()
            raise EvaluatorTimeoutError(f"外部评估器 {self.timeout} 秒内无响应", command=self.command_text,
                                        timeout=self.timeout)
        if reply is _EOF:
            code = self.process.wait(timeout=self.timeout)
            raise EvaluationError(f"外部评估器意外退出，退出码 {code}", command=self.command_text)
        return reply.strip()

    def evaluate(self, solution) -> float:
        """发送一次 EVAL 请求并解析返回值"""
        bits = np.asarray(solution)
        if bits.shape != (self.dim,):
            raise ValidationError(f"解长度 {bits.shape} 与评估器维度 {self.dim} 不一致", field="solution")
        with self._lock:
            reply = self._request(f"EVAL {to_bitstring(bits)}")
        return parse_reply(reply, self.command_text)

    def _kill(self) -> None:
        if self.process and self.process.poll() is None:
            self.process.kill()

    def close(self) -> None:
        """发送 BYE 并等待子进程退出"""
        if self.process is None:
            return
        with self._lock:
            if self.process.poll() is None:
                try:
                    self.process.stdin.write("BYE\n")
                    self.process.stdin.flush()
                    self.process.wait(timeout=self.timeout)
                except (BrokenPipeError, OSError, ValueError, subprocess.TimeoutExpired):
                    log_warning(f"外部评估器未正常退出，强制结束: {self.command_text}")
                    self._kill()
            for stream in (self.process.stdin, self.process.stdout):
                try:
                    stream.close()
                except (OSError, ValueError):
                    pass
            self.process = None
        log_debug(f"外部评估器已关闭: {self.command_text}")

    def __enter__(self) -> 'ExternalEvaluatorClient':
        self.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


def parse_reply(reply: str, command: str = None) -> float:
    """解析 OK <float> / ERR <message>"""
    head, _, rest = reply.partition(" ")
    if head == "OK":
        try:
            value = float(rest)
        except ValueError:
            raise EvaluationError(f"响应格式错误: {reply!r}", command=command)
        if not math.isfinite(value):
            raise EvaluationError(f"外部评估器返回非有限值: {reply!r}", command=command)
        return value
    if head == "ERR":
        raise EvaluationError(rest or "外部评估器报告错误", command=command, error_code="EVALUATOR_ERR")
    raise EvaluationError(f"响应格式错误: {reply!r}", command=command)


_clients: Dict[Tuple, ExternalEvaluatorClient] = {}
_clients_lock = threading.Lock()


def get_client(instance: ProblemInstance) -> ExternalEvaluatorClient:
    """按实例参数复用评估子进程"""
    params = instance.params
    key = (params.command, params.env, instance.dim)
    with _clients_lock:
        client = _clients.get(key)
        if client is None or client.process is None:
            client = ExternalEvaluatorClient(params.command, instance.dim, dict(params.env), params.timeout)
            client.start()
            _clients[key] = client
        return client


def close_all_clients() -> None:
    with _clients_lock:
        for client in _clients.values():
            client.close()
        _clients.clear()


atexit.register(close_all_clients)


def external_evaluate(instance: ProblemInstance, solution) -> float:
    """通过外部评估器计算目标值"""
    if instance.class_tag != ProblemClass.EXTERNAL:
        raise ValidationError(f"{instance.instance_id} 不是外部评估实例", field="class_tag")
    client = get_client(instance)
    try:
        return client.evaluate(solution)
    except EvaluatorTimeoutError:
        # 超时后子进程已被结束，下次调用重新启动
        client.close()
        raise
