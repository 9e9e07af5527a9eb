"""
结果存储
只追加的 JSON Lines 文件，按单元 id 建立内存索引，支持中断后续跑
"""
import json
import os
import threading
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

from models.experiment_model import RunRecord
from utils.exceptions import PayloadError
from utils.logger import log_debug, log_warning


class ResultStore:
    """运行记录存储（写入串行化）"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._index: Dict[str, RunRecord] = OrderedDict()
        self._load_index()

    def _load_index(self) -> None:
        """加载已有记录；末尾被截断的一行视为未完成的单元"""
        if not self.path.exists():
            return
        with open(self.path, 'r', encoding='utf-8') as f:
            lines = f.read().split("\n")
        for number, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                record = RunRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, TypeError) as e:
                if number >= len(lines) - 1:
                    log_warning(f"忽略结果文件末尾不完整的记录: {self.path}:{number}")
                    continue
                raise PayloadError(f"结果文件第 {number} 行损坏: {e}", path=str(self.path))
            self._index[record.cell_id] = record
        log_debug(f"结果存储已加载 {len(self._index)} 条记录: {self.path}")

    def __contains__(self, cell_id: str) -> bool:
        with self._lock:
            return cell_id in self._index

    def __len__(self) -> int:
        with self._lock:
            return len(self._index)

    def get(self, cell_id: str) -> Optional[RunRecord]:
        with self._lock:
            return self._index.get(cell_id)

    def append(self, record: RunRecord) -> bool:
        """追加一条记录；同一单元已存在时跳过并返回 False"""
        line = json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True)
        with self._lock:
            if record.cell_id in self._index:
                return False
            self._repair_tail()
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(line + "\n")
                f.flush()
                os.fsync(f.fileno())
            self._index[record.cell_id] = record
            return True

    def _repair_tail(self) -> None:
        # 上次中断可能留下没有换行的半行
        if not self.path.exists() or self.path.stat().st_size == 0:
            return
        with open(self.path, 'rb+') as f:
            f.seek(-1, os.SEEK_END)
            if f.read(1) != b"\n":
                f.seek(0)
                content = f.read()
                f.truncate(content.rfind(b"\n") + 1)

    def records(self) -> List[RunRecord]:
        with self._lock:
            return list(self._index.values())

    def __iter__(self) -> Iterator[RunRecord]:
        return iter(self.records())
