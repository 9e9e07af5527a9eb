#!/usr/bin/env python3
"""
参考外部评估器：目标值为比特串中 1 的个数
实现 stdio 行协议 HELLO / EVAL / BYE，用作外部评估实例的测试基准
"""
import sys


def reply(text: str) -> None:
    sys.stdout.write(text + "\n")
    sys.stdout.flush()


def main() -> int:
    dim = None
    for raw in sys.stdin:
        line = raw.strip()
        if not line:
            continue
        verb, _, arg = line.partition(" ")
        if verb == "HELLO":
            dim = int(arg)
            reply("READY")
        elif verb == "EVAL":
            if dim is None:
                reply("ERR 未握手")
            elif len(arg) != dim or set(arg) - {"0", "1"}:
                reply(f"ERR 非法解: 需要 {dim} 位比特串")
            else:
                reply(f"OK {arg.count('1')}")
        elif verb == "BYE":
            return 0
        else:
            reply(f"ERR 未知命令 {verb}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
