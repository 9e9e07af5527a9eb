#!/usr/bin/env python3
"""
XferInit 命令行启动脚本
"""
import os
import sys

# 添加当前目录到 Python 路径
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def main(argv=None) -> int:
    """启动命令行"""
    from controllers.main_controller import EXIT_ERROR, dispatch
    from services.external_evaluator import close_all_clients
    from utils.exceptions import XferInitError, format_error, setup_global_exception_handler
    from utils.logger import log_error, report_error

    setup_global_exception_handler()
    try:
        return dispatch(argv)
    except KeyboardInterrupt:
        print("\n用户中断，程序退出", file=sys.stderr)
        return EXIT_ERROR
    except XferInitError as e:
        report_id = report_error(type(e).__name__, str(e), {"argv": list(argv or sys.argv[1:])})
        log_error(f"{format_error(e)} (错误报告: {report_id})")
        return EXIT_ERROR
    finally:
        close_all_clients()


if __name__ == "__main__":
    sys.exit(main())
