"""
控制器层：命令行子命令到各服务的连接
"""
