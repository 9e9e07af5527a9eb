"""
工具模块：日志与错误报告、异常体系、种子派生、二进制权重格式、结果存储
"""
