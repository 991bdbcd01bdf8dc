import logging
import sys

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbose=False, stream=None):
    """配置根日志记录器，只在命令行入口调用"""
    level = logging.DEBUG if verbose else logging.INFO
    root = logging.getLogger()
    # 重复调用时只替换自己加过的handler
    for handler in list(root.handlers):
        if getattr(handler, "_lidar_distill", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._lidar_distill = True
    root.addHandler(handler)
    root.setLevel(level)
    return root
