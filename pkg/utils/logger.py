# -*- coding: utf-8 -*-
"""
日志模块

整个实验室共用一棵日志树：根是应用日志记录器 ``halflab``，各模块通过
get_logger 取得它的子记录器。main.py 启动时调用一次 setup_logger
决定输出去向（标准错误流和/或轮转日志文件），子记录器自动继承。
标准输出留给命令的 JSON 结果，因此控制台日志一律写到 stderr。
"""

import datetime
import logging
import os
import sys
from logging.handlers import RotatingFileHandler, TimedRotatingFileHandler

APP_LOGGER_NAME = 'halflab'

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# 已取得的日志记录器（按完整名称）
_loggers = {}


def _qualified(name):
    if name == APP_LOGGER_NAME or name.startswith(APP_LOGGER_NAME + '.'):
        return name
    return f'{APP_LOGGER_NAME}.{name}'


def _drop_handlers(logger):
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()


def _file_handler(log_file, max_bytes, backup_count, when):
    """按大小轮转；max_bytes 为 0 时改为按时间轮转"""
    parent = os.path.dirname(log_file)
    if parent:
        os.makedirs(parent, exist_ok=True)
    if max_bytes > 0:
        return RotatingFileHandler(log_file, maxBytes=max_bytes, backupCount=backup_count, encoding='utf-8')
    return TimedRotatingFileHandler(log_file, when=when, backupCount=backup_count, encoding='utf-8')


def setup_logger(name=APP_LOGGER_NAME, log_file=None, level=logging.INFO, console_output=True,
                 max_bytes=10*1024*1024, backup_count=5, when='midnight'):
    """
    配置日志记录器的输出去向，可重复调用（旧处理器会被替换）

    Args:
        name (str): 日志记录器名称，默认为应用日志记录器
        log_file (str, optional): 日志文件路径，为 None 时不写文件
        level (int, optional): 日志级别
        console_output (bool, optional): 是否写到标准错误流
        max_bytes (int, optional): 单个日志文件上限，为 0 时按时间轮转
        backup_count (int, optional): 保留的轮转文件数
        when (str, optional): 按时间轮转时的周期

    Returns:
        logging.Logger: 配置好的日志记录器
    """
    logger = logging.getLogger(name)
    _drop_handlers(logger)
    logger.setLevel(level)
    logger.propagate = False

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    handlers = []
    if console_output:
        handlers.append(logging.StreamHandler(sys.stderr))
    if log_file:
        handlers.append(_file_handler(log_file, max_bytes, backup_count, when))
    for handler in handlers:
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    _loggers[name] = logger
    return logger


def get_logger(name):
    """
    取得模块日志记录器，名称挂在 ``halflab`` 之下（如 ``halflab.optim``）

    Args:
        name (str): 模块名

    Returns:
        logging.Logger: 日志记录器
    """
    full_name = _qualified(name)
    if full_name not in _loggers:
        _loggers[full_name] = logging.getLogger(full_name)
    return _loggers[full_name]


def default_log_file(log_dir):
    """日志目录下按当天日期命名的日志文件路径"""
    stamp = datetime.datetime.now().strftime('%Y%m%d')
    return os.path.join(log_dir, f'{APP_LOGGER_NAME}_{stamp}.log')
