import json
import logging
import os
from dataclasses import asdict, is_dataclass
from logging import Logger
from types import FunctionType
from typing import Any, Dict

import numpy as np


def get_logger(
    out_directory: str | None = None,
    level: int = logging.INFO,
    ) -> Logger:
    """
    Configure the GOALSTEP logger. If an output directory is given, messages are written to
    `out_directory/info.log`.
    
    Parameters
    ----------
    out_directory : str | None, optional
        The directory for the log file, by default None (no file handler).
    level : int, optional
        The logging level, by default `logging.INFO`.
    
    Returns
    -------
    Logger
        The configured logger.
    """
    
    logger = logging.getLogger('GOALSTEP')
    logger.setLevel(level)
    
    # clear existing handlers
    if logger.hasHandlers():
        logger.handlers.clear()
    
    if out_directory is not None:
        if not os.path.isdir(out_directory):
            os.makedirs(out_directory, exist_ok=True)
        
        file_handler = logging.FileHandler(os.path.join(out_directory, 'info.log'))
        file_handler.setLevel(level)
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    else:
        logger.addHandler(logging.NullHandler())
    
    return logger


def close_logger(logger: Logger) -> None:
    """
    Flush and detach all handlers of a logger (releases the log file).
    """
    
    for handler in list(logger.handlers):
        handler.flush()
        handler.close()
        logger.removeHandler(handler)


def recursive_log(param: Any, depth: int = 0, max_depth: int = 5) -> Any:
    """
    Recursively convert a parameter into a JSON-serialisable structure.
    
    Parameters
    ----------
    param : Any
        The parameter to log.
    depth : int, optional
        The parameter depth, by default 0.
    max_depth : int, optional
        The maximum parameter depth, by default 5. This prevents infinite recursion.
    
    Returns
    -------
    Any
        The logged parameter.
    """
    
    if depth > max_depth:
        return f"<Max depth ({max_depth}) reached>"
    
    if isinstance(param, FunctionType):
        return param.__name__
    if isinstance(param, (bool, np.bool_)):
        return bool(param)
    if isinstance(param, (np.integer, np.floating)):
        return param.item()
    if isinstance(param, (int, float, str, type(None))):
        return param
    if isinstance(param, np.ndarray):
        return recursive_log(param.tolist(), depth + 1, max_depth)
    if isinstance(param, (list, tuple, set)):
        return [recursive_log(item, depth + 1, max_depth) for item in param]
    if isinstance(param, dict):
        return {str(key): recursive_log(value, depth + 1, max_depth) for key, value in param.items()}
    if is_dataclass(param) and not isinstance(param, type):
        return recursive_log(asdict(param), depth + 1, max_depth)
    if hasattr(param, '__dict__'):
        return {key: recursive_log(value, depth + 1, max_depth) for key, value in vars(param).items()}
    return str(param)


def log_parameters(
    params: Dict[str, Any],
    out_directory: str,
    file_name: str = 'experiment_parameters.json',
    ) -> str:
    """
    Write experiment parameters to `out_directory/file_name` as sorted JSON.
    
    Parameters
    ----------
    params : Dict[str, Any]
        The parameters.
    out_directory : str
        The output directory.
    file_name : str, optional
        The file name, by default 'experiment_parameters.json'.
    
    Returns
    -------
    str
        The path of the written file.
    """
    
    params = dict(sorted(recursive_log(params, max_depth=5).items()))
    
    if not os.path.isdir(out_directory):
        os.makedirs(out_directory, exist_ok=True)
    
    path = os.path.join(out_directory, file_name)
    with open(path, 'w') as file:
        json.dump(params, file, indent=4)
    
    return path
