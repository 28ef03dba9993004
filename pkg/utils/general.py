import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from tqdm import tqdm

from config import Config
from utils.logger_config import LOGGER

def colorstr(*input):
    # Colors a string https://en.wikipedia.org/wiki/ANSI_escape_code, i.e.  colorstr('blue', 'hello world')
    *args, string = input if len(input) > 1 else ('blue', 'bold', input[0])  # color arguments, string
    colors = {
        'red': '\033[31m',
        'green': '\033[32m',
        'yellow': '\033[33m',
        'blue': '\033[34m',
        'cyan': '\033[36m',
        'end': '\033[0m',  # misc
        'bold': '\033[1m',
        'underline': '\033[4m'}
    return ''.join(colors[x] for x in args) + f'{string}' + colors['end']


def relpath(path, start):
    # POSIX-style path of `path` relative to `start`, stable across machines
    return Path(os.path.relpath(Path(path).resolve(), Path(start).resolve())).as_posix()


def write_text(path, text):
    # Write UTF-8 text with '\n' line endings on every platform
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)
    return path


def parallel_map(fn, items, jobs=None, desc=None):
    # Apply fn to every item on a bounded thread pool; results keep input order
    items = list(items)
    jobs = max(1, min(jobs or Config.JOBS, len(items) or 1))
    disable = desc is None or not LOGGER.isEnabledFor(logging.DEBUG)
    if jobs == 1:
        return [fn(x) for x in tqdm(items, desc=desc, disable=disable)]
    LOGGER.debug(f"Dispatching {len(items)} tasks to {jobs} workers")
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=disable))
