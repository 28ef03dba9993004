import glob
import os
import re
from pathlib import Path

from utils.logger_config import LOGGER

# Parameters
IMG_FORMATS = ('png',)  # 8-bit PNG only


def clean_str(s):
    # Cleans a string by replacing special characters with underscore _
    return re.sub(pattern="[|@#!¡·$€%&()=?¿^*;:,¨´><+ ]", repl="_", string=s)


class LoadImages:
    """Sorted PNG files from a directory, glob pattern, file or list; yields (image_id, path)"""

    def __init__(self, path):
        files = []
        for p in sorted(path) if isinstance(path, (list, tuple)) else [path]:
            p = str(Path(p).resolve())
            if '*' in p:
                files.extend(sorted(glob.glob(p, recursive=True)))  # glob
            elif os.path.isdir(p):
                files.extend(sorted(glob.glob(os.path.join(p, '*.*'))))  # dir
            elif os.path.isfile(p):
                files.append(p)  # files
            else:
                raise FileNotFoundError(f'{p} does not exist')

        self.files = [x for x in files if x.split('.')[-1].lower() in IMG_FORMATS]
        self.nf = len(self.files)  # number of files
        if self.nf == 0:
            LOGGER.warning(f'No images found in {path}. Supported formats are: {IMG_FORMATS}')

        self.ids = [clean_str(Path(f).stem) for f in self.files]
        if len(set(self.ids)) != len(self.ids):
            raise ValueError(f'Duplicate image ids in {path}; file stems must be unique')

    def __iter__(self):
        self.count = 0
        return self

    def __next__(self):
        if self.count == self.nf:
            raise StopIteration
        item = self.ids[self.count], Path(self.files[self.count])
        self.count += 1
        return item

    def by_id(self):
        return dict(zip(self.ids, (Path(f) for f in self.files)))

    def __len__(self):
        return self.nf  # number of files


def read_id_list(path):
    # One id per line; blank lines and '#' comments skipped
    ids = []
    with open(path, encoding='utf-8') as f:
        for line in f:
            line = line.split('#', 1)[0].strip()
            if line:
                ids.append(line)
    return ids
