"""
Снимки состояний в HDF5: заголовок {kind, n, t, L, dims} и по датасету на поле
"""
import json
import logging
from dataclasses import fields
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import h5py
import numpy as np

from frame import FrameState
from fuchsian import RescaledState

logger = logging.getLogger(__name__)

KINDS = {"frame": FrameState, "rescaled": RescaledState}


def _kind(state) -> str:
    for name, cls in KINDS.items():
        if isinstance(state, cls):
            return name
    raise TypeError(f"Неизвестный тип состояния: {type(state).__name__}")


def write_state(path: Path, state: Union[FrameState, RescaledState], L: float,
                meta: Optional[Dict] = None) -> Path:
    """Запись состояния; массивы сохраняются без сжатия и преобразований"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kind = _kind(state)
    with h5py.File(path, "w") as f:
        f.attrs["kind"] = kind
        f.attrs["n"] = state.n
        f.attrs["t"] = state.t
        f.attrs["L"] = L
        f.attrs["dims"] = np.asarray(state.grid_shape, dtype=np.int64)
        f.attrs["meta"] = json.dumps(meta or {}, ensure_ascii=False, sort_keys=True)
        for fld in fields(state):
            if fld.name == "t":
                continue
            f.create_dataset(fld.name, data=np.asarray(getattr(state, fld.name)))
    logger.debug(f"Снимок {kind} t={state.t:.6e} записан: {path}")
    return path


def read_state(path: Path) -> Tuple[Union[FrameState, RescaledState], Dict]:
    """Чтение состояния и заголовка"""
    with h5py.File(Path(path), "r") as f:
        kind = str(f.attrs["kind"])
        cls = KINDS[kind]
        values = {fld.name: np.array(f[fld.name]) for fld in fields(cls) if fld.name != "t"}
        header = {
            "kind": kind,
            "n": int(f.attrs["n"]),
            "t": float(f.attrs["t"]),
            "L": float(f.attrs["L"]),
            "dims": [int(v) for v in f.attrs["dims"]],
            "meta": json.loads(str(f.attrs["meta"])),
        }
    return cls(t=header["t"], **values), header
