"""
Binary field dumps and CSV time series.

Dump layout (little-endian): magic "BMOD1", u32 header (model id, N, dim,
nx, ny), f64 time, f64 mu, f64 eps, then N component arrays in row-major
f64. Modulation states use model id + 10 and store complex amplitudes as
(real, imag) component pairs.
"""
import logging
import os
from dataclasses import dataclass

import numpy as np

from .models import MODULATION_DUMP_OFFSET

MAGIC = b"BMOD1"
HEADER_DTYPE = np.dtype("<u4")
VALUE_DTYPE = np.dtype("<f8")
CSV_FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class DumpHeader:
    model_id: int
    n_components: int
    dimension: int
    nx: int
    ny: int
    time: float
    mu: float
    eps: float

    @property
    def shape(self):
        return (self.n_components, self.ny, self.nx) if self.ny > 1 else (self.n_components, self.nx)


def _grid_extent(components):
    spatial = components.shape[1:]
    if len(spatial) == 1:
        return spatial[0], 1
    return spatial[1], spatial[0]


def write_dump(path, model_id, components, time, mu, eps, dimension=1):
    components = np.asarray(components)
    if np.iscomplexobj(components):
        components = np.stack([components.real, components.imag], axis=1).reshape(
            (-1,) + components.shape[1:]
        )
    nx, ny = _grid_extent(components)
    header = np.array([model_id, components.shape[0], dimension, nx, ny], dtype=HEADER_DTYPE)
    values = np.array([time, mu, eps], dtype=VALUE_DTYPE)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(header.tobytes())
        f.write(values.tobytes())
        f.write(np.ascontiguousarray(components, dtype=VALUE_DTYPE).tobytes())
    logging.debug(f"Wrote dump {path} (model id {model_id}, {components.shape[0]} components)")
    return path


def write_field_dump(path, model, state):
    """Dumps a physical FieldState."""
    return write_dump(path, model.dump_id, state.components, state.time, state.mu, state.eps, state.grid.dimension)


def read_dump(path):
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path} is not a BMOD1 dump")
    offset = len(MAGIC)
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=5, offset=offset)
    offset += 5 * HEADER_DTYPE.itemsize
    time, mu, eps = np.frombuffer(data, dtype=VALUE_DTYPE, count=3, offset=offset)
    offset += 3 * VALUE_DTYPE.itemsize
    info = DumpHeader(*(int(v) for v in header), float(time), float(mu), float(eps))
    components = np.frombuffer(data, dtype=VALUE_DTYPE, offset=offset).reshape(info.shape)
    return info, components.copy()


def write_csv(path, frame):
    """Writes a DataFrame with full float precision and no index, byte-stable across reruns."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logging.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def write_modulation_dump(path, state):
    """Dumps a ModulationState; time is tbar and (mu, eps) are the global parameters when a chart is set."""
    mu, eps = (state.slow.mu_bar(state.tbar), 0.0) if state.chart is None else state.slow.global_params(state.tbar)
    return write_dump(path, state.model.dump_id + MODULATION_DUMP_OFFSET, state.amplitudes, state.tbar, mu, eps,
                      state.grid.dimension)
