"""Phase-space functions sampled on a uniform (q, p) grid."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import GridError


@dataclass(frozen=True)
class GridFunction:
    """Samples f(q_i, p_j) on a uniform grid with both end points included.

    ``data[i, j]`` is the value at (q_i, p_j), so rows run along q. Data is
    real for physical functions; products and brackets may produce complex
    intermediate grids.
    """

    q_min: float
    q_max: float
    n_q: int
    p_min: float
    p_max: float
    n_p: int
    data: np.ndarray = field(repr=False)
    hbar: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != (self.n_q, self.n_p):
            raise GridError(f"data shape {data.shape} does not match ({self.n_q}, {self.n_p})")
        if not np.all(np.isfinite(data)):
            raise GridError("grid samples must be finite")
        if self.n_q < 8 or self.n_p < 8 or not (self.q_max > self.q_min and self.p_max > self.p_min):
            raise GridError("grid needs at least 8 points per axis and increasing bounds")
        if self.hbar <= 0:
            raise GridError("hbar must be positive")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    # -- construction
    @classmethod
    def from_function(cls, f, q_range, n_q, p_range=None, n_p=None, hbar=1.0):
        """Sample a vectorised callable f(Q, P) on a grid."""
        p_range = q_range if p_range is None else p_range
        n_p = n_q if n_p is None else n_p
        q = np.linspace(q_range[0], q_range[1], n_q)
        p = np.linspace(p_range[0], p_range[1], n_p)
        Q, P = np.meshgrid(q, p, indexing="ij")
        data = np.broadcast_to(np.asarray(f(Q, P)), Q.shape)
        return cls(q_range[0], q_range[1], n_q, p_range[0], p_range[1], n_p, data, hbar)

    @classmethod
    def symmetric(cls, f, half_width, n, hbar=1.0):
        return cls.from_function(f, (-half_width, half_width), n, hbar=hbar)

    def with_data(self, data) -> "GridFunction":
        return replace(self, data=np.asarray(data))

    # -- geometry
    @property
    def q(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.n_q)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.n_p)

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / (self.n_q - 1)

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / (self.n_p - 1)

    def mesh(self):
        return np.meshgrid(self.q, self.p, indexing="ij")

    def same_grid(self, other) -> bool:
        return (self.n_q, self.n_p) == (other.n_q, other.n_p) and np.allclose(
            [self.q_min, self.q_max, self.p_min, self.p_max, self.hbar],
            [other.q_min, other.q_max, other.p_min, other.p_max, other.hbar],
            rtol=1e-12, atol=0)

    def require_same_grid(self, other):
        if not self.same_grid(other):
            raise GridError("grids differ in extent, resolution or hbar")

    # -- arithmetic
    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            self.require_same_grid(other)
            return self.with_data(op(self.data, other.data))
        return self.with_data(op(self.data, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.true_divide)

    def __neg__(self):
        return self.with_data(-self.data)

    @property
    def real(self):
        return self.with_data(self.data.real)

    @property
    def imag(self):
        return self.with_data(np.imag(self.data))

    # -- reductions
    def integral(self) -> complex | float:
        """Product trapezoid rule over the grid."""
        wq = np.full(self.n_q, self.dq)
        wq[[0, -1]] *= 0.5
        wp = np.full(self.n_p, self.dp)
        wp[[0, -1]] *= 0.5
        return wq @ self.data @ wp

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data)))

    def boundary_fraction(self) -> float:
        """Largest boundary sample relative to the peak magnitude."""
        a = np.abs(self.data)
        edge = max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max())
        peak = a.max()
        return float(edge / peak) if peak > 0 else 0.0

    def sup_distance(self, other) -> float:
        self.require_same_grid(other)
        return float(np.max(np.abs(self.data - other.data)))

    # -- I/O
    def save(self, manifest_path) -> Path:
        """Write a JSON manifest and a raw little-endian float64 data file."""
        if np.iscomplexobj(self.data):
            raise GridError("only real grids can be saved")
        manifest_path = Path(manifest_path)
        data_path = manifest_path.with_suffix(".f64")
        np.ascontiguousarray(self.data, dtype="<f8").tofile(data_path)
        manifest = {
            "hbar": self.hbar, "q_min": self.q_min, "q_max": self.q_max, "n_q": self.n_q,
            "p_min": self.p_min, "p_max": self.p_max, "n_p": self.n_p,
            "data_file": data_path.name,
        }
        manifest_path.write_text(json.dumps(manifest, indent=2))
        return manifest_path

    @classmethod
    def load(cls, manifest_path) -> "GridFunction":
        manifest_path = Path(manifest_path)
        m = json.loads(manifest_path.read_text())
        missing = {"hbar", "q_min", "q_max", "n_q", "p_min", "p_max", "n_p", "data_file"} - set(m)
        if missing:
            raise GridError(f"manifest lacks {sorted(missing)}")
        raw = np.fromfile(manifest_path.parent / m["data_file"], dtype="<f8")
        if raw.size != m["n_q"] * m["n_p"]:
            raise GridError(f"data file holds {raw.size} values, expected {m['n_q'] * m['n_p']}")
        return cls(m["q_min"], m["q_max"], m["n_q"], m["p_min"], m["p_max"], m["n_p"],
                   raw.reshape(m["n_q"], m["n_p"]), m["hbar"])

    def to_csv(self, path):
        """Long-format CSV with columns q, p, value."""
        Q, P = self.mesh()
        arr = np.column_stack([Q.ravel(), P.ravel(), np.real(self.data).ravel()])
        np.savetxt(path, arr, delimiter=",", header="q,p,value", comments="")


def default_half_width(hbar: float = 1.0) -> float:
    """Half-width of the default square window.

    8 sqrt(hbar) puts the ground-state tail e^(-L^2/hbar) far below 1e-12 and
    keeps the first few excited states below 1e-20 of their peak.
    """
    return 8.0 * math.sqrt(hbar)


def default_grid(f, hbar: float = 1.0, n: int = 256) -> GridFunction:
    """Sample f on the default [-L, L]^2 window."""
    return GridFunction.symmetric(f, default_half_width(hbar), n, hbar)
