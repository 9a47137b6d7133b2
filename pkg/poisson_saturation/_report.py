from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

SCHEMA_VERSION = 1
CONVENTION = 'sharp(a)^i = sum_j Pi^ij a_j; pi(a,b) = <b, sharp(a)>'

Status = Literal['pass', 'fail', 'prerequisite', 'error', 'skipped']


class StageReport(BaseModel):
    """Outcome of one pipeline stage."""
    model_config = ConfigDict(extra='forbid')

    name: str
    status: Status = 'pass'
    ranks: Dict[str, Any] = Field(default_factory=dict)
    residuals: Dict[str, Optional[float]] = Field(default_factory=dict)
    flags: Dict[str, Any] = Field(default_factory=dict)
    witnesses: Dict[str, List[List[float]]] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)
    message: Optional[str] = None

    def check(self, name: str, value: float, tol: float) -> bool:
        """Records a residual and fails the stage when it exceeds ``tol``."""
        value = float(value)
        self.residuals[name] = value
        ok = bool(np.isfinite(value) and value <= tol)
        if not ok and self.status == 'pass':
            self.status = 'fail'
        return ok

    def require(self, name: str, ok: bool) -> bool:
        """Records a boolean flag and fails the stage when it is false."""
        self.flags[name] = bool(ok)
        if not ok and self.status == 'pass':
            self.status = 'fail'
        return bool(ok)


class Report(BaseModel):
    """The machine-readable result of a run; field order is stable."""
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    schema_version: int = Field(SCHEMA_VERSION, serialization_alias='schema')
    convention: str = CONVENTION
    scene: str
    command: str
    parameters: Dict[str, Any] = Field(default_factory=dict)
    stages: List[StageReport] = Field(default_factory=list)
    exit_code: int = 0

    def stage(self, name: str) -> Optional[StageReport]:
        return next((s for s in self.stages if s.name == name), None)

    def to_json(self) -> str:
        # non-finite floats are written as null
        return self.model_dump_json(indent=2, by_alias=True) + '\n'

    def write(self, path: Union[str, Path]) -> Path:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(self.to_json(), encoding='utf-8')
        return out


def _columns(prefix: str, values: pd.Series, width: int) -> pd.DataFrame:
    arr = np.array([np.ravel(v) for v in values], dtype=float).reshape(len(values), width)
    return pd.DataFrame(arr, columns=[f'{prefix}{i + 1}' for i in range(width)], index=values.index)


def points_frame(frame: pd.DataFrame, k: int, r: int, n: int) -> pd.DataFrame:
    """Flattens a frame with array columns ``u``, ``s``, ``x`` and a ``residual`` column into the CSV layout
    ``u1..uk, xi1..xir, x1..xn, residual``."""
    return pd.concat([
        _columns('u', frame['u'], k),
        _columns('xi', frame['s'], r),
        _columns('x', frame['x'], n),
        frame[['residual']].astype(float),
    ], axis=1)


def write_points(frame: pd.DataFrame, path: Union[str, Path], k: int, r: int, n: int) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    points_frame(frame, k, r, n).to_csv(out, index=False, float_format='%.17g')
    return out
