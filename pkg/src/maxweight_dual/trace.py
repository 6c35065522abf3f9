"""Columnar per-checkpoint run records."""
from __future__ import annotations

from typing import Dict, List

import numpy as np


class RunTrace:
    """Rows appended at logged iterations, stored column-wise.

    Vector-valued entries become 2-D columns. ``flags`` holds run-level facts
    such as contract violations.
    """

    def __init__(self):
        self._rows: Dict[str, List] = {}
        self._frozen: Dict[str, np.ndarray] = {}
        self.flags: Dict[str, object] = {}

    def record(self, **values) -> None:
        if self._frozen:
            self._frozen = {}
        n = len(self)
        for key, val in values.items():
            col = self._rows.get(key)
            if col is None:
                col = self._rows[key] = [None] * n
            col.append(val)
        for key, col in self._rows.items():
            if len(col) == n:
                col.append(None)

    def __len__(self) -> int:
        return len(self._rows.get("k", ()))

    def __contains__(self, key) -> bool:
        return key in self._rows

    def columns(self):
        return list(self._rows)

    def __getitem__(self, key) -> np.ndarray:
        if key not in self._frozen:
            col = self._rows[key]
            if any(v is None for v in col):
                arr = np.array([np.nan if v is None else v for v in col], dtype=object)
                try:
                    arr = arr.astype(float)
                except (TypeError, ValueError):
                    pass
            else:
                arr = np.asarray(col)
            self._frozen[key] = arr
        return self._frozen[key]

    def last(self, key):
        return self._rows[key][-1]
