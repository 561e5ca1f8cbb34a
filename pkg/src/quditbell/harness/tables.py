"""Published reference tables used by the report.

Rows and columns are keyed by the same values the sweeps record: drive
amplitudes in gauss (a ``(group1, group2)`` pair for the trimer
preparation) and coherence times in microseconds, ``None`` meaning no
decoherence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PaperTable:
    key: str
    title: str
    quantity: str  # column of the sweep CSV compared against the table
    tolerance: str  # key into the tolerance mapping
    row_name: str
    col_name: str
    rows: tuple
    cols: tuple
    values: np.ndarray

    def lookup(self, row, col) -> float | None:
        for i, r in enumerate(self.rows):
            if _same(r, row):
                for j, c in enumerate(self.cols):
                    if _same(c, col):
                        return float(self.values[i, j])
        return None


def _same(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, tuple) or isinstance(b, tuple):
        return isinstance(a, tuple) and isinstance(b, tuple) and len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return abs(float(a) - float(b)) < 1e-9


_DIMER_T2 = (20.0, 10.0, 5.0, 3.0, 2.4, 2.0, 1.0)
_TRIMER_PAIRS = ((40.0, 20.0), (70.0, 5.0), (70.0, 15.0), (70.0, 20.0), (70.0, 25.0), (70.0, 40.0), (90.0, 20.0))

TABLES = {
    t.key: t
    for t in (
        PaperTable(
            "dimer-prep",
            "Five-pulse preparation fidelity of the qubit-qudit state",
            "fidelity",
            "fidelity",
            "B1_G",
            "T2e_us",
            (10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 60.0),
            _DIMER_T2,
            np.array(
                [
                    [0.9770, 0.9600, 0.9279, 0.8884, 0.8956, 0.8441, 0.7392],
                    [0.9770, 0.9656, 0.9435, 0.9156, 0.8991, 0.8832, 0.8002],
                    [0.9809, 0.9722, 0.9551, 0.9333, 0.9202, 0.9075, 0.8389],
                    [0.9877, 0.9806, 0.9668, 0.9490, 0.9383, 0.9278, 0.8698],
                    [0.9818, 0.9759, 0.9644, 0.9495, 0.9404, 0.9315, 0.8816],
                    [0.9610, 0.9567, 0.9482, 0.9370, 0.9302, 0.9235, 0.8853],
                    [0.9221, 0.9218, 0.9163, 0.9091, 0.9046, 0.9002, 0.8746],
                ]
            ),
        ),
        PaperTable(
            "chsh-bell",
            "Maximal CHSH Bell value with GRAPE measurement rotations",
            "bell_value",
            "bell",
            "B1_G",
            "T2e_us",
            (15.0, 20.0, 25.0, 30.0, 40.0),
            _DIMER_T2,
            np.array(
                [
                    [2.4606, 2.4327, 2.3584, 2.2689, 2.2167, 2.1673, 1.9253],
                    [2.4872, 2.4534, 2.3857, 2.3019, 2.2537, 2.2074, 1.9758],
                    [2.5630, 2.5299, 2.4664, 2.3876, 2.3413, 2.2972, 2.0732],
                    [2.5392, 2.5090, 2.4523, 2.3788, 2.3362, 2.2960, 2.0878],
                    [2.4675, 2.4396, 2.4109, 2.3181, 2.2785, 2.2403, 2.0427],
                ]
            ),
        ),
        PaperTable(
            "cglmp-prep",
            "Fifteen-pulse preparation fidelity of the two-qudit state",
            "fidelity",
            "fidelity",
            "B1_group1_group2_G",
            "T2_us",
            _TRIMER_PAIRS,
            (5.0, 10.0, 30.0, None),
            np.array(
                [
                    [0.8973, 0.9417, 0.9739, 0.9908],
                    [0.7265, 0.8378, 0.9350, 0.9928],
                    [0.8790, 0.9322, 0.9714, 0.9923],
                    [0.9011, 0.9434, 0.9739, 0.9898],
                    [0.9098, 0.9449, 0.9699, 0.9829],
                    [0.9162, 0.9400, 0.9565, 0.9650],
                    [0.9011, 0.9422, 0.9717, 0.9872],
                ]
            ),
        ),
        PaperTable(
            "cglmp-prep-time",
            "Duration of the fifteen-pulse preparation (ns)",
            "duration_ns",
            "duration",
            "B1_group1_group2_G",
            "T2_us",
            _TRIMER_PAIRS,
            (None,),
            np.array([[134.49], [484.77], [167.50], [127.84], [104.05], [68.35], [125.87]]),
        ),
        PaperTable(
            "cglmp-bell",
            "CGLMP functional I with equal measurement amplitudes",
            "cglmp_value",
            "bell",
            "B1_G",
            "T2_us",
            (40.0, 30.0, 20.0, 10.0, 9.0),
            (None, 30.0, 10.0, 5.0),
            np.array(
                [
                    [2.1687, 2.0910, 2.0173, 1.7544],
                    [2.5129, 2.4197, 2.2471, 2.0191],
                    [2.6443, 2.5319, 2.3259, 2.0580],
                    [2.7678, 2.6103, 2.3301, 1.9806],
                    [2.7425, 2.5755, 2.2027, 1.9245],
                ]
            ),
        ),
    )
}

# prep durations of the dimer table (microseconds), keyed by B1
DIMER_PREP_TIME_US = {10.0: 1.7720, 15.0: 1.1813, 20.0: 0.8942, 25.0: 0.7144, 30.0: 0.5962, 40.0: 0.4471, 60.0: 0.2981}

DEFAULT_TABLE = {
    "chsh-prep": "dimer-prep",
    "chsh-bell": "chsh-bell",
    "cglmp-prep": "cglmp-prep",
    "cglmp-bell": "cglmp-bell",
}


class UnknownTableError(KeyError):
    pass


def get_table(key: str) -> PaperTable:
    try:
        return TABLES[key]
    except KeyError:
        raise UnknownTableError(f"unknown paper table {key!r}; known: {', '.join(sorted(TABLES))}") from None
