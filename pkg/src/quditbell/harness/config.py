"""Experiment configuration: YAML schema, validation and hashing.

Every physical field carries its unit in the key name (``_G`` gauss,
``_us`` microseconds, ``_ns`` nanoseconds, ``_T`` tesla). Grid fields
accept a scalar or a list; ``null`` in a coherence-time grid means no
decoherence.

Example::

    schema_version: 1
    experiment: chsh-prep
    seed: 0
    amplitudes_G: [10, 15, 20, 25, 30, 40, 60]
    t2_us: [20, 10, 5, 3, 2.4, 2, 1]
    t2_nuclear_us: 560
    propagation: {mode: rotating-wave}
    output: {directory: results, name: dimer_prep}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..model import DimerParams, TrimerParams

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "chsh-prep",
    "chsh-bell",
    "grape-rotations",
    "cglmp-prep",
    "cglmp-bell",
    "level-diagram",
    "decay-fit",
)

# experiments on the qubit-qudit dimer; the others use the trimer
DIMER_KINDS = ("chsh-prep", "chsh-bell", "grape-rotations")

DEFAULT_TOLERANCES = {"fidelity": 0.03, "bell": 0.08, "ideal": 1e-4, "duration": 10.0}  # duration in ns


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every offending field."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class PropagationSettings:
    mode: str = "rotating-wave"
    phase_reference: str = "pulse"
    second_order_shifts: bool = False
    substep_ns: float | None = None


@dataclass(frozen=True)
class GrapeSettings:
    segments: int = 1600
    duration_ns: float = 1000.0
    max_amplitude_G: float = 75.0
    fidelity_target: float = 0.9999
    accept_fidelity: float = 0.99
    restarts: int = 5
    max_iter: int = 2000
    init_amplitude_G: float = 1.0


@dataclass(frozen=True)
class OutputSettings:
    directory: str = "results"
    name: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    Attributes
    ----------
    experiment : one of ``EXPERIMENTS``.
    amplitudes_G : drive amplitude grid. For ``chsh-bell`` the preparation
        amplitude; for ``cglmp-bell`` the measurement amplitude.
    amplitude_pairs_G : ``[group1, group2]`` pairs for ``cglmp-prep`` and
        the preparation of ``cglmp-bell`` (group 1 drives the pi/2 rotations
        of the second qudit).
    t2_us : electron (dimer) or qudit (trimer) coherence time grid.
    t2_nuclear_us : nuclear coherence time of the dimer.
    t2_ancilla_us : ancilla coherence time of the trimer; it is switched
        off together with the qudit dephasing in no-decoherence cells.
    measurement : ``chsh-bell`` rotations, "grape" or "ideal" (exact gates).
    grape_dephasing : apply the coherence time of each cell during the GRAPE
        rotations (otherwise they run noiseless).
    model : overrides of the model parameters (field names of
        ``DimerParams`` or ``TrimerParams``).
    field_range_T, field_points : ``level-diagram`` sweep.
    system : ``level-diagram`` model, "dimer" or "trimer".
    input_csv : ``decay-fit`` data with columns ``tau_us`` and ``amplitude``.
    paper_table : reference table for ``report``; defaults by experiment.
    tolerances : overrides of ``DEFAULT_TOLERANCES``.
    """

    experiment: str
    seed: int = 0
    workers: int = 1
    amplitudes_G: tuple = ()
    amplitude_pairs_G: tuple = ()
    t2_us: tuple = (None,)
    t2_nuclear_us: float | None = 560.0
    t2_ancilla_us: float | None = 1.0
    measurement: str = "grape"
    grape_dephasing: bool = True
    model: dict = field(default_factory=dict)
    propagation: PropagationSettings = PropagationSettings()
    grape: GrapeSettings = GrapeSettings()
    output: OutputSettings = OutputSettings()
    field_range_T: tuple = (0.0, 1.5)
    field_points: int = 301
    system: str = "dimer"
    input_csv: str | None = None
    paper_table: str | None = None
    tolerances: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    # -- derived ----------------------------------------------------------

    @property
    def name(self) -> str:
        return self.output.name or self.experiment.replace("-", "_")

    @property
    def tolerance(self) -> dict:
        return {**DEFAULT_TOLERANCES, **self.tolerances}

    def model_params(self):
        cls = DimerParams if self.uses_dimer else TrimerParams
        return cls.from_mapping(self.model)

    @property
    def uses_dimer(self) -> bool:
        if self.experiment == "level-diagram":
            return self.system == "dimer"
        return self.experiment in DIMER_KINDS

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """SHA-256 of the result-relevant fields (output location and worker count excluded)."""
        d = self.to_dict()
        d.pop("workers")
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = {k: v for k, v in self.to_dict().items() if v != ()}
        for k, v in kw.items():
            if v is None:
                continue
            if k in ("mode",):
                d["propagation"]["mode"] = v
            elif k == "output_dir":
                d["output"]["directory"] = v
            else:
                d[k] = v
        return parse_config(d)


_SUBSECTIONS = {"propagation": PropagationSettings, "grape": GrapeSettings, "output": OutputSettings}


def _grid(value) -> list:
    if value is None:
        return [None]
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _num(x):
    return None if x is None else float(x)


def parse_config(data: dict[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping; raises :class:`ConfigError` listing every problem."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping"])
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    for key in sorted(set(data) - known):
        errors.append(f"{key}: unknown field")
    kind = data.get("experiment")
    if kind not in EXPERIMENTS:
        errors.append(f"experiment: must be one of {', '.join(EXPERIMENTS)} (got {kind!r})")
    if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}")

    kw: dict[str, Any] = {}
    for key in ("seed", "workers", "field_points"):
        if key in data:
            v = data[key]
            if not isinstance(v, int) or isinstance(v, bool):
                errors.append(f"{key}: must be an integer")
            else:
                kw[key] = v
    if kw.get("workers", 1) < 1:
        errors.append("workers: must be at least 1")

    def grid(key, allow_none=False, positive=True):
        raw = _grid(data.get(key)) if key in data else None
        if raw is None:
            return None
        out = []
        for x in raw:
            if x is None and allow_none:
                out.append(None)
            elif isinstance(x, (int, float)) and not isinstance(x, bool) and (x > 0 or not positive):
                out.append(float(x))
            else:
                errors.append(f"{key}: invalid entry {x!r}")
        if not out:
            errors.append(f"{key}: grid must be non-empty")
        return tuple(out)

    amps = grid("amplitudes_G")
    if amps is not None:
        kw["amplitudes_G"] = amps
    t2 = grid("t2_us", allow_none=True)
    if t2 is not None:
        kw["t2_us"] = t2
    if "amplitude_pairs_G" in data:
        pairs = data["amplitude_pairs_G"]
        if not isinstance(pairs, (list, tuple)) or not pairs:
            errors.append("amplitude_pairs_G: grid must be a non-empty list of [group1, group2] pairs")
        else:
            ok = []
            for p in pairs:
                if isinstance(p, (list, tuple)) and len(p) == 2 and all(isinstance(x, (int, float)) and x > 0 for x in p):
                    ok.append((float(p[0]), float(p[1])))
                else:
                    errors.append(f"amplitude_pairs_G: invalid pair {p!r}")
            kw["amplitude_pairs_G"] = tuple(ok)
    for key in ("t2_nuclear_us", "t2_ancilla_us"):
        if key in data:
            v = data[key]
            if v is not None and (not isinstance(v, (int, float)) or v <= 0):
                errors.append(f"{key}: must be positive or null")
            else:
                kw[key] = _num(v)
    if "measurement" in data:
        if data["measurement"] not in ("grape", "ideal"):
            errors.append("measurement: must be 'grape' or 'ideal'")
        else:
            kw["measurement"] = data["measurement"]
    if "grape_dephasing" in data:
        if not isinstance(data["grape_dephasing"], bool):
            errors.append("grape_dephasing: must be true or false")
        else:
            kw["grape_dephasing"] = data["grape_dephasing"]
    if "system" in data:
        if data["system"] not in ("dimer", "trimer"):
            errors.append("system: must be 'dimer' or 'trimer'")
        else:
            kw["system"] = data["system"]
    if "field_range_T" in data:
        fr = data["field_range_T"]
        if not (isinstance(fr, (list, tuple)) and len(fr) == 2 and fr[1] > fr[0]):
            errors.append("field_range_T: must be [low, high] with high > low")
        else:
            kw["field_range_T"] = (float(fr[0]), float(fr[1]))
    for key in ("input_csv", "paper_table"):
        if key in data:
            kw[key] = None if data[key] is None else str(data[key])
    if "tolerances" in data:
        tol = data["tolerances"] or {}
        bad = set(tol) - set(DEFAULT_TOLERANCES)
        if bad:
            errors.append(f"tolerances: unknown keys {sorted(bad)}")
        kw["tolerances"] = {k: float(v) for k, v in tol.items() if k in DEFAULT_TOLERANCES}
    if "model" in data:
        if not isinstance(data["model"], dict):
            errors.append("model: must be a mapping of parameter overrides")
        else:
            kw["model"] = dict(data["model"])

    for key, cls in _SUBSECTIONS.items():
        if key not in data:
            continue
        sub = data[key] or {}
        if not isinstance(sub, dict):
            errors.append(f"{key}: must be a mapping")
            continue
        names = set(cls.__dataclass_fields__)
        for k in sorted(set(sub) - names):
            errors.append(f"{key}.{k}: unknown field")
        try:
            kw[key] = cls(**{k: v for k, v in sub.items() if k in names})
        except TypeError as exc:
            errors.append(f"{key}: {exc}")

    prop = kw.get("propagation", PropagationSettings())
    if prop.mode not in ("rotating-wave", "lab"):
        errors.append("propagation.mode: must be 'rotating-wave' or 'lab'")
    if prop.phase_reference not in ("pulse", "sequence"):
        errors.append("propagation.phase_reference: must be 'pulse' or 'sequence'")
    if prop.substep_ns is not None and not prop.substep_ns > 0:
        errors.append("propagation.substep_ns: must be positive")
    g = kw.get("grape", GrapeSettings())
    if g.segments < 1 or g.duration_ns <= 0 or g.max_amplitude_G <= 0:
        errors.append("grape: segments, duration_ns and max_amplitude_G must be positive")

    # experiment-specific requirements
    need = {
        "chsh-prep": ("amplitudes_G",),
        "chsh-bell": ("amplitudes_G",),
        "cglmp-prep": ("amplitude_pairs_G",),
        "cglmp-bell": ("amplitudes_G",),
        "decay-fit": ("input_csv",),
    }
    for key in need.get(kind, ()):
        if key not in data:
            errors.append(f"{key}: required for experiment {kind}")
    if kind == "cglmp-bell" and len(kw.get("amplitude_pairs_G", ())) > 1:
        errors.append("amplitude_pairs_G: cglmp-bell takes a single preparation pair")

    if not errors:
        try:
            cfg = ExperimentConfig(experiment=kind, **kw)
            cfg.model_params()
        except (TypeError, ValueError) as exc:
            errors.append(f"model: {exc}")
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return parse_config(data)
