"""Sweep execution and result persistence.

Each experiment kind maps to a cell function evaluated on the product of
its grids. Cells are independent and run on a bounded process pool;
results are gathered in cell order, so output files do not depend on the
worker count.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import io
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Callable

import numpy as np

from ..bell import (
    cglmp_functional,
    cglmp_probabilities,
    chsh_diagonal_terms,
    chsh_maximize,
    maximally_entangled_qudits,
    psi_chsh_target,
)
from ..dynamics import LindbladModel, PropagationConfig, lindblad_propagate
from ..grape import GrapeConfig, GrapeResult, grape_optimize, problem_from_model
from ..model import (
    build_dimer,
    build_trimer,
    dimer_subspace,
    embed_subspace,
    level_diagram,
    trimer_subspace,
)
from ..pulses import cglmp_measurement_sequences, prep_chsh_state, prep_cglmp_state
from .config import SCHEMA_VERSION, ExperimentConfig
from .fitting import fit_decay, read_decay_csv

log = logging.getLogger(__name__)

TERMS = tuple(itertools.product((1, 2), (1, 2)))
DEFAULT_CGLMP_PREP = (70.0, 20.0)


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# result container


@dataclass
class SweepResult:
    """Tabular sweep output.

    ``rows`` holds one mapping per cell in grid order; ``wall_time_s`` the
    matching per-cell wall times, kept out of the CSV so identical inputs
    give byte-identical CSV files.
    """

    config: ExperimentConfig
    axes: dict
    columns: list
    rows: list
    wall_time_s: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)  # file name -> text content
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = int(np.prod([len(v) for v in self.axes.values()])) if self.axes else len(self.rows)
        if len(self.rows) != expected:
            raise ValueError(f"{len(self.rows)} cells recorded, grid has {expected}")

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema_version={SCHEMA_VERSION} experiment={self.config.experiment} config_hash={self.config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.config.experiment,
            "config_hash": self.config_hash,
            "code_version": code_version(),
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "axes": {k: [_jsonable(x) for x in v] for k, v in self.axes.items()},
            "columns": list(self.columns),
            "rows": [{k: _jsonable(v) for k, v in r.items()} for r in self.rows],
            "wall_time_s": list(self.wall_time_s),
            "notes": self.notes,
        }

    def write(self, directory: str | Path | None = None) -> tuple[Path, Path]:
        """Write ``<name>.csv`` and ``<name>.json`` (plus artifacts); returns both paths."""
        out = Path(directory if directory is not None else self.config.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        name = self.config.name
        csv_path, json_path = out / f"{name}.csv", out / f"{name}.json"
        text = self.csv_text()
        csv_path.write_text(text)
        meta = self.metadata()
        meta["csv"] = csv_path.name
        meta["csv_sha256"] = hashlib.sha256(text.encode()).hexdigest()
        meta["artifacts"] = sorted(self.artifacts)
        for fname, content in self.artifacts.items():
            (out / fname).write_text(content)
        json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, tuple):
        return "-".join(_fmt(v) for v in x)
    return str(x)


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# shared setup (cached per worker process)


def _propagation(cfg: ExperimentConfig, mode: str | None = None) -> PropagationConfig:
    p = cfg.propagation
    return PropagationConfig(
        mode=mode or p.mode,
        substep=p.substep_ns,
        second_order_shifts=p.second_order_shifts,
        phase_reference=p.phase_reference,
    )


def _us_to_ns(t):
    return None if t is None else 1e3 * t


@functools.lru_cache(maxsize=4)
def _dimer(params_json: str):
    from ..model import DimerParams

    m = build_dimer(DimerParams.from_mapping(json.loads(params_json)))
    sub = dimer_subspace(m)
    psi0 = np.zeros(m.dim, complex)
    psi0[m.index((-0.5, -2.5))] = 1
    target = embed_subspace(psi_chsh_target(), sub, m.dim)
    return m, sub, psi0, target


@functools.lru_cache(maxsize=4)
def _trimer(params_json: str):
    from ..model import TrimerParams

    m = build_trimer(TrimerParams.from_mapping(json.loads(params_json)))
    sub = trimer_subspace(m)
    psi0 = np.zeros(m.dim, complex)
    psi0[m.index((-1.5, -0.5, -1.5))] = 1
    target = embed_subspace(maximally_entangled_qudits(), sub, m.dim)
    return m, sub, psi0, target


def _params_json(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model, sort_keys=True)


def dimer_lindblad(cfg: ExperimentConfig, t2e_us) -> LindbladModel:
    m = _dimer(_params_json(cfg))[0]
    return LindbladModel.with_t2(m, [_us_to_ns(t2e_us), _us_to_ns(cfg.t2_nuclear_us)])


def trimer_lindblad(cfg: ExperimentConfig, t2_us) -> LindbladModel:
    m = _trimer(_params_json(cfg))[0]
    if t2_us is None:
        return LindbladModel.with_t2(m, [None, None, None])
    return LindbladModel.with_t2(m, [_us_to_ns(t2_us), _us_to_ns(cfg.t2_ancilla_us), _us_to_ns(t2_us)])


def _overlap(psi: np.ndarray, rho: np.ndarray) -> float:
    return float(np.real(psi.conj() @ rho @ psi))


# ---------------------------------------------------------------------------
# cell functions (module level so worker processes can import them)


def chsh_prep_cell(cfg: ExperimentConfig, B1: float, t2e_us) -> dict:
    m, _, psi0, target = _dimer(_params_json(cfg))
    seq = prep_chsh_state(m, B1)
    rho = lindblad_propagate(dimer_lindblad(cfg, t2e_us), psi0, seq, _propagation(cfg))
    return {"fidelity": _overlap(target, rho), "duration_ns": float(seq.duration)}


def chsh_bell_cell(cfg: ExperimentConfig, B1: float, t2e_us, rotations: dict | None) -> dict:
    """Prepare at ``B1``, rotate with each measurement pair and evaluate the Bell value.

    ``rotations`` maps ``(i, j)`` to GRAPE amplitude arrays (``None`` for
    exact gates). Each rotated state is restricted to the computational
    subspace and renormalized; the lost weight is reported as leakage.
    """
    m, sub, psi0, target = _dimer(_params_json(cfg))
    chsh = _chsh_solution()
    lm = dimer_lindblad(cfg, t2e_us)
    rho = lindblad_propagate(lm, psi0, prep_chsh_state(m, B1), _propagation(cfg))
    out = {"prep_fidelity": _overlap(target, rho)}
    rotated, leak = [], []
    if rotations is None:
        for i, j in TERMS:
            U = np.kron(chsh.U_A[i - 1], chsh.U_B[j - 1])
            r = rho[np.ix_(sub, sub)]
            rotated.append(U @ r @ U.conj().T)
    else:
        lm_g = lm if cfg.grape_dephasing else dimer_lindblad(cfg, None)
        g = cfg.grape
        dt = g.duration_ns / g.segments
        for key in TERMS:
            seq = GrapeResult(np.asarray(rotations[key]), float("nan"), dt=dt).to_sequence()
            rotated.append(lindblad_propagate(lm_g, rho, seq, _propagation(cfg, mode="lab"))[np.ix_(sub, sub)])
    for r in rotated:
        tr = float(np.real(np.trace(r)))
        leak.append(1.0 - tr)
    normed = [r / np.trace(r) for r in rotated]
    terms, value = chsh_diagonal_terms(normed, chsh.D)
    out.update(terms)
    out["bell_value"] = float(value)
    out["max_leakage"] = float(max(leak))
    return out


@functools.lru_cache(maxsize=1)
def _chsh_solution():
    return chsh_maximize(psi_chsh_target())


def _grape_config(cfg: ExperimentConfig, target_seed: int) -> GrapeConfig:
    g = cfg.grape
    return GrapeConfig(
        max_iter=g.max_iter,
        fidelity_target=g.fidelity_target,
        seed=target_seed,
        init_amplitude=g.init_amplitude_G,
        restarts=g.restarts,
        accept_fidelity=g.accept_fidelity,
    )


def grape_cell(cfg: ExperimentConfig, i: int, j: int) -> dict:
    m, sub, _, _ = _dimer(_params_json(cfg))
    chsh = _chsh_solution()
    g = cfg.grape
    problem = problem_from_model(
        m, np.kron(chsh.U_A[i - 1], chsh.U_B[j - 1]), sub, N=g.segments, T=g.duration_ns, max_amp=g.max_amplitude_G
    )
    res = grape_optimize(problem, config=_grape_config(cfg, cfg.seed))
    return {
        "target": f"A{i}B{j}",
        "fidelity": float(res.fidelity),
        "iterations": len(res.trace) - 1,
        "seed": res.seed,
        "attempts": res.attempts,
        "converged": bool(res.converged),
        "max_abs_amplitude_G": float(np.max(np.abs(res.amplitudes))),
        "_amplitudes": res.amplitudes,
        "_dt": res.dt,
    }


def cglmp_prep_cell(cfg: ExperimentConfig, pair: tuple, t2_us) -> dict:
    m, _, psi0, target = _trimer(_params_json(cfg))
    seq = prep_cglmp_state(m, *pair)
    rho = lindblad_propagate(trimer_lindblad(cfg, t2_us), psi0, seq, _propagation(cfg))
    return {"fidelity": _overlap(target, rho), "duration_ns": float(seq.duration)}


def cglmp_bell_cell(cfg: ExperimentConfig, B1: float, t2_us) -> dict:
    m, sub, psi0, target = _trimer(_params_json(cfg))
    pair = cfg.amplitude_pairs_G[0] if cfg.amplitude_pairs_G else DEFAULT_CGLMP_PREP
    lm = trimer_lindblad(cfg, t2_us)
    prop = _propagation(cfg)
    rho = lindblad_propagate(lm, psi0, prep_cglmp_state(m, *pair), prop)
    seqs = cglmp_measurement_sequences(m, B1)
    rotated = [lindblad_propagate(lm, rho, seqs[k], prop)[np.ix_(sub, sub)] for k in TERMS]
    leak = max(1.0 - float(np.real(np.trace(r))) for r in rotated)
    value = cglmp_functional(cglmp_probabilities(rotated))
    return {
        "cglmp_value": float(value),
        "prep_fidelity": _overlap(target, rho),
        "max_leakage": leak,
        "measurement_ns_A1B1": float(seqs[(1, 1)].duration),
        "measurement_ns_A1B2": float(seqs[(1, 2)].duration),
    }


def _timed(fn: Callable, args: tuple) -> tuple[dict, float]:
    t = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t


def run_cells(fn: Callable, cells: list[tuple], workers: int = 1) -> tuple[list[dict], list[float]]:
    """Evaluate ``fn(*cell)`` for every cell; order of results follows ``cells``."""
    if workers <= 1 or len(cells) <= 1:
        pairs = [_timed(fn, c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
            pairs = list(pool.map(_timed, [fn] * len(cells), cells))
    return [p[0] for p in pairs], [p[1] for p in pairs]


# ---------------------------------------------------------------------------
# experiments


def _sweep(cfg, fn, axes: dict, extra: tuple = ()) -> tuple[list[dict], list[float]]:
    names = list(axes)
    cells = list(itertools.product(*axes.values()))
    results, walls = run_cells(fn, [(cfg, *c, *extra) for c in cells], cfg.workers)
    rows = [{**dict(zip(names, c)), **r} for c, r in zip(cells, results)]
    return rows, walls


def _run_chsh_prep(cfg):
    axes = {"B1_G": cfg.amplitudes_G, "T2e_us": cfg.t2_us}
    rows, walls = _sweep(cfg, chsh_prep_cell, axes)
    return SweepResult(cfg, axes, ["B1_G", "T2e_us", "fidelity", "duration_ns"], rows, walls)


def _grape_rotations(cfg) -> tuple[list[dict], list[float]]:
    return run_cells(grape_cell, [(cfg, i, j) for i, j in TERMS], cfg.workers)


def _grape_artifacts(cfg, results) -> dict:
    arts = {}
    for r in results:
        res = GrapeResult(r["_amplitudes"], r["fidelity"], dt=r["_dt"])
        path = io.StringIO()
        w = csv.writer(path, lineterminator="\n")
        w.writerow(["segment", "t_ns", "c0_G"])
        for k, row in enumerate(res.amplitudes):
            w.writerow([k, repr(k * res.dt)] + [repr(float(x)) for x in row])
        arts[f"{cfg.name}_{r['target']}.csv"] = path.getvalue()
    return arts


def _run_grape(cfg):
    results, walls = _grape_rotations(cfg)
    cols = ["target", "fidelity", "iterations", "seed", "attempts", "converged", "max_abs_amplitude_G"]
    rows = [{k: r[k] for k in cols} for r in results]
    return SweepResult(cfg, {"target": [r["target"] for r in results]}, cols, rows, walls, artifacts=_grape_artifacts(cfg, results))


def _run_chsh_bell(cfg):
    axes = {"B1_G": cfg.amplitudes_G, "T2e_us": cfg.t2_us}
    notes, arts = {}, {}
    rotations = None
    if cfg.measurement == "grape":
        results, _ = _grape_rotations(cfg)
        rotations = {key: r["_amplitudes"] for key, r in zip(TERMS, results)}
        notes["grape_fidelity"] = {r["target"]: r["fidelity"] for r in results}
        arts = _grape_artifacts(cfg, results)
    rows, walls = _sweep(cfg, chsh_bell_cell, axes, (rotations,))
    cols = ["B1_G", "T2e_us", "bell_value", "O11", "O12", "O21", "O22", "prep_fidelity", "max_leakage"]
    return SweepResult(cfg, axes, cols, rows, walls, artifacts=arts, notes=notes)


def _run_cglmp_prep(cfg):
    axes = {"B1_group1_group2_G": cfg.amplitude_pairs_G, "T2_us": cfg.t2_us}
    rows, walls = _sweep(cfg, cglmp_prep_cell, axes)
    return SweepResult(cfg, axes, ["B1_group1_group2_G", "T2_us", "fidelity", "duration_ns"], rows, walls)


def _run_cglmp_bell(cfg):
    axes = {"B1_G": cfg.amplitudes_G, "T2_us": cfg.t2_us}
    rows, walls = _sweep(cfg, cglmp_bell_cell, axes)
    cols = ["B1_G", "T2_us", "cglmp_value", "prep_fidelity", "max_leakage", "measurement_ns_A1B1", "measurement_ns_A1B2"]
    pair = cfg.amplitude_pairs_G[0] if cfg.amplitude_pairs_G else DEFAULT_CGLMP_PREP
    return SweepResult(cfg, axes, cols, rows, walls, notes={"prep_amplitudes_G": list(pair)})


def _run_level_diagram(cfg):
    builder = build_dimer if cfg.uses_dimer else build_trimer
    t = time.perf_counter()
    ld = level_diagram(builder, cfg.model_params(), cfg.field_range_T, cfg.field_points)
    n = ld.energies.shape[1]
    cols = ["Bz_T"] + [f"E{k + 1}_rad_per_ns" for k in range(n)]
    rows = [{"Bz_T": float(b), **{c: float(e) for c, e in zip(cols[1:], row)}} for b, row in zip(ld.fields, ld.energies)]
    return SweepResult(cfg, {"Bz_T": [float(b) for b in ld.fields]}, cols, rows, [time.perf_counter() - t])


def _run_decay_fit(cfg):
    t = time.perf_counter()
    tau, amp = read_decay_csv(cfg.input_csv)
    fit = fit_decay(tau, amp)
    return SweepResult(cfg, {}, ["M0", "T2_us", "residual", "n_points"], [fit.to_dict()], [time.perf_counter() - t])


RUNNERS = {
    "chsh-prep": _run_chsh_prep,
    "chsh-bell": _run_chsh_bell,
    "grape-rotations": _run_grape,
    "cglmp-prep": _run_cglmp_prep,
    "cglmp-bell": _run_cglmp_bell,
    "level-diagram": _run_level_diagram,
    "decay-fit": _run_decay_fit,
}


def run(cfg: ExperimentConfig, write: bool = True) -> SweepResult:
    """Execute an experiment; with ``write`` persist CSV and JSON to the output directory."""
    log.info("running %s (%s)", cfg.experiment, cfg.config_hash()[:12])
    result = RUNNERS[cfg.experiment](cfg)
    if write:
        csv_path, json_path = result.write()
        log.info("wrote %s and %s", csv_path, json_path)
    return result
