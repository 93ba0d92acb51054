"""Batch harness for the four synthetic studies: calibration, power,
kernel misspecification, and missing data.

Every (condition, cascade) cell is independent and fully determined by
the master seed: the simulation seed is cell_seed(master, condition
index, cascade index), and the degrade/test seeds are splitmix64 mixes
of it (offsets 1 and 2). Cells therefore rerun identically in any order,
at any parallelism, and after any interruption.

Output layout under <output_dir>/<experiment>/: ``partial.csv`` is an
append-only journal written as cells complete (resume skips complete
cells), ``detail.csv`` and ``summary.csv`` are written at the end in
canonical row order.
"""

from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import degrade as degrade_mod
from . import influence_tests, netgraph
from .cascade_io import RunConfig, load_config
from .exceptions import DataValidationError
from .hawkes import HawkesParams, simulate
from .netgraph import Embedding, Network, generate_network, load_network, spectral_embedding
from .seeding import cell_seed, splitmix64

ExperimentConfig = RunConfig

DETAIL_COLUMNS = (
    "experiment", "a", "b", "beta", "omega_true", "omega_test",
    "length", "mode", "test", "cascade", "p_value", "status",
)
SUMMARY_COLUMNS = (
    "experiment", "a", "b", "beta", "omega_true", "omega_test",
    "length", "mode", "test", "alpha", "n_cascades", "n_ok", "rejection_rate",
)

EXPERIMENTS = ("calibration", "power", "misspec", "missing")


@dataclass(frozen=True)
class Condition:
    """One cell column of a sweep; index feeds the seed derivation."""

    experiment: str
    index: int
    a: float
    b: float
    beta: float
    omega_true: float
    omega_test: float
    length: int
    mode: str  # "full" | "random" | "doubly_censored"
    tests: tuple


def _fmt(x) -> str:
    if isinstance(x, float):
        return np.format_float_positional(x, unique=True, trim="0")
    return str(x)


@dataclass
class ResultTable:
    """Long-format detail rows plus derived rejection-rate summaries."""

    experiment: str
    rows: list
    alphas: tuple

    def sorted_rows(self) -> list:
        def key(row):
            return tuple(_fmt(row[c]) for c in DETAIL_COLUMNS[:-2])

        return sorted(self.rows, key=lambda r: (key(r), int(r["cascade"])))

    def pvalues(self, test: str, **filters) -> np.ndarray:
        vals = [
            float(r["p_value"])
            for r in self.rows
            if r["test"] == test and r["status"] == "ok"
            and all(r[k] == v for k, v in filters.items())
        ]
        return np.sort(np.asarray(vals))

    def rejection_rate(self, test: str, alpha: float, **filters) -> float:
        p = self.pvalues(test, **filters)
        if p.size == 0:
            raise DataValidationError(f"no ok rows for test {test!r} with {filters}")
        return float(np.mean(p <= alpha))

    def qq_points(self, test: str, **filters):
        """(uniform quantiles, sorted p-values) for QQ plotting."""
        p = self.pvalues(test, **filters)
        n = p.size
        return (np.arange(1, n + 1) / (n + 1), p)

    def summaries(self) -> list:
        groups = {}
        for row in self.sorted_rows():
            key = tuple(row[c] for c in DETAIL_COLUMNS[:9])
            groups.setdefault(key, []).append(row)
        out = []
        for key, rows in groups.items():
            ok_p = [float(r["p_value"]) for r in rows if r["status"] == "ok"]
            for alpha in self.alphas:
                rate = (
                    float(np.mean([p <= alpha for p in ok_p])) if ok_p else float("nan")
                )
                summary = dict(zip(DETAIL_COLUMNS[:9], key))
                summary.update(
                    alpha=alpha,
                    n_cascades=len(rows),
                    n_ok=len(ok_p),
                    rejection_rate=rate,
                )
                out.append(summary)
        return out

    def write_detail(self, path) -> None:
        _write_csv(path, DETAIL_COLUMNS, self.sorted_rows())

    def write_summary(self, path) -> None:
        _write_csv(path, SUMMARY_COLUMNS, self.summaries())


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


# ---------------------------------------------------------------------------
# Condition planning
# ---------------------------------------------------------------------------


def _plan(cfg: RunConfig, which: str) -> list:
    conditions = []

    def add(**kw):
        conditions.append(
            Condition(experiment=which, index=len(conditions), **kw)
        )

    if which == "calibration":
        # b is forced to zero: the null of no social influence holds.
        for a in cfg.a_grid:
            for beta in cfg.beta_grid:
                add(
                    a=a, b=0.0, beta=beta, omega_true=cfg.omega_true,
                    omega_test=cfg.omega_true, length=cfg.cascade_length,
                    mode="full", tests=cfg.tests,
                )
    elif which == "power":
        for b in cfg.b_grid:
            add(
                a=cfg.a_high, b=b, beta=cfg.beta_high, omega_true=cfg.omega_true,
                omega_test=cfg.omega_true, length=cfg.cascade_length,
                mode="full", tests=cfg.tests,
            )
    elif which == "misspec":
        for b in (0.0, 1.0):
            for omega_test in cfg.omega_test:
                add(
                    a=cfg.a_high, b=b, beta=cfg.beta_high,
                    omega_true=cfg.omega_true, omega_test=omega_test,
                    length=cfg.cascade_length, mode="full",
                    tests=tuple(t for t in cfg.tests if t in ("ranker", "hp")),
                )
    elif which == "missing":
        for length in cfg.missing_lengths:
            for mode in cfg.missing_modes:
                for b in (0.0, 1.0):
                    add(
                        a=cfg.a_high, b=b, beta=cfg.beta_high,
                        omega_true=cfg.omega_true, omega_test=cfg.omega_true,
                        length=int(length), mode=mode,
                        tests=tuple(t for t in cfg.tests if t in ("ranker", "hp")),
                    )
    else:
        raise DataValidationError(f"unknown experiment {which!r}")
    if not conditions:
        raise DataValidationError(f"experiment {which!r} has an empty condition plan")
    return conditions


def build_network(cfg: RunConfig) -> Network:
    if cfg.network_path:
        return load_network(cfg.network_path)
    return generate_network(
        cfg.network_kind, cfg.network_nodes, cfg.network_param, cfg.network_seed
    )


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------


def _run_cell(args):
    cfg, net, embedding, cond, cascade_index = args
    sim_seed = cell_seed(cfg.master_seed, cond.index, cascade_index)
    degrade_seed = splitmix64(sim_seed + 1)
    test_seed = splitmix64(sim_seed + 2)
    base = {
        "experiment": cond.experiment,
        "a": cond.a,
        "b": cond.b,
        "beta": cond.beta,
        "omega_true": cond.omega_true,
        "omega_test": cond.omega_test,
        "length": cond.length,
        "mode": cond.mode,
        "cascade": cascade_index,
    }
    rows = []
    with warnings.catch_warnings():
        # short degraded cascades warn in fit(); routine here
        warnings.simplefilter("ignore")
        try:
            params = HawkesParams(
                a=cond.a, b=cond.b, beta=cond.beta, eta=cfg.eta, omega=cond.omega_true
            )
            cascade = simulate(
                params, net, embedding, cond.length, sim_seed,
                allow_supercritical=True,
            )
            if cond.mode == "random":
                cascade = degrade_mod.drop_random(cascade, cfg.drop_rate, degrade_seed)
            elif cond.mode == "doubly_censored":
                cascade = degrade_mod.censor(cascade, cfg.drop_rate)
        except Exception as exc:  # noqa: BLE001 - sweeps never abort
            for test in cond.tests:
                rows.append(dict(base, test=test, p_value="", status=f"error: {exc}"))
            return cascade_index, rows

        split = cfg.split if cond.mode == "full" else cfg.missing_split
        for test in cond.tests:
            try:
                if test == "ranker":
                    report = influence_tests.ranker_influence_test(
                        net, embedding, cascade, split=split, seed=test_seed,
                        n_perm=cfg.n_perm, omega=cond.omega_test,
                        learning_rate=cfg.learning_rate,
                    )
                elif test == "hp":
                    report = influence_tests.hp_influence_test(
                        net, embedding, cascade, omega=cond.omega_test
                    )
                elif test == "shuffle":
                    report = influence_tests.shuffle_test(
                        net, cascade, n_shuffles=cfg.n_shuffles, seed=test_seed
                    )
                else:
                    raise DataValidationError(f"unknown test {test!r}")
                rows.append(dict(base, test=test, p_value=report.p_value, status="ok"))
            except Exception as exc:  # noqa: BLE001
                rows.append(dict(base, test=test, p_value="", status=f"error: {exc}"))
    return cascade_index, rows


def _cell_key(row) -> tuple:
    return tuple(_fmt(row[c]) for c in DETAIL_COLUMNS[:8]) + (int(row["cascade"]),)


def _read_journal(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            record["cascade"] = int(record["cascade"])
            record["length"] = int(record["length"])
            for col in ("a", "b", "beta", "omega_true", "omega_test"):
                record[col] = float(record[col])
            rows.append(record)
    return rows


def run_experiment(
    cfg: RunConfig,
    which: str,
    resume: bool = False,
    write_outputs: bool = False,
    progress: Optional[Callable[[str], None]] = None,
) -> ResultTable:
    """Run one sweep; see module docstring for determinism and layout."""
    conditions = _plan(cfg, which)
    net = build_network(cfg)
    embedding = spectral_embedding(net, min(cfg.embedding_dim, net.node_count - 1))

    out_dir = os.path.join(cfg.output_dir, which)
    journal_path = os.path.join(out_dir, "partial.csv")
    done_rows: list = []
    done_cells: set = set()
    if write_outputs:
        os.makedirs(out_dir, exist_ok=True)
        if resume and os.path.exists(journal_path):
            prior = _read_journal(journal_path)
            by_cell: dict = {}
            for row in prior:
                by_cell.setdefault(_cell_key(row), []).append(row)
            for key, rows in by_cell.items():
                matching = [
                    c for c in conditions
                    if _cell_key(dict(
                        experiment=c.experiment, a=c.a, b=c.b, beta=c.beta,
                        omega_true=c.omega_true, omega_test=c.omega_test,
                        length=c.length, mode=c.mode, cascade=rows[0]["cascade"],
                    )) == key
                ]
                if matching and {r["test"] for r in rows} >= set(matching[0].tests):
                    done_rows.extend(rows)
                    done_cells.add(key)

    cells = []
    for cond in conditions:
        for cascade_index in range(cfg.n_cascades):
            probe = dict(
                experiment=cond.experiment, a=cond.a, b=cond.b, beta=cond.beta,
                omega_true=cond.omega_true, omega_test=cond.omega_test,
                length=cond.length, mode=cond.mode, cascade=cascade_index,
            )
            if _cell_key(probe) not in done_cells:
                cells.append((cfg, net, embedding, cond, cascade_index))

    journal = None
    journal_writer = None
    if write_outputs:
        fresh = not (resume and os.path.exists(journal_path) and done_rows)
        journal = open(journal_path, "a" if not fresh else "w", encoding="utf-8", newline="\n")
        journal_writer = csv.writer(journal, lineterminator="\n")
        if fresh:
            journal_writer.writerow(DETAIL_COLUMNS)
            for row in done_rows:  # pragma: no cover - fresh implies none
                journal_writer.writerow([_fmt(row[c]) for c in DETAIL_COLUMNS])

    rows = list(done_rows)
    total = len(cells) + len(done_cells)
    finished = len(done_cells)
    try:
        if cfg.jobs <= 1:
            for cell in cells:
                _, cell_rows = _run_cell(cell)
                rows.extend(cell_rows)
                finished += 1
                if journal_writer is not None:
                    for row in cell_rows:
                        journal_writer.writerow([_fmt(row[c]) for c in DETAIL_COLUMNS])
                    journal.flush()
                if progress is not None:
                    progress(f"{which}: {finished}/{total} cells")
        else:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                futures = [pool.submit(_run_cell, cell) for cell in cells]
                for future in as_completed(futures):
                    _, cell_rows = future.result()
                    rows.extend(cell_rows)
                    finished += 1
                    if journal_writer is not None:
                        for row in cell_rows:
                            journal_writer.writerow(
                                [_fmt(row[c]) for c in DETAIL_COLUMNS]
                            )
                        journal.flush()
                    if progress is not None:
                        progress(f"{which}: {finished}/{total} cells")
    finally:
        if journal is not None:
            journal.close()

    table = ResultTable(experiment=which, rows=rows, alphas=cfg.alphas)
    if write_outputs:
        table.write_detail(os.path.join(out_dir, "detail.csv"))
        table.write_summary(os.path.join(out_dir, "summary.csv"))
    return table


def run_calibration(cfg: RunConfig, **kw) -> ResultTable:
    """Null-hypothesis sweep (b = 0) over (a, beta); the p-value columns
    feed QQ plots against the uniform diagonal."""
    return run_experiment(cfg, "calibration", **kw)


def run_power(cfg: RunConfig, **kw) -> ResultTable:
    """Power sweep over the b grid at fixed high homophily and
    self-excitation."""
    return run_experiment(cfg, "power", **kw)


def run_misspec(cfg: RunConfig, **kw) -> ResultTable:
    """Generate at omega_true, test each omega in omega_test, under both
    b = 0 (validity) and b = 1 (power)."""
    return run_experiment(cfg, "misspec", **kw)


def run_missing(cfg: RunConfig, **kw) -> ResultTable:
    """Degrade cascades (random drop / double censoring) before testing,
    across the configured pre-drop lengths."""
    return run_experiment(cfg, "missing", **kw)
