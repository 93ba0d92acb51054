"""File formats, run configuration, and seeded RNG utilities.

Formats:
  cascade CSV   header "time,source", one event per row, times as exact
                decimal strings, trailing metadata "# horizon=<T> seed=<s>"
  covariates    CSV with header "node,attr_name,attr_value"
  config        sectioned key=value text, '#' comments, grids either
                "start:stop:step" (inclusive) or comma lists

Randomness is re-exported from :mod:`cascade_influence.seeding`: one
documented counter-based generator (Philox-4x64-10) rather than the
platform default, so every statistical quantity in the package replays
across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .exceptions import ConfigError, DataValidationError
from .hawkes import Cascade
from .netgraph import Network
from .seeding import SeedStream, cell_seed, seed_stream  # noqa: F401  (public surface)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Fully-validated knobs for the experiment harness.

    Defaults are desk-scale: a generated ~300-node network and 50
    cascades of 1500 events per condition.
    """

    # [network]
    network_kind: str = "preferential_attachment"
    network_nodes: int = 300
    network_param: float = 1
    network_seed: int = 11
    network_path: Optional[str] = None

    # [cascade]
    cascade_length: int = 1500
    n_cascades: int = 50
    eta: float = -5.0
    omega_true: float = 1.0

    # [grids]
    a_grid: tuple = (0.0, 0.5)
    b_grid: tuple = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    beta_grid: tuple = (7.0,)
    omega_test: tuple = (0.25, 1.0, 4.0)
    a_high: float = 0.5
    beta_high: float = 7.0

    # [missing]
    missing_lengths: tuple = (5000, 10000)
    drop_rate: float = 0.99
    missing_modes: tuple = ("random", "doubly_censored")
    missing_split: float = 0.3

    # [tests]
    tests: tuple = ("ranker", "hp", "shuffle")
    alphas: tuple = (0.05,)
    n_perm: int = 2000
    n_shuffles: int = 1000
    split: float = 0.3
    embedding_dim: int = 8
    learning_rate: float = 0.02

    # [run]
    master_seed: int = 20260809
    jobs: int = 1
    output_dir: str = "results"


_SCHEMA = {
    ("network", "kind"): ("network_kind", "choice:erdos_renyi_directed,preferential_attachment"),
    ("network", "nodes"): ("network_nodes", "int:10:100000"),
    ("network", "param"): ("network_param", "float:0:1000"),
    ("network", "seed"): ("network_seed", "int"),
    ("network", "path"): ("network_path", "str"),
    ("cascade", "length"): ("cascade_length", "int:1:10000000"),
    ("cascade", "n_cascades"): ("n_cascades", "int:2:100000"),
    ("cascade", "eta"): ("eta", "float"),
    ("cascade", "omega_true"): ("omega_true", "float:1e-9:inf"),
    ("grids", "a_grid"): ("a_grid", "grid"),
    ("grids", "b_grid"): ("b_grid", "grid"),
    ("grids", "beta_grid"): ("beta_grid", "grid"),
    ("grids", "omega_test"): ("omega_test", "grid"),
    ("grids", "a_high"): ("a_high", "float:0:inf"),
    ("grids", "beta_high"): ("beta_high", "float"),
    ("missing", "lengths"): ("missing_lengths", "intgrid"),
    ("missing", "drop_rate"): ("drop_rate", "float:0:0.999999"),
    ("missing", "modes"): ("missing_modes", "strlist:random,doubly_censored"),
    ("missing", "split"): ("missing_split", "float:1e-9:0.999999"),
    ("tests", "run"): ("tests", "strlist:ranker,hp,shuffle"),
    ("tests", "alphas"): ("alphas", "grid"),
    ("tests", "n_perm"): ("n_perm", "int:100:10000000"),
    ("tests", "n_shuffles"): ("n_shuffles", "int:100:10000000"),
    ("tests", "split"): ("split", "float:1e-9:0.999999"),
    ("tests", "embedding_dim"): ("embedding_dim", "int:1:4096"),
    ("tests", "learning_rate"): ("learning_rate", "float:0:inf"),
    ("run", "master_seed"): ("master_seed", "int"),
    ("run", "jobs"): ("jobs", "int:1:1024"),
    ("run", "output_dir"): ("output_dir", "str"),
}


def _parse_number_list(raw: str, errors, where: str, as_int=False):
    """Grid syntax: "start:stop:step" inclusive, or a comma list."""
    raw = raw.strip()
    try:
        if ":" in raw:
            parts = raw.split(":")
            if len(parts) != 3:
                raise ValueError("expected start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if step <= 0:
                raise ValueError("step must be > 0")
            if stop < start:
                raise ValueError("stop must be >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = tuple(round(start + i * step, 12) for i in range(count))
        else:
            values = tuple(float(p) for p in raw.split(",") if p.strip() != "")
        if not values:
            raise ValueError("empty list")
        if as_int:
            for v in values:
                if v != int(v):
                    raise ValueError(f"expected integers, got {v}")
            values = tuple(int(v) for v in values)
        return values
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
        return None


def _convert(raw: str, spec: str, errors, where: str):
    kind, _, rest = spec.partition(":")
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "choice":
        options = rest.split(",")
        if raw not in options:
            errors.append(f"{where}: must be one of {options}, got {raw!r}")
            return None
        return raw
    if kind == "strlist":
        options = set(rest.split(","))
        values = tuple(p.strip() for p in raw.split(",") if p.strip())
        bad = [v for v in values if v not in options]
        if bad or not values:
            errors.append(f"{where}: entries must be from {sorted(options)}, got {raw!r}")
            return None
        return values
    if kind == "int":
        try:
            value = int(raw)
        except ValueError:
            errors.append(f"{where}: expected an integer, got {raw!r}")
            return None
        if rest:
            lo, hi = rest.split(":")
            if value < int(lo) or value > int(hi):
                errors.append(f"{where}: {value} outside [{lo}, {hi}]")
                return None
        return value
    if kind == "float":
        try:
            value = float(raw)
        except ValueError:
            errors.append(f"{where}: expected a number, got {raw!r}")
            return None
        if rest:
            lo, hi = rest.split(":")
            if value < float(lo) or value > float(hi):
                errors.append(f"{where}: {value} outside [{lo}, {hi}]")
                return None
        return value
    if kind == "grid":
        return _parse_number_list(raw, errors, where)
    if kind == "intgrid":
        return _parse_number_list(raw, errors, where, as_int=True)
    raise AssertionError(f"unknown schema kind {kind}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a config; raises ConfigError carrying every
    problem found (unknown key, bad value, bad section), each with its
    line number. An empty config yields all defaults."""
    errors = []
    values = {}
    section = None
    known_sections = {s for (s, _) in _SCHEMA}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in known_sections:
                errors.append(f"line {lineno}: unknown section [{section}]")
                section = None
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value, got {line!r}")
            continue
        key, _, raw_value = line.partition("=")
        key = key.strip()
        if section is None:
            errors.append(f"line {lineno}: key {key!r} outside any section")
            continue
        schema = _SCHEMA.get((section, key))
        if schema is None:
            errors.append(f"line {lineno}: unknown key {key!r} in section [{section}]")
            continue
        field_name, spec = schema
        converted = _convert(raw_value, spec, errors, f"line {lineno}: {key}")
        if converted is not None:
            values[field_name] = converted
    if errors:
        raise ConfigError(errors)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# Cascade files
# ---------------------------------------------------------------------------


def _format_time(t: float) -> str:
    return np.format_float_positional(t, unique=True, trim="0")


def write_cascade(cascade: Cascade, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time,source\n")
        for t, s in zip(cascade.times, cascade.sources):
            fh.write(f"{_format_time(float(t))},{int(s)}\n")
        seed_repr = "none" if cascade.seed is None else str(cascade.seed)
        fh.write(f"# horizon={_format_time(float(cascade.horizon))} seed={seed_repr}\n")


def read_cascade(path) -> Cascade:
    times = []
    sources = []
    horizon = None
    seed: Optional[int] = None
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataValidationError(f"{path}: empty cascade file")
    start = 0
    if lines[0].strip().lower().replace(" ", "") == "time,source":
        start = 1
    for lineno, line in enumerate(lines[start:], start=start + 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                if token.startswith("horizon="):
                    horizon = float(token[8:])
                elif token.startswith("seed="):
                    raw = token[5:]
                    seed = None if raw == "none" else int(raw)
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataValidationError(
                f"{path}:{lineno}: expected 'time,source', got {line!r}"
            )
        try:
            times.append(float(parts[0]))
            sources.append(int(parts[1]))
        except ValueError as exc:
            raise DataValidationError(f"{path}:{lineno}: {exc}") from exc
    if not times:
        raise DataValidationError(f"{path}: no events found")
    times_arr = np.asarray(times)
    if np.any(np.diff(times_arr) < 0):
        raise DataValidationError(f"{path}: cascade not time-ordered")
    if horizon is None:
        horizon = float(times_arr[-1])
    return Cascade(
        times=times_arr,
        sources=np.asarray(sources, dtype=np.int64),
        horizon=horizon,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Covariates
# ---------------------------------------------------------------------------


def read_covariates(path) -> dict:
    """CSV "node,attr_name,attr_value" -> {attr: {node: value}}."""
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip().lower().replace(" ", "") != "node,attr_name,attr_value":
        raise DataValidationError(f"{path}: missing 'node,attr_name,attr_value' header")
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataValidationError(
                f"{path}:{lineno}: expected 'node,attr_name,attr_value'"
            )
        try:
            node = int(parts[0])
        except ValueError as exc:
            raise DataValidationError(f"{path}:{lineno}: bad node id {parts[0]!r}") from exc
        out.setdefault(parts[1].strip(), {})[node] = parts[2].strip()
    return out


def attach_covariates(net: Network, covariates: dict) -> Network:
    """Return a copy of the network carrying the given covariates as
    length-M tuples (None where a node has no value)."""
    tables = {}
    for attr, mapping in covariates.items():
        column = [None] * net.node_count
        for node, value in mapping.items():
            if not 0 <= node < net.node_count:
                raise DataValidationError(
                    f"covariate {attr!r}: node {node} outside network"
                )
            column[node] = value
        tables[attr] = tuple(column)
    return Network(
        node_count=net.node_count,
        edges=net.edges,
        directed=net.directed,
        covariates=tables,
    )
