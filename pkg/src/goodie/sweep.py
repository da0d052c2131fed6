"""Missing-rate sweeps, result files and config parsing."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, fields
from itertools import product
from pathlib import Path

import numpy as np

from .data import SyntheticSpec
from .experiment import ExperimentConfig, run_cell
from .model import GoodieConfig
from .training import CSV_COLUMNS, RunResult

log = logging.getLogger(__name__)

THREADS_ENV = "GOODIE_THREADS"
_INT_COLS = {"seed", "epochs"}
_STR_COLS = {"method", "scenario"}


class SweepError(RuntimeError):
    def __init__(self, failures: dict):
        self.failures = failures
        lines = [f"{k}: {e}" for k, e in failures.items()]
        super().__init__(f"{len(failures)} cell(s) failed:\n" + "\n".join(lines))


# -- rows and files -----------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cell_key(method: str, scenario: str, mr, seed) -> tuple[str, str, str, int]:
    return (method, scenario, repr(float(mr)), int(seed))


def row_key(row: dict) -> tuple[str, str, str, int]:
    return cell_key(row["method"], row["scenario"], row["mr"], row["seed"])


def _normalize_row(row: dict) -> dict:
    out = {}
    for col in CSV_COLUMNS:
        v = row.get(col)
        if isinstance(v, RunResult):
            v = getattr(v, col)
        if v == "" or v is None:
            out[col] = None
        elif col in _STR_COLS:
            out[col] = str(v)
        elif col in _INT_COLS:
            out[col] = int(v)
        else:
            out[col] = float(v)
    return out


def render_results(rows, fmt: str = "csv") -> str:
    rows = [_normalize_row(r.row() if isinstance(r, RunResult) else r) for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps(rows, indent=1) + "\n"
    raise ValueError(f"unknown result format {fmt!r}; expected csv or json")


def emit_results(rows, path, fmt: str = "csv") -> None:
    """Write rows atomically with a fixed column order."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(render_results(rows, fmt), encoding="utf-8")
    os.replace(tmp, path)


def read_results(path, fmt: str | None = None) -> list[dict]:
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    text = path.read_text(encoding="utf-8")
    if fmt == "json":
        return [_normalize_row(r) for r in json.loads(text)]
    return [_normalize_row(r) for r in csv.DictReader(io.StringIO(text))]


# -- aggregation ----------------------------------------------------------------


@dataclass
class CellSummary:
    method: str
    scenario: str
    mr: float
    n: int
    metric: str
    mean: float
    std: float


def aggregate(rows, metric: str = "test_acc") -> list[CellSummary]:
    """Mean and population standard deviation (ddof=0) per (method, scenario, mr)."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        r = r.row() if isinstance(r, RunResult) else r
        v = r.get(metric)
        if v is None or v == "":
            continue
        groups.setdefault((r["method"], r["scenario"], float(r["mr"])), []).append(float(v))
    return [
        CellSummary(m, s, mr, len(vals), metric, float(np.mean(vals)), float(np.std(vals)))
        for (m, s, mr), vals in groups.items()
    ]


def format_summary(summaries: list[CellSummary]) -> str:
    lines = [f"{'method':<10} {'scenario':<11} {'mr':>7} {'n':>3}  metric"]
    for c in summaries:
        lines.append(f"{c.method:<10} {c.scenario:<11} {c.mr:>7.4g} {c.n:>3}  "
                     f"{c.metric}={100 * c.mean:.2f} +- {100 * c.std:.2f}")
    return "\n".join(lines)


# -- sweep ----------------------------------------------------------------------


def sweep_cells(cfg: ExperimentConfig):
    """Cells in canonical order: missing rate, then seed, then method."""
    return [(m, cfg.scenario, mr, seed)
            for mr, seed, m in product(cfg.mr_grid, cfg.seeds, cfg.methods)]


def _worker(cfg: ExperimentConfig, cell):
    method, scenario, mr, seed = cell
    return run_cell(cfg.load_data(), method, scenario, mr, seed, cfg).row()


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    return max(1, int(raw)) if raw else 1


def sweep(cfg: ExperimentConfig, data=None, workers: int | None = None) -> list[dict]:
    """Run every cell, skipping those already present in ``cfg.out``.

    The output file is rewritten after each finished cell, so an interrupted
    sweep resumes where it stopped. Raises :class:`SweepError` if any cell
    failed (after the others have been written).
    """
    cells = sweep_cells(cfg)
    done: dict[tuple, dict] = {}
    if cfg.out and Path(cfg.out).exists():
        for r in read_results(cfg.out, cfg.format):
            done[row_key(r)] = r
    todo = [c for c in cells if cell_key(*c) not in done]
    if len(todo) < len(cells):
        log.info("resuming: %d of %d cells already done", len(cells) - len(todo), len(cells))

    def ordered():
        return [done[cell_key(*c)] for c in cells if cell_key(*c) in done]

    def flush():
        if cfg.out:
            emit_results(ordered(), cfg.out, cfg.format)

    failures = {}
    workers = workers or thread_cap()
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(_worker, cfg, c): c for c in todo}
            for fut in as_completed(futs):
                c = futs[fut]
                try:
                    done[cell_key(*c)] = _normalize_row(fut.result())
                except Exception as exc:  # noqa: BLE001 - reported per cell
                    failures[c] = exc
                    continue
                flush()
    else:
        data = data if data is not None else cfg.load_data()
        for c in todo:
            try:
                done[cell_key(*c)] = _normalize_row(run_cell(data, *c, cfg).row())
            except Exception as exc:  # noqa: BLE001
                log.error("cell %s failed: %s", c, exc)
                failures[c] = exc
                continue
            log.info("cell %s done", c)
            flush()
    flush()
    if failures:
        raise SweepError(failures)
    return ordered()


# -- config files -----------------------------------------------------------------


# "seed" names the run seeds; the graph generator seed is "data_seed".
_SYNTH_KEYS = ({f.name for f in fields(SyntheticSpec)} - {"seed"}) | {"data_seed"}
_GOODIE_KEYS = {f.name for f in fields(GoodieConfig)} | {"lambda"}


def parse_list(raw: str, kind=float) -> tuple:
    items = []
    for part in raw.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if kind is int and "-" in part[1:]:
            lo, hi = part.split("-", 1)
            items.extend(range(int(lo), int(hi) + 1))
        else:
            items.append(kind(part))
    return tuple(items)


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(values: dict[str, str]) -> ExperimentConfig:
    synth, goodie, kw = {}, {}, {}
    for key, val in values.items():
        if key in _SYNTH_KEYS:
            synth["seed" if key == "data_seed" else key] = val
        elif key in _GOODIE_KEYS:
            goodie[key] = val
        elif key in ("mr", "mr_grid"):
            kw["mr_grid"] = parse_list(val, float)
        elif key in ("seed", "seeds"):
            kw["seeds"] = parse_list(val, int)
        elif key in ("method", "methods"):
            kw["methods"] = tuple(m.strip() for m in val.split(",") if m.strip())
        elif key in ("per_class_train", "n_val"):
            kw[key] = None if val.lower() in ("", "none", "auto") else int(val)
        elif key == "record_time":
            kw[key] = val.lower() in ("1", "true", "yes", "on")
        elif key in ("dataset", "task", "scenario", "out", "format"):
            kw[key] = val or None
        else:
            raise ValueError(f"unknown config key {key!r}")
    spec_types = {f.name: f.type for f in fields(SyntheticSpec)}
    synth = {k: (int(v) if spec_types[k] == "int" else float(v)) for k, v in synth.items()}
    return ExperimentConfig(
        synthetic=SyntheticSpec(**synth),
        goodie=GoodieConfig.from_mapping(goodie),
        **{k: v for k, v in kw.items() if v is not None or k == "n_val"},
    )
