"""Run orchestration: seed sweep, report assembly, exit-code contract."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .commands import COMMANDS
from .config import config_hash
from .report import manifest, to_plain, write_json, write_table

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
THREADS_ENV = "SLSBOUNDS_THREADS"


def _workers():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def execute(cfg) -> tuple[dict, dict]:
    """Run every seed of a validated config; returns ``(report, tables)``.

    Seeds may run on a thread pool (``SLSBOUNDS_THREADS``); results are
    collected in seed order so the report does not depend on scheduling.
    """
    fn = COMMANDS[cfg["command"]]
    seeds = list(cfg["seeds"])
    with ThreadPoolExecutor(_workers()) as ex:
        outs = list(ex.map(lambda s: fn(cfg, s), seeds))
    runs, tables = [], {}
    n_cert = n_hard = n_viol = 0
    for seed, (results, certs, tabs) in zip(seeds, outs):
        runs.append({"seed": seed, "results": results, "certificates": certs})
        for c in certs:
            n_cert += 1
            if c.params.get("hard", True):
                n_hard += 1
                n_viol += int(not c.holds)
        for name, rows in tabs.items():
            tables.setdefault(name, []).extend(rows)
    report = {"command": cfg["command"], "x": cfg["x"], "seeds": seeds,
              "tolerances": cfg["tolerances"], "runs": runs,
              "summary": {"certificates": n_cert, "hard_certificates": n_hard,
                          "violations": n_viol, "all_hold": n_viol == 0}}
    return to_plain(report), tables


def run(cfg) -> int:
    """Execute, write ``report.json``, ``tables/*.csv``, ``manifest.json``; return exit code."""
    out = cfg.get("output_dir") or os.path.join("runs", cfg["command"])
    report, tables = execute(cfg)
    os.makedirs(os.path.join(out, "tables"), exist_ok=True)
    write_json(os.path.join(out, "report.json"), report)
    for name, rows in tables.items():
        write_table(os.path.join(out, "tables", f"{name}.csv"), rows)
    write_json(os.path.join(out, "manifest.json"), manifest(cfg, config_hash(cfg)))
    return EXIT_OK if report["summary"]["all_hold"] else EXIT_VIOLATION
