"""Command-line front end.

Runs one assessment method on a system description, writes a result
JSON plus convergence trace CSVs, and prints a one-line summary.  All
randomness comes from a single seeded PCG64 generator whose name is
pinned in the result file; rerunning an identical config reproduces the
result byte for byte apart from the isolated timing block.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import assessment, partition
from .errors import GridRelError
from .lattice import format_failed_ids
from .opf import DcOpf
from .partition import PartitionLedger, StopCriteria
from .system_model import SystemModel, fixture_path, load_system

PRNG_NAME = "numpy-pcg64"

METHODS = ("dichotomy", "se", "mcs", "dichotomy+fmcs")


@dataclass
class RunConfig:
    system_path: str
    method: str
    dn: int | None = None
    max_opf: int | None = None
    mixed_mass: float | None = None
    beta: float | None = None
    max_level: int | None = None
    max_samples: int | None = None
    seed: int = 0
    threads: int = 1
    out_dir: str = "out"
    classify_max: bool = False

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.method in ("dichotomy", "dichotomy+fmcs"):
            if self.dn is None and self.max_opf is None and self.mixed_mass is None:
                raise ValueError(
                    f"method {self.method} needs a stopping criterion "
                    "(--dn, --max-opf, or --mixed-mass)"
                )
        if self.method == "dichotomy+fmcs" and self.beta is None and self.max_samples is None:
            raise ValueError("method dichotomy+fmcs needs --beta (or --max-samples)")
        if self.method == "mcs" and self.beta is None and self.max_samples is None:
            raise ValueError("method mcs needs --beta (or --max-samples)")

    def stop_criteria(self) -> StopCriteria:
        return StopCriteria(
            max_opf=self.max_opf,
            mixed_mass_below=self.mixed_mass,
            avg_failed_prob_below=None if self.dn is None else 10.0 ** -self.dn,
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assess",
        description="Composite power-system reliability assessment "
        "(interval-partition, enumeration, and Monte Carlo methods).",
    )
    parser.add_argument("--system", required=True, help="system description JSON "
                        "(bundled fixtures rbts.json / rts79.json resolve by name)")
    parser.add_argument("--method", required=True, choices=METHODS)
    parser.add_argument("--dn", type=int, metavar="N",
                        help="stop partitioning when the rolling average failed-interval "
                        "probability drops below 1e-N")
    parser.add_argument("--max-opf", type=int, metavar="N",
                        help="cap on shedding evaluations for the partition")
    parser.add_argument("--mixed-mass", type=float, metavar="X",
                        help="stop partitioning once unclassified mass is below X")
    parser.add_argument("--beta", type=float, metavar="X",
                        help="coefficient-of-variation target for EENS sampling")
    parser.add_argument("--max-level", type=int, metavar="K",
                        help="enumerate states with at most K failed components (se)")
    parser.add_argument("--max-samples", type=int, metavar="N",
                        help="hard cap on Monte Carlo samples (mcs / dichotomy+fmcs)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap for shedding evaluations")
    parser.add_argument("--out", default="out", metavar="DIR")
    parser.add_argument("--classify-max", action="store_true",
                        help="also test interval maxima to retire normal intervals early")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        system_path=args.system,
        method=args.method,
        dn=args.dn,
        max_opf=args.max_opf,
        mixed_mass=args.mixed_mass,
        beta=args.beta,
        max_level=args.max_level,
        max_samples=args.max_samples,
        seed=args.seed,
        threads=args.threads,
        out_dir=args.out,
        classify_max=args.classify_max,
    )


def _resolve_system(path_str: str) -> Path:
    path = Path(path_str)
    if path.exists():
        return path
    try:
        return fixture_path(path.name)
    except FileNotFoundError:
        raise FileNotFoundError(f"system file not found: {path_str}")


def write_partition_trace(ledger: PartitionLedger, path: Path):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iteration", "opf_count", "lolp_lower", "mixed_mass", "failed_count", "elapsed_ms"]
        )
        for row in ledger.trace:
            writer.writerow(
                [row.iteration, row.opf_count, repr(row.lolp_lower),
                 repr(row.mixed_mass), row.failed_count, f"{row.elapsed_ms:.3f}"]
            )


def report_failed_lattices(ledger: PartitionLedger, path: Path):
    """Failed intervals in discovery order: minimum element, its shed,
    interval size as log2 of the state count, and probability mass."""
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["rank", "min_element_failed_ids", "shed_mw", "num_states_log2", "probability"]
        )
        for rank, item in enumerate(ledger.failed, start=1):
            writer.writerow(
                [
                    rank,
                    format_failed_ids(item.lattice.lo.failed_ids()),
                    repr(float(item.shed_mw)),
                    item.lattice.dimension,
                    repr(float(item.probability)),
                ]
            )


class SampleTraceWriter:
    """Per-sample trace: k,state_failed_ids,shed_mw,running_eens,beta."""

    def __init__(self, path: Path):
        self._fh = path.open("w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(["k", "state_failed_ids", "shed_mw", "running_eens", "beta"])

    def __call__(self, k, state, shed, running_eens, beta):
        self._writer.writerow(
            [k, format_failed_ids(state.failed_ids()), repr(float(shed)),
             repr(float(running_eens)), repr(float(beta)) if beta != float("inf") else "inf"]
        )

    def close(self):
        self._fh.close()


def run(config: RunConfig) -> dict:
    """Execute one assessment and write result artifacts.

    Returns the result document (also written to <out>/result.json).
    """
    config.validate()
    system_file = _resolve_system(config.system_path)
    model = load_system(system_file)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    solver = DcOpf(model)
    rng = np.random.default_rng(np.random.PCG64(config.seed))
    started = time.perf_counter()

    result: dict = {
        "config": asdict(config),
        "system": {
            "name": model.name,
            "components": model.n,
            "buses": len(model.buses),
            "total_capacity_mw": model.total_capacity_mw,
            "total_load_mw": model.total_load_mw,
            "sha256": hashlib.sha256(system_file.read_bytes()).hexdigest(),
        },
        "prng": PRNG_NAME,
    }

    ledger = None
    report = None
    if config.method in ("dichotomy", "dichotomy+fmcs"):
        ledger = partition.run_dichotomy(
            model, config.stop_criteria(), solver=solver, classify_max=config.classify_max
        )
        write_partition_trace(ledger, out_dir / "partition_trace.csv")
        report_failed_lattices(ledger, out_dir / "failed_lattices.csv")
        result["partition"] = {
            "lolp_lower": assessment.lolp_from_partition(ledger),
            "mixed_mass": ledger.mixed_mass,
            "normal_mass": ledger.normal_mass,
            "failed_count": len(ledger.failed),
            "opf_count": ledger.opf_count,
        }

    if config.method == "dichotomy":
        report = assessment.IndexReport(
            lolp=assessment.lolp_from_partition(ledger),
            eens=None, eens_stderr=None, beta=None,
            opf_evaluations=ledger.opf_count, samples=0, elapsed=0.0,
        )
    elif config.method == "dichotomy+fmcs":
        tracer = SampleTraceWriter(out_dir / "samples_trace.csv")
        try:
            report = assessment.fmcs_eens(
                model, ledger, config.beta, rng,
                max_samples=config.max_samples, solver=solver, trace_hook=tracer,
            )
        finally:
            tracer.close()
    elif config.method == "se":
        report = assessment.se_enumerate(model, config.max_level, solver=solver)
    elif config.method == "mcs":
        tracer = SampleTraceWriter(out_dir / "samples_trace.csv")
        try:
            report = assessment.mcs(
                model, config.beta, rng,
                max_samples=config.max_samples, solver=solver, trace_hook=tracer,
            )
        finally:
            tracer.close()

    result["report"] = report.to_dict()
    result["timing"] = {
        "elapsed_s": round(time.perf_counter() - started, 3),
        "method_elapsed_s": round(report.elapsed, 3),
    }

    (out_dir / "result.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(_summary_line(config, report))
    return result


def _summary_line(config: RunConfig, report: assessment.IndexReport) -> str:
    beta = f"{config.beta:g}" if config.beta is not None else "--"
    lolp = f"{report.lolp * 100:.5f}%"
    eens = f"{report.eens:.5f}" if report.eens is not None else "--"
    evals = report.opf_evaluations
    return (
        f"{config.method:<15s} beta={beta:<6s} LOLP={lolp:<10s} "
        f"EENS={eens:<10s} evals={evals}"
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = config_from_args(args)
    try:
        run(config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GridRelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
