"""Command-line front end: simulate | generate | evaluate.

Every subcommand writes a flat key=value manifest next to its outputs;
re-running from a manifest (see :func:`replay`) reproduces the output files
byte for byte. Exit codes: 0 success, 2 usage error, 3 data error,
4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import stream
from .dataset import (
    DataError,
    MaskedDataset,
    load_csv,
    write_csv,
)
from .evaluate import energy_distance, quantile, standardized_energy
from .flow import MEDIAN_BANDWIDTH, FlowConfig, NumericalAbort, run
from .simulate import (
    FAMILIES,
    SyntheticSpec,
    amputate,
    sample_gaussian,
    sample_uniform_copula,
    three_pattern_mechanism,
)
from .velocity import LinearSolveError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

MANIFEST_NAME = "manifest.txt"

GENERATE_DEFAULTS = {
    "eta": 0.01,
    "steps": 1000,
    "sigma": MEDIAN_BANDWIDTH,
    "standardize": True,
    "n_tilde": None,
    "seed": 0,
    "threads": 1,
    "trace": False,
    "min_unique_frac": None,
    "missing_token": "NA",
}


class UsageError(ValueError):
    """Bad arguments detected after parsing."""


def write_manifest(path: Path, entries: dict[str, object]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path: Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def _read_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


@dataclass
class GenerateOptions:
    input: Path
    out: Path
    eta: float
    steps: int
    sigma: str | float
    standardize: bool
    n_tilde: int | None
    seed: int
    threads: int
    trace: bool
    min_unique_frac: float | None
    missing_token: str


def _resolve_generate_options(args: argparse.Namespace) -> GenerateOptions:
    """Apply precedence: CLI flag > config file > built-in default."""
    config = _read_config_file(args.config) if args.config else {}

    def pick(flag_value, key: str, cast):
        if flag_value is not None:
            return flag_value
        if key in config:
            return cast(config[key])
        return GENERATE_DEFAULTS[key]

    sigma = pick(args.sigma, "sigma", str)
    if isinstance(sigma, str) and sigma not in (MEDIAN_BANDWIDTH, "median-heuristic"):
        try:
            sigma = float(sigma)
        except ValueError:
            raise UsageError(f"--sigma must be a float or 'median', got {sigma!r}") from None
    standardize = pick(
        False if args.no_standardize else None, "standardize", _parse_bool
    )
    n_tilde = pick(args.n_tilde, "n_tilde", lambda s: None if s == "None" else int(s))
    return GenerateOptions(
        input=Path(args.input),
        out=Path(args.out),
        eta=pick(args.eta, "eta", float),
        steps=pick(args.steps, "steps", int),
        sigma=sigma,
        standardize=standardize,
        n_tilde=n_tilde,
        seed=pick(args.seed, "seed", int),
        threads=pick(args.threads, "threads", int),
        trace=pick(True if args.trace else None, "trace", _parse_bool),
        min_unique_frac=pick(args.min_unique_frac, "min_unique_frac", float),
        missing_token=pick(args.missing_token, "missing_token", str),
    )


def _filter_low_unique_columns(ds: MaskedDataset, min_frac: float) -> MaskedDataset:
    """Drop columns whose observed entries have too few distinct values."""
    keep = []
    for j in range(ds.d):
        observed = ds.observed_column(j)
        if observed.size and np.unique(observed).size / observed.size >= min_frac:
            keep.append(j)
    if not keep:
        raise DataError("no column passes the unique-value filter")
    if len(keep) == ds.d:
        return ds
    keep_arr = np.array(keep)
    return MaskedDataset(
        ds.values[:, keep_arr],
        ds.mask[:, keep_arr],
        tuple(ds.column_names[j] for j in keep),
    )


def cmd_generate(opts: GenerateOptions) -> int:
    started = time.perf_counter()
    out = opts.out
    out.mkdir(parents=True, exist_ok=True)
    ds = load_csv(opts.input, missing_token=opts.missing_token)
    if opts.min_unique_frac is not None:
        ds = _filter_low_unique_columns(ds, opts.min_unique_frac)
    config = FlowConfig(
        step_size=opts.eta,
        max_steps=opts.steps,
        bandwidth=opts.sigma,
        standardize=opts.standardize,
        sample_size=opts.n_tilde,
        seed=opts.seed,
        threads=opts.threads,
        trace=opts.trace,
        trace_path=out / "trace.csv" if opts.trace else None,
    )
    generated, report = run(ds, config)
    write_csv(
        MaskedDataset.complete(generated, ds.column_names),
        out / "generated.csv",
        missing_token=opts.missing_token,
    )
    report_payload = {
        "steps_run": report.steps_run,
        "stopped_early": report.stopped_early,
        "sigma": report.sigma,
        "eta_final": report.eta_history[-1][1],
        "eta_history": [[t, e] for t, e in report.eta_history],
        "relative_change_final": (
            report.relative_change_history[-1] if report.relative_change_history else None
        ),
        "kernel_underflow_count": report.kernel_underflow_count,
        "n_rows": ds.n,
        "n_columns": ds.d,
    }
    (out / "flow_report.json").write_text(
        json.dumps(report_payload, indent=2) + "\n", encoding="utf-8"
    )
    write_manifest(
        out / MANIFEST_NAME,
        {
            "subcommand": "generate",
            "tool_version": __version__,
            "input": opts.input,
            "out": out,
            "eta": opts.eta,
            "steps": opts.steps,
            "sigma": opts.sigma,
            "sigma_resolved": report.sigma,
            "standardize": opts.standardize,
            "n_tilde": "" if opts.n_tilde is None else opts.n_tilde,
            "seed": opts.seed,
            "threads": opts.threads,
            "trace": opts.trace,
            "min_unique_frac": "" if opts.min_unique_frac is None else opts.min_unique_frac,
            "missing_token": opts.missing_token,
            "steps_run": report.steps_run,
            "stopped_early": report.stopped_early,
            "duration_s": f"{time.perf_counter() - started:.3f}",
        },
    )
    return EXIT_OK


@dataclass
class SimulateOptions:
    family: str
    n: int
    seed: int
    dependence: float
    out: Path


def cmd_simulate(opts: SimulateOptions) -> int:
    started = time.perf_counter()
    out = opts.out
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec(opts.family, opts.n, opts.dependence, opts.seed)
    sampler = sample_uniform_copula if opts.family == "uniform_copula" else sample_gaussian
    train = sampler(spec, rng=stream(opts.seed, "simulate", 0))
    heldout = sampler(spec, rng=stream(opts.seed, "simulate", 1))
    mech = three_pattern_mechanism(opts.family)
    masked = amputate(train, mech, stream(opts.seed, "ampute"))
    write_csv(MaskedDataset.complete(train), out / "train_complete.csv")
    write_csv(masked, out / "train_masked.csv")
    write_csv(MaskedDataset.complete(heldout), out / "heldout_complete.csv")
    write_manifest(
        out / MANIFEST_NAME,
        {
            "subcommand": "simulate",
            "tool_version": __version__,
            "family": opts.family,
            "n": opts.n,
            "seed": opts.seed,
            "dependence": opts.dependence,
            "out": out,
            "duration_s": f"{time.perf_counter() - started:.3f}",
        },
    )
    return EXIT_OK


@dataclass
class EvaluateOptions:
    generated: Path
    heldout: Path
    out: Path


def cmd_evaluate(opts: EvaluateOptions) -> int:
    started = time.perf_counter()
    out = opts.out
    out.mkdir(parents=True, exist_ok=True)
    generated = load_csv(opts.generated).require_complete()
    heldout = load_csv(opts.heldout).require_complete()
    if generated.shape[1] != heldout.shape[1]:
        raise UsageError(
            f"column mismatch: {opts.generated} has {generated.shape[1]}, "
            f"{opts.heldout} has {heldout.shape[1]}"
        )
    report = standardized_energy(generated, heldout)
    e2_raw = energy_distance(generated, heldout)
    q10 = [quantile(generated[:, j], 0.1) for j in range(generated.shape[1])]
    header = ["e2_standardized", "e2_raw"] + [f"q10_col{j + 1}" for j in range(len(q10))]
    values = [format(v, ".17g") for v in [report.e2, e2_raw, *q10]]
    (out / "report.csv").write_text(
        ",".join(header) + "\n" + ",".join(values) + "\n", encoding="utf-8"
    )
    write_manifest(
        out / MANIFEST_NAME,
        {
            "subcommand": "evaluate",
            "tool_version": __version__,
            "generated": opts.generated,
            "heldout": opts.heldout,
            "out": out,
            "duration_s": f"{time.perf_counter() - started:.3f}",
        },
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="missflow",
        description="Generate a complete sample from a dataset with values missing at random.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic benchmark dataset")
    p_sim.add_argument("--family", choices=FAMILIES, required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--dependence", type=float, default=0.7)
    p_sim.add_argument("--out", required=True)

    p_gen = sub.add_parser("generate", help="run the particle flow on a masked CSV")
    p_gen.add_argument("input", help="CSV with missing-value tokens")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--eta", type=float, default=None, help="step size (default 0.01)")
    p_gen.add_argument("--steps", type=int, default=None, help="max steps (default 1000)")
    p_gen.add_argument("--sigma", default=None, help="bandwidth: float or 'median'")
    p_gen.add_argument("--no-standardize", action="store_true")
    p_gen.add_argument("--n-tilde", dest="n_tilde", type=int, default=None)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--threads", type=int, default=None)
    p_gen.add_argument("--trace", action="store_true")
    p_gen.add_argument(
        "--min-unique-frac",
        dest="min_unique_frac",
        type=float,
        nargs="?",
        const=0.1,
        default=None,
        help="drop columns with a lower fraction of distinct observed values "
        "(bare flag uses 0.1); off unless given",
    )
    p_gen.add_argument("--missing-token", dest="missing_token", default=None)
    p_gen.add_argument("--config", default=None, help="key=value config file")

    p_eval = sub.add_parser("evaluate", help="score a generated sample against a held-out one")
    p_eval.add_argument("generated")
    p_eval.add_argument("heldout")
    p_eval.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.subcommand == "simulate":
            return cmd_simulate(
                SimulateOptions(args.family, args.n, args.seed, args.dependence, Path(args.out))
            )
        if args.subcommand == "generate":
            return cmd_generate(_resolve_generate_options(args))
        if args.subcommand == "evaluate":
            return cmd_evaluate(
                EvaluateOptions(Path(args.generated), Path(args.heldout), Path(args.out))
            )
        parser.error(f"unknown subcommand {args.subcommand!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalAbort, LinearSolveError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def replay(manifest_path: str | Path, out: str | Path | None = None) -> int:
    """Re-run the command recorded in a manifest, optionally into a new
    output directory; outputs are reproduced byte for byte."""
    entries = read_manifest(Path(manifest_path))
    sub = entries.get("subcommand")
    target = Path(out) if out is not None else Path(entries["out"])
    if sub == "simulate":
        return cmd_simulate(
            SimulateOptions(
                family=entries["family"],
                n=int(entries["n"]),
                seed=int(entries["seed"]),
                dependence=float(entries["dependence"]),
                out=target,
            )
        )
    if sub == "generate":
        sigma: str | float = entries["sigma"]
        if sigma not in (MEDIAN_BANDWIDTH, "median-heuristic"):
            sigma = float(sigma)
        return cmd_generate(
            GenerateOptions(
                input=Path(entries["input"]),
                out=target,
                eta=float(entries["eta"]),
                steps=int(entries["steps"]),
                sigma=sigma,
                standardize=_parse_bool(entries["standardize"]),
                n_tilde=int(entries["n_tilde"]) if entries["n_tilde"] else None,
                seed=int(entries["seed"]),
                threads=int(entries["threads"]),
                trace=_parse_bool(entries["trace"]),
                min_unique_frac=(
                    float(entries["min_unique_frac"]) if entries["min_unique_frac"] else None
                ),
                missing_token=entries["missing_token"],
            )
        )
    if sub == "evaluate":
        return cmd_evaluate(
            EvaluateOptions(Path(entries["generated"]), Path(entries["heldout"]), target)
        )
    raise UsageError(f"manifest has unknown subcommand {sub!r}")


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
