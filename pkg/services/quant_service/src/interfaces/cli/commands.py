"""
mrsquant command line: basis generation, dataset generation, training,
quantification, evaluation and the HTTP service.

Exit codes: 0 success, 1 usage, 2 data/format, 3 numerical failure.
"""

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from src.application.basis_service import DEFAULT_DEFINITIONS_PATH, build_basis, load_definitions
from src.application.dataset_service import generate_dataset
from src.application.evaluation_service import SigmaVariant, evaluate
from src.application.nn.network import build_network
from src.application.nn.training import train
from src.application.quantification_service import NetworkQuantifier, NnlsQuantifier
from src.config.config import config
from src.config.logger_config import log, set_console_level
from src.core.exceptions import (
    EXIT_DATA,
    EXIT_OK,
    EXIT_USAGE,
    DivergenceError,
    FormatError,
    NoBasisError,
    QuantError,
    UsageError,
)
from src.domain.models import (
    InputConfig,
    NetworkConfig,
    PpmWindow,
    ReductionVariant,
    RunManifest,
    SizeVariant,
    Split,
    TrainConfig,
    default_window,
)
from src.domain.results import TrainingHistory
from src.domain.spectra import BasisSet, Dataset, Sample
from src.infrastructure.services import (
    basis_store,
    checkpoint_store,
    dataset_store,
    scan_store,
)
from src.infrastructure.storage.archive import PREAMBLE
from src.infrastructure.storage.report_store import (
    artifact_path,
    phantom_dataset,
    save_report,
    save_run_manifest,
)
from shared.libs.observability.metrics import (
    COMMAND_DURATION,
    COMMAND_FAILURES,
    write_metrics,
)

DATASET_SUFFIX = ".mrsd"
SPLIT_ORDER = (Split.TRAIN, Split.VALIDATION, Split.TEST)


@dataclass
class Outcome:
    """What a command read and wrote; `primary` anchors the manifest and metrics files."""

    primary: Path
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    seed: Optional[int] = None
    exit_code: int = EXIT_OK


def tool_version() -> str:
    try:
        return metadata.version("quant_service")
    except metadata.PackageNotFoundError:
        return "0.1.0"


# ---------------------------------------------------------------------------
# Argument parsing helpers
# ---------------------------------------------------------------------------


def parse_float_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"Expected a comma-separated list of numbers, got '{text}'") from e
    if not values:
        raise UsageError("Expected at least one value")
    return values


def parse_split(text: str, count: int) -> Dict[Split, int]:
    """
    Split `count` samples by weights such as `train=5000,val=1000,test=0`
    (or `train=5,val=1`). Rounding remainders go to the first split.
    """
    weights: Dict[Split, float] = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, _, value = part.partition("=")
        try:
            split = Split(name.strip().lower())
            weights[split] = float(value) if value.strip() else 1.0
        except ValueError as e:
            raise UsageError(f"Bad split entry '{part}' (expected train|val|test=weight)") from e
    total = sum(weights.values())
    if not weights or total <= 0.0 or any(w < 0.0 for w in weights.values()):
        raise UsageError(f"Split weights must be non-negative with a positive sum, got '{text}'")
    counts = {s: int(np.floor(count * w / total)) for s, w in weights.items()}
    first = next(iter(counts))
    counts[first] += count - sum(counts.values())
    return {s: counts[s] for s in SPLIT_ORDER if counts.get(s, 0) > 0}


def split_seed(seed: int, split: Split) -> int:
    """Independent noise seed per split derived from the command seed."""
    index = SPLIT_ORDER.index(split)
    state = np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint32)
    return int(state[0])


def input_config_from(args: argparse.Namespace, window: PpmWindow) -> InputConfig:
    try:
        return InputConfig.from_text(
            args.acquisitions,
            args.components,
            window=window,
            b0_correct=not args.no_b0,
        )
    except ValueError as e:
        raise UsageError(f"Invalid input configuration: {e}") from e


def _non_empty(dataset: Dataset, name: str) -> Dataset:
    if len(dataset) == 0:
        raise UsageError(f"Dataset {name} is empty")
    return dataset


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_basis(args: argparse.Namespace) -> Outcome:
    models = load_definitions(Path(args.defs))
    window = PpmWindow(
        high_ppm=args.window_high, low_ppm=args.window_low, bins=args.window_bins
    )
    bases = build_basis(
        models,
        parse_float_list(args.linewidths),
        window,
        samples=args.samples,
        bandwidth_hz=args.bandwidth,
    )
    out = Path(args.out)
    paths = basis_store.save_all(bases, out)
    return Outcome(primary=out, inputs=[str(args.defs)], outputs=[str(p) for p in paths])


def cmd_gen_dataset(args: argparse.Namespace) -> Outcome:
    if args.count < 1:
        raise UsageError(f"--count must be positive, got {args.count}")
    bases = []
    for location in args.basis:
        bases.extend(basis_store.load_all(location))
    splits = parse_split(args.split, args.count)

    out = Path(args.out)
    outputs = []
    sobol_start = 1
    for split, count in splits.items():
        dataset = generate_dataset(
            bases,
            count,
            seed=split_seed(args.seed, split),
            noisy_fraction=args.noisy_fraction,
            split=split,
            sobol_start=sobol_start,
            sigma_max=args.sigma_max,
        )
        sobol_start += count
        outputs.append(str(dataset_store.save(dataset, out / f"{split.value}{DATASET_SUFFIX}")))
    return Outcome(primary=out, inputs=list(args.basis), outputs=outputs, seed=args.seed)


def write_history(history: TrainingHistory, path: Path) -> Path:
    lines = ["epoch\ttrain_loss\tval_loss\tval_error\tduration_s"]
    for record in history.epochs:
        lines.append(
            f"{record.epoch}\t{record.train_loss:.10g}\t{record.val_loss:.10g}"
            f"\t{record.val_error:.10g}\t{record.duration_s:.3f}"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def cmd_train(args: argparse.Namespace) -> Outcome:
    train_ds = _non_empty(dataset_store.load(args.train), args.train)
    val_ds = _non_empty(dataset_store.load(args.val), args.val)
    input_cfg = input_config_from(args, train_ds.window)
    net_cfg = NetworkConfig(
        size_variant=SizeVariant(args.size),
        reduction_variant=ReductionVariant(args.reduction),
        input_rows=input_cfg.rows,
        input_cols=input_cfg.window.bins,
        output_dim=len(train_ds.metabolites),
        channel_scale=args.channel_scale,
        metabolites=train_ds.metabolites,
    )
    train_cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        early_stop_patience=args.patience,
        seed=args.seed,
    )
    net = build_network(net_cfg, seed=args.seed, input_config=input_cfg)

    out = Path(args.out)
    history_path = artifact_path(out, ".history.tsv")
    try:
        net, history = train(net, train_ds, val_ds, train_cfg, input_cfg)
    except DivergenceError as e:
        if e.history is not None:
            write_history(e.history, history_path)
        raise
    write_history(history, history_path)
    checkpoint_store.save(net, out, history)
    return Outcome(
        primary=out,
        inputs=[args.train, args.val],
        outputs=[str(out), str(history_path)],
        seed=args.seed,
    )


def read_spectra_file(path: Path) -> List[Tuple[str, Sample]]:
    """Samples of a scan container or a dataset archive, told apart by their magic."""
    try:
        with path.open("rb") as handle:
            magic = handle.read(PREAMBLE.size)[:8]
    except FileNotFoundError as e:
        raise FormatError(f"File not found: {path}", original_exception=e) from e
    if magic == dataset_store.codec.magic:
        dataset = dataset_store.load(path)
        return [(f"{path}#{i}", s) for i, s in enumerate(dataset.samples)]
    if magic == scan_store.codec.magic:
        return [(str(path), scan_store.load(path))]
    raise FormatError(f"{path} is neither a scan nor a dataset archive", offset=0)


def baseline_bases(args: argparse.Namespace) -> List[BasisSet]:
    """Basis sets of `--basis`, narrowed to `--basis-linewidth` when given."""
    bases = basis_store.load_all(args.basis)
    if args.basis_linewidth is None:
        return bases
    chosen = [b for b in bases if np.isclose(b.linewidth_hz, args.basis_linewidth)]
    if not chosen:
        raise NoBasisError(
            f"No basis at {args.basis} has linewidth {args.basis_linewidth:g} Hz "
            f"(available: {[b.linewidth_hz for b in bases]})"
        )
    return chosen


def quantifier_from(args: argparse.Namespace):
    """The network of `--model` or the NNLS baseline over `--basis`."""
    if bool(args.model) == bool(args.baseline):
        raise UsageError("Pass exactly one of --model or --baseline nnls")
    if args.model:
        return NetworkQuantifier(checkpoint_store.load(args.model), name=Path(args.model).stem)
    if not args.basis:
        raise UsageError("--baseline nnls needs --basis")
    bases = baseline_bases(args)
    return NnlsQuantifier(bases, input_config_from(args, bases[0].window), name=args.baseline)


def cmd_quantify(args: argparse.Namespace, stdout: Optional[TextIO] = None) -> Outcome:
    quantifier = quantifier_from(args)
    names = quantifier.metabolites

    results: List[Tuple[str, Dict[str, float]]] = []
    exit_code = EXIT_OK
    for spectra in args.spectra:
        try:
            for source, sample in read_spectra_file(Path(spectra)):
                results.append((source, quantifier.quantify(sample)))
        except QuantError as e:
            log.error("Quantification failed", path=spectra, error=e.message)
            print(f"error: {spectra}: {e.message}", file=sys.stderr)
            exit_code = max(exit_code, e.exit_code)

    if args.format == "tsv":
        lines = ["\t".join(names)]
        lines += ["\t".join(f"{v[m]:.6f}" for m in names) for _, v in results]
        text = "\n".join(lines) + "\n"
    else:
        text = json.dumps(
            [{"source": source, "concentrations": v} for source, v in results], indent=2
        ) + "\n"

    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        outputs = [str(out)]
    else:
        out = Path(config.LOG_DIR) / "quantify"
        (stdout or sys.stdout).write(text)
        outputs = []
    return Outcome(
        primary=out,
        inputs=[args.model or args.basis, *args.spectra],
        outputs=outputs,
        exit_code=exit_code,
    )


def cmd_evaluate(args: argparse.Namespace) -> Outcome:
    if not args.model and not args.baseline:
        raise UsageError("Evaluate needs --model and/or --baseline nnls")
    if args.baseline and not args.basis:
        raise UsageError("--baseline nnls needs --basis")
    if bool(args.dataset) == bool(args.phantom_manifest):
        raise UsageError("Pass exactly one of --dataset or --phantom-manifest")

    window = default_window()
    if args.dataset:
        dataset = dataset_store.load(args.dataset)
        dataset_name = Path(args.dataset).stem
        window = dataset.window
    else:
        dataset = phantom_dataset(args.phantom_manifest, window=window)
        dataset_name = Path(args.phantom_manifest).stem
    _non_empty(dataset, dataset_name)

    predictors = []
    for model in args.model or []:
        net = checkpoint_store.load(model)
        predictors.append(NetworkQuantifier(net, name=Path(model).stem))
    if args.baseline:
        bases = baseline_bases(args)
        baseline_cfg = input_config_from(args, bases[0].window)
        predictors.append(NnlsQuantifier(bases, baseline_cfg, name=args.baseline))

    keep = [k for k in (args.reduce or "").split(",") if k.strip()] or None
    out = Path(args.out)
    outputs = []
    for predictor in predictors:
        report = evaluate(predictor, dataset, dataset_name, keep, args.merge_glx)
        sigma = report.sigma_conventional if args.sigma == SigmaVariant.CONVENTIONAL else report.sigma
        print(f"{predictor.name}\t{dataset_name}\t{report.epsilon:.5f} sigma {sigma:.3f}")
        outputs.append(
            str(save_report(report, out / f"{predictor.name}__{dataset_name}.report.json"))
        )

    inputs = [*(args.model or []), args.dataset or args.phantom_manifest]
    if args.basis:
        inputs.append(args.basis)
    return Outcome(primary=out, inputs=inputs, outputs=outputs)


def cmd_serve(args: argparse.Namespace) -> Outcome:
    from src.start import run

    if args.model:
        config.MODEL_PATH = args.model
    run(host=args.host, port=args.port)
    return Outcome(primary=Path(config.LOG_DIR) / "serve", inputs=[config.MODEL_PATH or ""])


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def _add_input_flags(parser: argparse.ArgumentParser, components: str) -> None:
    parser.add_argument(
        "--acquisitions", default="off,diff", help="Comma list of off, on, diff (default off,diff)"
    )
    parser.add_argument(
        "--components",
        default=components,
        help=f"Comma list of r, i, m (default {components})",
    )
    parser.add_argument(
        "--no-b0", action="store_true", help="Skip B0 correction of time-domain scans"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrsquant", description="MEGA-PRESS metabolite quantification toolkit"
    )
    parser.add_argument(
        "--log-level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Console log level (file logs are unaffected)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-basis", help="Render parametric basis sets")
    p.add_argument("--defs", default=str(DEFAULT_DEFINITIONS_PATH), help="Basis definition JSON")
    p.add_argument("--linewidths", default="1.0", help="Comma list of linewidths in Hz")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--samples", type=int, default=None, help="Time-domain samples")
    p.add_argument("--bandwidth", type=float, default=None, help="Acquisition bandwidth in Hz")
    p.add_argument("--window-high", type=float, default=config.WINDOW_HIGH_PPM)
    p.add_argument("--window-low", type=float, default=config.WINDOW_LOW_PPM)
    p.add_argument("--window-bins", type=int, default=config.WINDOW_BINS)
    p.set_defaults(handler=cmd_gen_basis)

    p = sub.add_parser("gen-dataset", help="Generate labelled synthetic datasets")
    p.add_argument("--basis", nargs="+", required=True, help="Basis archive(s) or directories")
    p.add_argument("--count", type=int, required=True, help="Total number of samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noisy-fraction", type=float, default=None)
    p.add_argument("--sigma-max", type=float, default=None)
    p.add_argument("--split", default="train=1", help="e.g. train=5000,val=1000,test=0")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=cmd_gen_dataset)

    p = sub.add_parser("train", help="Train a quantification network")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--size", choices=[v.value for v in SizeVariant], default="small")
    p.add_argument(
        "--reduction", choices=[v.value for v in ReductionVariant], default="strided"
    )
    _add_input_flags(p, components="m")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=15)
    p.add_argument("--channel-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="Checkpoint path")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("quantify", help="Quantify scans or dataset samples")
    p.add_argument("--model", default=None)
    p.add_argument("--baseline", choices=["nnls"], default=None)
    p.add_argument("--basis", default=None)
    p.add_argument(
        "--basis-linewidth",
        type=float,
        default=None,
        help="Fit against this linewidth only; by default each sample uses its own basis",
    )
    _add_input_flags(p, components="r")
    p.add_argument("--spectra", nargs="+", required=True)
    p.add_argument("--format", choices=["report", "tsv"], default="report")
    p.add_argument("--out", default=None, help="Output file (stdout when omitted)")
    p.set_defaults(handler=cmd_quantify)

    p = sub.add_parser("evaluate", help="Score networks and/or the NNLS baseline")
    p.add_argument("--model", nargs="+", default=None)
    p.add_argument("--baseline", choices=["nnls"], default=None)
    p.add_argument("--basis", default=None)
    p.add_argument(
        "--basis-linewidth",
        type=float,
        default=None,
        help="Fit against this linewidth only; by default each sample uses its own basis",
    )
    p.add_argument("--dataset", default=None)
    p.add_argument("--phantom-manifest", default=None)
    p.add_argument("--reduce", default=None, help="Reduced metabolite set, e.g. naa,gaba,glx")
    p.add_argument("--merge-glx", action="store_true")
    p.add_argument(
        "--sigma",
        type=SigmaVariant,
        choices=list(SigmaVariant),
        default=SigmaVariant.PRINTED,
    )
    _add_input_flags(p, components="r")
    p.add_argument("--out", required=True, help="Report directory")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("serve", help="Run the HTTP quantification service")
    p.add_argument("--model", default=None)
    p.add_argument("--host", default=config.HTTP_HOST)
    p.add_argument("--port", type=int, default=config.HTTP_PORT)
    p.set_defaults(handler=cmd_serve)
    return parser


def _snapshot(args: argparse.Namespace) -> Dict[str, object]:
    flags = {
        k: (v.value if hasattr(v, "value") else v)
        for k, v in vars(args).items()
        if k != "handler"
    }
    return {"args": flags, "config": config.model_dump(mode="json")}


def _record(args: argparse.Namespace, outcome: Outcome, started_at: datetime, seconds: float):
    manifest = RunManifest(
        command=args.command,
        config_snapshot=_snapshot(args),
        inputs=outcome.inputs,
        outputs=outcome.outputs,
        seed=outcome.seed,
        tool_version=tool_version(),
        started_at=started_at,
        duration_s=seconds,
    )
    save_run_manifest(manifest, artifact_path(outcome.primary, ".manifest.json"))
    write_metrics(artifact_path(outcome.primary, ".metrics.prom"))


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_USAGE

    if args.log_level:
        set_console_level(args.log_level)
    handler: Callable[[argparse.Namespace], Outcome] = args.handler
    started_at = datetime.now(timezone.utc)
    started = time.perf_counter()
    log.info("Command started", command=args.command)
    try:
        with log.contextualize(command=args.command):
            outcome = handler(args)
    except QuantError as e:
        log.error("Command failed", command=args.command, error=e.message, exit_code=e.exit_code)
        print(f"error: {e.message}", file=sys.stderr)
        COMMAND_FAILURES.labels(command=args.command, exit_code=str(e.exit_code)).inc()
        return e.exit_code
    except Exception as e:
        log.exception("Unexpected failure", command=args.command, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        COMMAND_FAILURES.labels(command=args.command, exit_code=str(EXIT_DATA)).inc()
        return EXIT_DATA

    seconds = time.perf_counter() - started
    COMMAND_DURATION.labels(command=args.command).observe(seconds)
    if outcome.exit_code:
        COMMAND_FAILURES.labels(command=args.command, exit_code=str(outcome.exit_code)).inc()
    _record(args, outcome, started_at, seconds)
    log.info(
        "Command finished",
        command=args.command,
        seconds=round(seconds, 3),
        exit_code=outcome.exit_code,
    )
    return outcome.exit_code
