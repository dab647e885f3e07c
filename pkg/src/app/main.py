# src/app/main.py
from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, Progress, TaskID, TextColumn, TimeElapsedColumn

from app import __version__
from app.controller.experiment_controller import ExperimentController
from app.errors import SimulationError
from app.model.experiment import EXPERIMENTS, SECTION, ExperimentConfig
from app.service.notification_center import notification_center
from app.service.report_service import report_service
from app.settings import load_config
from app.workers.trial_pool import ProgressFn

log = logging.getLogger("app")

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_ERROR = 2

# --trials wirkt je Experiment auf diesen Schlüssel (scaling hat keine Versuche)
TRIALS_KEY = {name: "trials" for name in EXPERIMENTS}
TRIALS_KEY.update({"conditional": "preparations", "gates": "closure_draws"})
del TRIALS_KEY["scaling"]


# -------- Logging --------
def setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=verbosity > 1, rich_tracebacks=True)],
        force=True,
    )


# -------- Fortschritt --------
def progress_display(console: Console) -> tuple[Progress, ProgressFn]:
    """Ein Balken je Versuchsreihe; auf Nicht-Terminals unsichtbar."""
    progress = Progress(
        TextColumn("{task.description}"),
        BarColumn(),
        TextColumn("{task.percentage:>3.0f}%"),
        TimeElapsedColumn(),
        console=console,
        transient=True,
        disable=not console.is_terminal,
    )
    tasks: dict[str, TaskID] = {}

    def update(percent: int, label: str) -> None:
        if label not in tasks:
            tasks[label] = progress.add_task(label, total=100)
        progress.update(tasks[label], completed=percent)

    return progress, update


# -------- Exceptions sichtbar --------
def excepthook(exc_type, exc_value, exc_tb):
    print("\n=== UNCAUGHT EXCEPTION ===", file=sys.stderr)
    print(f"{exc_type.__name__}: {exc_value}", file=sys.stderr)
    traceback.print_tb(exc_tb)


sys.excepthook = excepthook


# -------- CLI --------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON-Datei, überschreibt die Defaults")
    common.add_argument("--seed", type=int, help="Master-Seed (run.seed)")
    common.add_argument("--trials", type=int, help="Versuche/Präparationen/Ziehungen des Experiments")
    common.add_argument("--out", type=Path, help="Report-Datei statt stdout")
    common.add_argument("--format", choices=("json", "csv"), help="Report-Format (run.format)")
    common.add_argument("--threads", type=int, help="Worker-Threads (run.threads)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v: info, -vv: debug")

    parser = argparse.ArgumentParser(
        prog="cv-photon-sim",
        description="Simulator für CV-Optik im abgeschnittenen Fock-Raum.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in (*EXPERIMENTS, "all"):
        sub.add_parser(name, parents=[common], help="alle Experimente" if name == "all" else None)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    run = {k: v for k, v in (("seed", args.seed), ("threads", args.threads), ("format", args.format)) if v is not None}
    out: dict = {"run": run} if run else {}
    if args.trials is not None:
        names = EXPERIMENTS if args.experiment == "all" else (args.experiment,)
        for name in names:
            key = TRIALS_KEY.get(name)
            if key is None:
                log.warning("--trials hat für %s keine Wirkung", name)
                continue
            out[SECTION[name]] = {key: args.trials}
    return out


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    progress, update = progress_display(notification_center.console)
    controller = ExperimentController(progress=update)
    try:
        cfg = load_config(args.config, _overrides(args))
        notification_center.info(f"{args.experiment}: seed {cfg['run']['seed']}, {cfg['run']['threads']} Thread(s)")
        with progress:
            if args.experiment == "all":
                reports = controller.run_all(cfg)
            else:
                reports = [controller.run(ExperimentConfig.from_config(args.experiment, cfg))]
        out = args.out if args.out is not None else cfg["run"]["out"]
        text = report_service.write(reports, cfg["run"]["format"], Path(out) if out else None)
    except SimulationError as e:
        notification_center.error(f"{type(e).__name__}: {e}")
        return EXIT_ERROR

    if not out:
        sys.stdout.write(text)
    notification_center.summary(reports)
    errored = [r.config["experiment"] for r in reports if "error" in r.diagnostics]
    if errored:
        notification_center.error(f"Abgebrochen: {', '.join(errored)}")
        return EXIT_ERROR
    failed = [r.config["experiment"] for r in reports if not r.passed]
    if failed:
        notification_center.warn(f"Toleranzen verletzt: {', '.join(failed)}")
        return EXIT_TOLERANCE
    notification_center.success("Alle Toleranzen eingehalten")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
