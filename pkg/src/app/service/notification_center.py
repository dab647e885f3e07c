from __future__ import annotations
from typing import Iterable

from rich.console import Console
from rich.table import Table

from app.model.experiment import ExperimentReport

_STYLES = {"info": "cyan", "success": "bold green", "warn": "yellow", "error": "bold red"}


class NotificationCenter:
    """Meldungen an den Nutzer (stderr), getrennt vom Report auf stdout."""

    def __init__(self, console: Console | None = None) -> None:
        self.console = console or Console(stderr=True)

    def notify(self, level: str, text: str) -> None:
        self.console.print(f"[{_STYLES.get(level, '')}]{level.upper():<7}[/] {text}", highlight=False)

    def info(self, text: str) -> None:
        self.notify("info", text)

    def success(self, text: str) -> None:
        self.notify("success", text)

    def warn(self, text: str) -> None:
        self.notify("warn", text)

    def error(self, text: str) -> None:
        self.notify("error", text)

    def summary(self, reports: Iterable[ExperimentReport]) -> None:
        """Tabelle aller Toleranzen; fehlgeschlagene rot."""
        table = Table(title="Toleranzen", show_lines=False)
        table.add_column("Experiment")
        table.add_column("Prüfung")
        table.add_column("Ergebnis")
        table.add_column("Detail", overflow="fold")
        for report in reports:
            exp = report.config.get("experiment", "?")
            for t in report.tolerances:
                mark = "[green]ok[/]" if t.passed else "[bold red]FAIL[/]"
                table.add_row(exp, t.name, mark, t.detail)
        self.console.print(table)


notification_center = NotificationCenter()
