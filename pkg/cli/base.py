"""
Base class for the haarboost management commands.

Adds the global flags (--seed, --jobs, --base, -o) and turns toolkit
failures into a single CommandError line with the matching exit code.
"""

from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from cascade.models import ScanConfig
from haarboost_project.context import set_worker_count
from haarboost_project.exceptions import DataError, TrainingError

from . import services as cli_svc

logger = logging.getLogger(__name__)


def int_list(value: str) -> List[int]:
    """Parse "120,200" into [120, 200]."""
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError({"list": f"expected comma-separated integers, got {value!r}"}) from exc


def float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError({"list": f"expected comma-separated numbers, got {value!r}"}) from exc


def add_scan_arguments(parser) -> None:
    parser.add_argument("--scale-factor", type=float, help="Window growth between scales")
    parser.add_argument("--step", type=float, help="Stride as a fraction of the window size")
    parser.add_argument("--min-window", type=int, help="Smallest window scanned, in pixels")
    parser.add_argument("--min-neighbors", type=int, help="Raw hits a merged detection needs")
    parser.add_argument("--overlap", type=float, help="IoU joining raw hits into one group")


def scan_config(options: Dict[str, Any]) -> ScanConfig:
    return ScanConfig.from_settings(
        scale_factor=options["scale_factor"],
        step_fraction=options["step"],
        min_window=options["min_window"],
        merge_min_neighbors=options["min_neighbors"],
        merge_overlap=options["overlap"],
    )


class HaarboostCommand(BaseCommand):
    """Shared flags and error mapping; subclasses implement ``run``."""

    output_help = "Output path"
    output_required = False

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        group = parser.add_argument_group("global options")
        group.add_argument("--seed", type=int, default=0, help="Seed for every random choice (default: 0)")
        group.add_argument("--jobs", type=int, default=1, help="Worker threads for scanning (default: 1)")
        group.add_argument(
            "--base",
            type=int,
            default=settings.HAARBOOST["FEATURES"]["BASE_WINDOW"],
            help="Base window size in pixels (default: %(default)s)",
        )
        group.add_argument("-o", "--output", required=self.output_required, help=self.output_help)
        return parser

    def execute(self, *args: Any, **options: Any) -> Optional[str]:
        try:
            if options.get("jobs", 1) < 1:
                raise ValidationError({"jobs": f"--jobs must be at least 1, got {options['jobs']}"})
            if options.get("base", 1) < 1:
                raise ValidationError({"base": f"--base must be positive, got {options['base']}"})
            set_worker_count(options.get("jobs", 1))
            return super().execute(*args, **options)
        except CommandError:
            raise
        except (ValidationError, DataError, OSError, TrainingError) as exc:
            logger.debug(f"{self.__module__} failed", exc_info=True)
            raise CommandError(cli_svc.reason(exc), returncode=cli_svc.exit_code_for(exc)) from exc
        finally:
            set_worker_count(1)

    def handle(self, *args: Any, **options: Any) -> None:
        self.run(**options)

    def run(self, **options: Any) -> None:
        raise NotImplementedError

    def done(self, message: str) -> None:
        self.stdout.write(self.style.SUCCESS(message))
