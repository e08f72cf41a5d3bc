"""Operator commands: collect frames into a database, analyze it into a
peak-difference report, and render that report for humans or plotting.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2 usage or
configuration error. A JSON file passed as --config supplies defaults for any
flag (keys mirror the flag names); explicit flags always win.
"""

from __future__ import annotations

import csv
import io
import json
import shlex
import signal
import threading
from datetime import datetime
from pathlib import Path

import click

from .analysis import (
    DEFAULT_WINDOW_SIZE,
    DEFAULT_WINDOWS,
    AnalysisConfig,
    REPORT_CSV_HEADER,
    MEANS_CSV_HEADER,
    partitioned_means,
    process_traffic_data,
    rolling_mean,
    write_means_csv,
    write_report_csv,
)
from .camsim import VirtualClock
from .core import (
    DEFAULT_TIMEZONE,
    ConfigurationError,
    DayType,
    Period,
    SplitConfig,
    TimeWindow,
    VehicleClass,
    utc_now,
    _zone,
)
from .detect import (
    BackendError,
    DEFAULT_CONFIDENCE_THRESHOLD,
    StubBackend,
    SubprocessBackend,
    detect_batch,
)
from .ingest import CollectorConfig, load_camera_file, run_collector
from .store import DetectionStore, StorageError

DEFAULT_SPLIT_TEXT = "2025-01-05T00:00:00"

_CLASS_CHOICES = [cls.value for cls in VehicleClass] + ["total"]


def _load_config_file(ctx: click.Context, param: click.Parameter, value: str | None):
    """Eager --config callback: JSON keys become flag defaults."""
    if not value:
        return None
    try:
        raw = json.loads(Path(value).read_text())
    except FileNotFoundError:
        raise click.UsageError(f"config file not found: {value}")
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"config file is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise click.UsageError("config file must be a JSON object of flag defaults")
    defaults = {key.replace("-", "_"): val for key, val in raw.items()}
    ctx.default_map = {**(ctx.default_map or {}), **defaults}
    return value


config_option = click.option(
    "--config",
    expose_value=False,
    is_eager=True,
    callback=_load_config_file,
    help="JSON file of flag defaults (explicit flags win).",
)

tz_option = click.option(
    "--tz",
    default=DEFAULT_TIMEZONE,
    envvar="TRAFFIC_TZ",
    show_default=True,
    help="IANA timezone for local hours and naive timestamps.",
)


def _parse_when(text: str, tz: str) -> datetime:
    try:
        value = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise click.UsageError(f"bad timestamp {text!r}: {exc}")
    if value.tzinfo is None:
        value = value.replace(tzinfo=_zone(tz))
    return value


def _parse_windows(text: str) -> tuple[TimeWindow, ...]:
    """Window override syntax: "Day:0-23,Morning:6-9"."""
    windows = []
    for part in text.split(","):
        label, sep, hours = part.strip().partition(":")
        lo, sep2, hi = hours.partition("-")
        if not label or not sep or not sep2:
            raise click.UsageError(f"bad window {part!r}, expected LABEL:START-END")
        try:
            windows.append(TimeWindow(int(lo), int(hi), label))
        except ValueError as exc:
            raise click.UsageError(f"bad window {part!r}: {exc}")
    labels = [w.label for w in windows]
    if len(set(labels)) != len(labels):
        raise click.UsageError("window labels must be unique")
    return tuple(windows)


def _selector(class_name: str) -> VehicleClass | None:
    return None if class_name == "total" else VehicleClass(class_name)


def _means_sidecar(out_path: str) -> str:
    p = Path(out_path)
    return str(p.with_name(p.stem + "_means" + (p.suffix or ".csv")))


@click.group()
def main() -> None:
    """Traffic-camera collection and peak-hour difference analysis."""


@main.command()
@config_option
@click.option("--cameras", "cameras_path", required=True, help="camera list JSON file")
@click.option("--db", "db_path", required=True, help="SQLite database path")
@click.option(
    "--detector",
    default="stub",
    show_default=True,
    help="'stub' for the built-in pattern decoder, or a worker command line",
)
@click.option("--workers", type=int, default=16, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--download-timeout-ms", type=float, default=100.0, show_default=True)
@click.option("--batch-max-wait-ms", type=float, default=250.0, show_default=True)
@click.option("--queue-capacity", type=int, default=256, show_default=True)
@click.option("--threshold", type=float, default=DEFAULT_CONFIDENCE_THRESHOLD, show_default=True)
@click.option("--duration-s", type=float, default=None, help="stop after this long (default: run until Ctrl-C)")
@click.option("--stats-interval-s", type=float, default=5.0, show_default=True)
@click.option(
    "--clock-start",
    default=None,
    help="stamp capture times from a simulated clock starting at this instant (for simulator runs)",
)
@click.option("--clock-rate", type=float, default=1.0, show_default=True, help="simulated clock acceleration")
@tz_option
def collect(
    cameras_path: str,
    db_path: str,
    detector: str,
    workers: int,
    batch_size: int,
    download_timeout_ms: float,
    batch_max_wait_ms: float,
    queue_capacity: int,
    threshold: float,
    duration_s: float | None,
    stats_interval_s: float,
    clock_start: str | None,
    clock_rate: float,
    tz: str,
) -> None:
    """Poll cameras, detect vehicles, and append the counts to the database."""
    try:
        cams = load_camera_file(cameras_path)
        config = CollectorConfig(
            workers=workers,
            batch_size=batch_size,
            download_timeout_ms=download_timeout_ms,
            batch_max_wait_ms=batch_max_wait_ms,
            queue_capacity=queue_capacity,
        )
    except ConfigurationError as exc:
        raise click.UsageError(str(exc))
    if not (0.0 < threshold <= 1.0):
        raise click.UsageError("--threshold must be in (0, 1]")
    if clock_rate != 1.0 and clock_start is None:
        raise click.UsageError("--clock-rate needs --clock-start")
    clock = utc_now
    if clock_start is not None:
        try:
            clock = VirtualClock(_parse_when(clock_start, tz), clock_rate).now
        except ConfigurationError as exc:
            raise click.UsageError(str(exc))

    if detector == "stub":
        backend = StubBackend(max_batch=batch_size)
    else:
        try:
            backend = SubprocessBackend(shlex.split(detector))
        except (BackendError, OSError) as exc:
            raise click.UsageError(f"detector backend unreachable: {exc}")

    store = DetectionStore(db_path)

    def sink(batch):
        results = detect_batch(batch, backend, threshold)
        return store.append(results).written

    click.echo(
        f"collecting: cameras={len(cams)} workers={workers} batch_size={batch_size} "
        f"download_timeout_ms={download_timeout_ms:g} batch_max_wait_ms={batch_max_wait_ms:g} "
        f"queue_capacity={queue_capacity} detector={detector} threshold={threshold:g} db={db_path}"
    )

    stop = threading.Event()
    previous_handler = signal.getsignal(signal.SIGINT)
    signal.signal(signal.SIGINT, lambda signum, frame: stop.set())
    stats_holder: list = []

    def report_stats() -> None:
        while not stop.wait(timeout=stats_interval_s):
            if stats_holder:
                click.echo(stats_holder[0].stats.snapshot().line())

    try:
        reporter = threading.Thread(target=report_stats, daemon=True)
        reporter.start()
        try:
            snapshot = run_collector(
                cams,
                config,
                sink,
                stop_event=stop,
                duration_s=duration_s,
                clock=clock,
                collector_out=stats_holder,
            )
        except KeyboardInterrupt:
            stop.set()
            snapshot = stats_holder[0].stats.snapshot() if stats_holder else None
        finally:
            stop.set()
        if snapshot is not None:
            click.echo(snapshot.line())
        click.echo(f"stored {store.count()} detection rows in {db_path}")
    except StorageError as exc:
        raise click.ClickException(str(exc))
    finally:
        signal.signal(signal.SIGINT, previous_handler)
        if isinstance(backend, SubprocessBackend):
            backend.close()
        store.close()


@main.command()
@config_option
@click.option("--db", "db_path", required=True, help="SQLite database path")
@click.option("--out", "out_path", default="phd_report.csv", show_default=True)
@click.option(
    "--means-out",
    "means_path",
    default=None,
    help="hourly bucket means sidecar CSV (default: <out stem>_means.csv)",
)
@click.option("--split", "split_text", default=DEFAULT_SPLIT_TEXT, show_default=True)
@click.option("--window-size", type=int, default=DEFAULT_WINDOW_SIZE, show_default=True)
@click.option("--windows", "windows_text", default=None, help='window override, e.g. "Day:0-23,Morning:6-9"')
@click.option(
    "--class",
    "class_name",
    type=click.Choice(_CLASS_CHOICES),
    default="total",
    show_default=True,
    help="count stream to analyze",
)
@tz_option
def analyze(
    db_path: str,
    out_path: str,
    means_path: str | None,
    split_text: str,
    window_size: int,
    windows_text: str | None,
    class_name: str,
    tz: str,
) -> None:
    """Compute per-camera peak differences and write the report CSV."""
    if not Path(db_path).exists():
        raise click.UsageError(f"database not found: {db_path}")
    try:
        split = SplitConfig(_parse_when(split_text, tz), tz)
        windows = _parse_windows(windows_text) if windows_text else DEFAULT_WINDOWS
        config = AnalysisConfig(
            window_size=window_size,
            split=split,
            windows=windows,
            class_selector=_selector(class_name),
        )
    except (ConfigurationError, ValueError) as exc:
        raise click.UsageError(str(exc))
    means_path = means_path or _means_sidecar(out_path)

    store = DetectionStore(db_path)
    try:
        series = store.query_series()
    except StorageError as exc:
        raise click.ClickException(str(exc))
    finally:
        store.close()

    report = process_traffic_data(series, config)
    smoothed = [rolling_mean(s, config.window_size, config.class_selector) for s in series]
    table = partitioned_means(smoothed, config.split)
    try:
        with open(out_path, "w", newline="") as out:
            write_report_csv(report, out)
        with open(means_path, "w", newline="") as out:
            write_means_csv(table, out)
    except OSError as exc:
        raise click.ClickException(str(exc))
    if not series:
        click.echo("warning: database has no detections, report is empty", err=True)
    click.echo(f"wrote {len(report)} report rows to {out_path} (means: {means_path})")


def _read_report_csv(path: str) -> list[list[str]]:
    expected = REPORT_CSV_HEADER.split(",")
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != expected:
                raise click.ClickException(f"{path}: expected header {REPORT_CSV_HEADER!r}")
            rows = []
            for row in reader:
                if len(row) != len(expected):
                    raise click.ClickException(f"{path}: bad row {row!r}")
                for idx in (3, 5, 7):
                    if row[idx]:
                        try:
                            float(row[idx])
                        except ValueError:
                            raise click.ClickException(f"{path}: bad number {row[idx]!r}")
                rows.append(row)
    except FileNotFoundError:
        raise click.UsageError(f"analysis CSV not found: {path}")
    except OSError as exc:
        raise click.ClickException(str(exc))
    return rows


def _read_means_csv(path: str) -> dict[tuple[str, str, str, int], str]:
    expected = MEANS_CSV_HEADER.split(",")
    means: dict[tuple[str, str, str, int], str] = {}
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != expected:
                raise click.ClickException(f"{path}: expected header {MEANS_CSV_HEADER!r}")
            for row in reader:
                try:
                    source, day_type, period, hour, mean, _samples = row
                    means[(source, day_type, period, int(hour))] = mean
                except ValueError:
                    raise click.ClickException(f"{path}: bad row {row!r}")
    except FileNotFoundError:
        raise click.UsageError(f"means CSV not found: {path} (produced by analyze)")
    except OSError as exc:
        raise click.ClickException(str(exc))
    return means


def _format_table(rows: list[list[str]]) -> str:
    headers = ["source", "day_type", "window", "peak_before", "hour", "peak_after", "hour", "delta"]
    cells = [headers] + rows
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines)


@main.command()
@config_option
@click.option("--in", "in_path", required=True, help="analysis report CSV (from analyze)")
@click.option(
    "--means",
    "means_path",
    default=None,
    help="bucket means CSV from analyze (default: <in stem>_means.csv)",
)
@click.option("--format", "fmt", type=click.Choice(["table", "csv"]), default="table", show_default=True)
@click.option(
    "--hourly-out",
    default=None,
    help="write per-(source,window) hourly means CSV here for plotting",
)
@click.option("--windows", "windows_text", default=None, help="window definitions for --hourly-out")
def report(
    in_path: str,
    means_path: str | None,
    fmt: str,
    hourly_out: str | None,
    windows_text: str | None,
) -> None:
    """Render an analysis CSV as a summary, optionally with hourly curves."""
    rows = _read_report_csv(in_path)
    if hourly_out:
        windows = _parse_windows(windows_text) if windows_text else DEFAULT_WINDOWS
        means = _read_means_csv(means_path or _means_sidecar(in_path))
        sources = sorted({key[0] for key in means})
        try:
            with open(hourly_out, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["source", "window", "day_type", "period", "hour", "mean"])
                for source in sources:
                    for window in windows:
                        for day_type in (DayType.WEEKDAY, DayType.WEEKEND):
                            for period in (Period.BEFORE, Period.AFTER):
                                for hour in window.hours():
                                    key = (source, day_type.value, period.value, hour)
                                    if key in means:
                                        writer.writerow(
                                            [source, window.label, day_type.value, period.value, hour, means[key]]
                                        )
        except OSError as exc:
            raise click.ClickException(str(exc))
        click.echo(f"wrote hourly means to {hourly_out}", err=True)
    if not rows:
        click.echo("no data")
        return
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_CSV_HEADER.split(","))
        writer.writerows(rows)
        click.echo(buf.getvalue(), nl=False)
    else:
        click.echo(_format_table(rows))


if __name__ == "__main__":
    main()
