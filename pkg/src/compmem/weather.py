"""Hourly precipitation records to binary rain/no-rain event streams.

Input CSV header::

    station_id,latitude,longitude,timestamp_iso8601,precip_mm

A station-hour is 1 when any strictly positive precipitation (or a trace,
``T``) was recorded inside that window.  Windows are aligned to the epoch;
window ``h`` covers ``[start + h*window, start + (h+1)*window)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .processes import MatrixEnsemble

__all__ = [
    "WeatherTable",
    "binarize_weather",
    "select_stations",
    "write_weather_csv",
    "HEADER",
    "MAX_MISSING_FRACTION",
]

HEADER = ("station_id", "latitude", "longitude", "timestamp_iso8601", "precip_mm")
MAX_MISSING_FRACTION = 0.05
_EPOCH = datetime(1970, 1, 1)


@dataclass
class WeatherTable:
    station_ids: list[str]
    latitude: np.ndarray
    longitude: np.ndarray
    start: datetime
    window: timedelta
    events: np.ndarray  # (stations, windows) uint8
    report: dict = field(default_factory=dict)

    @property
    def n_stations(self) -> int:
        return len(self.station_ids)

    @property
    def n_windows(self) -> int:
        return int(self.events.shape[1])

    @property
    def rates(self) -> np.ndarray:
        return self.events.mean(axis=1) if self.n_windows else np.zeros(self.n_stations)

    def as_ensemble(self, labels=None) -> MatrixEnsemble:
        return MatrixEnsemble(self.events.T, labels)


def _parse_time(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    t = datetime.fromisoformat(text)
    if t.tzinfo is not None:
        t = t.astimezone(timezone.utc).replace(tzinfo=None)
    return t


def _parse_precip(text: str) -> float:
    text = text.strip()
    if text.upper() == "T":
        return math.inf  # trace: rain occurred, amount below resolution
    v = float(text)
    if math.isnan(v) or v < 0:
        raise ValueError(f"invalid precipitation {text!r}")
    return v


def _open_rows(source):
    if isinstance(source, Path):
        return source.open(newline="")
    if isinstance(source, str):
        # CSV text contains newlines; anything else is a file name
        return io.StringIO(source) if "\n" in source else Path(source).open(newline="")
    return source


def binarize_weather(source, window: timedelta = timedelta(hours=1),
                     max_missing: float = MAX_MISSING_FRACTION) -> WeatherTable:
    """Build the per-station binary event matrix from station-hour records.

    ``source`` is a path, CSV text, or an open text stream.  Malformed rows
    are counted in ``report["unparseable_rows"]`` (with line numbers in
    ``report["unparseable_lines"]``).  Windows without a record are treated as
    dry when a station misses at most ``max_missing`` of the common time axis;
    otherwise the station is dropped and listed in ``report["dropped"]``.
    """
    if window <= timedelta(0):
        raise ValueError("window must be positive")
    fh = _open_rows(source)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise ValueError(f"weather CSV header must be {','.join(HEADER)}, got {header}")
        stations: dict[str, dict] = {}
        bad_lines = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != len(HEADER):
                    raise ValueError("wrong field count")
                sid = row[0].strip()
                if not sid:
                    raise ValueError("empty station id")
                lat, lon = float(row[1]), float(row[2])
                t = _parse_time(row[3])
                rain = _parse_precip(row[4]) > 0
            except ValueError:
                bad_lines.append(line)
                continue
            slot = (t - _EPOCH) // window
            st = stations.setdefault(sid, {"lat": lat, "lon": lon, "slots": {}})
            st["slots"][slot] = st["slots"].get(slot, False) or rain
    finally:
        if fh is not source:
            fh.close()

    if not stations:
        raise ValueError("no parseable weather records")
    first = min(min(s["slots"]) for s in stations.values())
    last = max(max(s["slots"]) for s in stations.values())
    n_windows = last - first + 1

    kept, dropped = [], {}
    for sid in sorted(stations):
        st = stations[sid]
        missing = 1.0 - len(st["slots"]) / n_windows
        if missing > max_missing:
            dropped[sid] = missing
            continue
        kept.append(sid)
    events = np.zeros((len(kept), n_windows), dtype=np.uint8)
    for r, sid in enumerate(kept):
        for slot, rain in stations[sid]["slots"].items():
            if rain:
                events[r, slot - first] = 1
    return WeatherTable(
        station_ids=kept,
        latitude=np.array([stations[s]["lat"] for s in kept], dtype=float),
        longitude=np.array([stations[s]["lon"] for s in kept], dtype=float),
        start=_EPOCH + first * window,
        window=window,
        events=events,
        report={
            "unparseable_rows": len(bad_lines),
            "unparseable_lines": bad_lines,
            "dropped": dropped,
            "stations_seen": len(stations),
            "windows": n_windows,
        },
    )


def select_stations(table: WeatherTable, band: tuple[float, float]) -> WeatherTable:
    """Keep stations whose empirical event rate lies in ``[lo, hi]``."""
    lo, hi = band
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"rate band must satisfy 0 <= lo <= hi <= 1, got {band}")
    rates = table.rates
    keep = [i for i in np.argsort(np.array(table.station_ids), kind="stable")
            if lo <= rates[i] <= hi]
    if not keep:
        raise ValueError(f"no station has an event rate within [{lo}, {hi}]")
    keep = np.array(keep)
    return replace(
        table,
        station_ids=[table.station_ids[i] for i in keep],
        latitude=table.latitude[keep],
        longitude=table.longitude[keep],
        events=table.events[keep],
        report=dict(table.report, rate_band=[lo, hi]),
    )


def write_weather_csv(path, bits: np.ndarray, station_ids, latitude, longitude,
                      start: datetime = datetime(2015, 1, 1), window: timedelta = timedelta(hours=1),
                      wet_mm: float = 0.5) -> Path:
    """Write a ``(windows, stations)`` bit matrix in the weather CSV layout."""
    bits = np.asarray(bits)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for j, sid in enumerate(station_ids):
            for h in range(bits.shape[0]):
                t = (start + h * window).isoformat()
                w.writerow([sid, f"{latitude[j]:.4f}", f"{longitude[j]:.4f}", t,
                            wet_mm if bits[h, j] else 0.0])
    return path
