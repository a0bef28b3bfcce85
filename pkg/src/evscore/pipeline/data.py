"""Hourly station records, daily aggregation and covariate normalisation."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import DataError, DomainError
from ..estimate import DesignMatrix

log = logging.getLogger(__name__)

COVARIATES = ("ff", "ffVar", "rr", "rMax", "P", "dP")
HOURS_PER_DAY = 24
DITHER_HALF_WIDTH = 0.5


@dataclass(frozen=True)
class HourlyRecord:
    """One hourly observation; ``timestamp`` marks the start of the hour (UTC)."""

    timestamp: datetime
    wind_speed: float
    gust: float
    rain_rate: float
    pressure: float

    def __post_init__(self):
        if min(self.wind_speed, self.gust, self.rain_rate) < 0:
            raise DomainError("wind speed, gust and rain rate must be non-negative")
        if not self.pressure > 0:
            raise DomainError("pressure must be positive")


@dataclass(frozen=True)
class ColumnSpec:
    """How to read an hourly delimited-text file.

    Either ``timestamp`` names one ISO-8601 column, or ``date`` plus ``hour``
    name a ``YYYYMMDD`` column and an hour column.  ``hour_ending`` says the
    hour column labels the end of its interval (1..24), as in KNMI files.
    Each ``scale`` entry multiplies the raw value of that field.
    """

    wind_speed: str = "wind_speed"
    gust: str = "gust"
    rain_rate: str = "rain_rate"
    pressure: str = "pressure"
    timestamp: str | None = "timestamp"
    date: str | None = None
    hour: str | None = None
    hour_ending: bool = False
    delimiter: str = ","
    comment: str = "#"
    header_in_comment: bool = False
    scale: Mapping[str, float] = field(default_factory=dict)
    clip_negative: tuple = ()
    skip_missing: bool = False

    @classmethod
    def knmi(cls):
        """KNMI hourly station export: tenths of m/s, hPa and mm; header in a comment."""
        return cls(
            wind_speed="FF",
            gust="FX",
            rain_rate="RH",
            pressure="P",
            timestamp=None,
            date="YYYYMMDD",
            hour="HH",
            hour_ending=True,
            header_in_comment=True,
            scale={"wind_speed": 0.1, "gust": 0.1, "rain_rate": 0.1, "pressure": 0.1},
            # RH = -1 encodes "less than 0.05 mm"
            clip_negative=("rain_rate",),
            skip_missing=True,
        )


FORMATS = {"generic": ColumnSpec, "knmi": ColumnSpec.knmi}


def _parse_time(row, spec, line):
    try:
        if spec.timestamp is not None:
            ts = datetime.fromisoformat(row[spec.timestamp].strip())
            if ts.tzinfo is not None:
                ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
            return ts
        day = datetime.strptime(row[spec.date].strip(), "%Y%m%d")
        hour = int(row[spec.hour].strip())
    except (ValueError, TypeError) as exc:
        raise DataError(f"bad timestamp: {exc}", line) from None
    if spec.hour_ending:
        hour -= 1
    if not 0 <= hour < HOURS_PER_DAY:
        raise DataError(f"hour {hour} out of range", line)
    return day + timedelta(hours=hour)


def _read_rows(path, spec):
    """Yield (line number, dict row); the header is the first non-comment line."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = list(fh)
    header = None
    for no, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        if text.startswith(spec.comment):
            if spec.header_in_comment:
                body = text[len(spec.comment):].strip()
                cells = [c.strip() for c in body.split(spec.delimiter)]
                if spec.date in cells or spec.timestamp in cells:
                    header = cells
            continue
        if header is None:
            header = [c.strip() for c in next(csv.reader([text], delimiter=spec.delimiter))]
            continue
        cells = [c.strip() for c in next(csv.reader([text], delimiter=spec.delimiter))]
        if len(cells) != len(header):
            raise DataError(f"expected {len(header)} fields, found {len(cells)}", no)
        yield no, header, dict(zip(header, cells))


def ingest_hourly(path, spec: ColumnSpec | str = "generic") -> list[HourlyRecord]:
    """Read hourly records from a delimited text file, sorted by time.

    Raises
    ------
    DataError
        On a missing column or a malformed row (with its line number).
    """
    if isinstance(spec, str):
        try:
            spec = FORMATS[spec]()
        except KeyError:
            raise DataError(f"unknown format {spec!r}") from None
    if Path(path).stat().st_size == 0:
        return []
    wanted = {"wind_speed": spec.wind_speed, "gust": spec.gust, "rain_rate": spec.rain_rate, "pressure": spec.pressure}
    time_cols = [spec.timestamp] if spec.timestamp is not None else [spec.date, spec.hour]
    records = []
    checked = False
    skipped = 0
    for no, header, row in _read_rows(path, spec):
        if not checked:
            missing = [c for c in list(wanted.values()) + time_cols if c not in header]
            if missing:
                raise DataError(f"missing required columns {missing}")
            checked = True
        values = {}
        blank = False
        for key, col in wanted.items():
            text = row[col]
            if text == "":
                blank = True
                break
            try:
                v = float(text)
            except ValueError:
                raise DataError(f"column {col!r}: cannot parse {text!r} as a number", no) from None
            if not math.isfinite(v):
                raise DataError(f"column {col!r}: non-finite value", no)
            v *= spec.scale.get(key, 1.0)
            if key in spec.clip_negative:
                v = max(v, 0.0)
            values[key] = v
        if blank:
            if spec.skip_missing:
                skipped += 1
                continue
            raise DataError("empty field", no)
        ts = _parse_time(row, spec, no)
        try:
            records.append(HourlyRecord(ts, **values))
        except DomainError as exc:
            raise DataError(str(exc), no) from None
    if skipped:
        log.warning("skipped %d rows with missing fields", skipped)
    records.sort(key=lambda r: r.timestamp)
    return records


@dataclass(frozen=True)
class DailyRecord:
    """Daily peak gust and the six daily covariates."""

    date: date
    y_fx: float
    ff: float
    ffVar: float
    rr: float
    rMax: float
    P: float
    dP: float


@dataclass
class DailyTable:
    """Column view of daily records."""

    dates: list
    y_fx: np.ndarray
    covariates: dict

    @classmethod
    def from_records(cls, records: Sequence[DailyRecord]):
        return cls(
            [r.date for r in records],
            np.array([r.y_fx for r in records], dtype=float),
            {c: np.array([getattr(r, c) for r in records], dtype=float) for c in COVARIATES},
        )

    def __len__(self):
        return len(self.dates)

    @property
    def years(self):
        return np.array([d.year for d in self.dates])

    def subset(self, index):
        index = np.asarray(index, dtype=int)
        return DailyTable(
            [self.dates[i] for i in index], self.y_fx[index], {k: v[index] for k, v in self.covariates.items()}
        )

    def with_response(self, y):
        return DailyTable(list(self.dates), np.asarray(y, dtype=float), dict(self.covariates))

    def design(self, names: Sequence[str] | None = None) -> DesignMatrix:
        names = list(self.covariates) if names is None else list(names)
        return DesignMatrix({n: self.covariates[n] for n in names}, self.y_fx)

    def row(self, i):
        return {k: float(v[i]) for k, v in self.covariates.items()}

    def write(self, path):
        cols = list(self.covariates)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["date", "y_fx", *cols])
            for i, d in enumerate(self.dates):
                w.writerow([d.isoformat(), repr(float(self.y_fx[i]))] + [repr(float(self.covariates[c][i])) for c in cols])

    @classmethod
    def read(cls, path):
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh, delimiter="\t")
            try:
                header = next(reader)
            except StopIteration:
                raise DataError("daily table is empty") from None
            if header[:2] != ["date", "y_fx"]:
                raise DataError("daily table must start with 'date' and 'y_fx' columns", 1)
            dates, ys, cols = [], [], defaultdict(list)
            for no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"expected {len(header)} fields, found {len(row)}", no)
                try:
                    dates.append(date.fromisoformat(row[0]))
                    ys.append(float(row[1]))
                    for name, v in zip(header[2:], row[2:]):
                        cols[name].append(float(v))
                except ValueError as exc:
                    raise DataError(str(exc), no) from None
        return cls(dates, np.array(ys), {k: np.array(cols[k]) for k in header[2:]})


def pressure_tendency(pressure) -> float:
    """24 times the least-squares slope of pressure against hour index (hPa per day)."""
    p = np.asarray(pressure, dtype=float)
    hours = np.arange(p.size, dtype=float)
    hc = hours - hours.mean()
    return float(HOURS_PER_DAY * np.dot(hc, p - p.mean()) / np.dot(hc, hc))


def aggregate_daily(hourly: Iterable[HourlyRecord], dither_seed: int = 0):
    """Aggregate complete 00-00 UTC days; return ``(records, dropped_dates)``.

    Days without exactly one record for each of the 24 hours are dropped.
    The peak gust of each kept day gets a Uniform(-0.5, 0.5) dither drawn in
    date order from a generator seeded with ``dither_seed``.
    """
    by_day = defaultdict(dict)
    for r in hourly:
        by_day[r.timestamp.date()][r.timestamp.hour] = r
    rng = np.random.default_rng(dither_seed)
    out, dropped = [], []
    for day in sorted(by_day):
        hours = by_day[day]
        if len(hours) != HOURS_PER_DAY:
            dropped.append(day)
            continue
        recs = [hours[h] for h in range(HOURS_PER_DAY)]
        ff = np.array([r.wind_speed for r in recs])
        rain = np.array([r.rain_rate for r in recs])
        pres = np.array([r.pressure for r in recs])
        gust = max(r.gust for r in recs)
        out.append(
            DailyRecord(
                date=day,
                y_fx=gust + rng.uniform(-DITHER_HALF_WIDTH, DITHER_HALF_WIDTH),
                ff=float(ff.mean()),
                ffVar=float(ff.var(ddof=1)),
                rr=float(rain.mean()),
                rMax=float(rain.max()),
                P=float(pres.mean()),
                dP=pressure_tendency(pres),
            )
        )
    if dropped:
        log.info("dropped %d incomplete days", len(dropped))
    return out, dropped


@dataclass(frozen=True)
class NormStats:
    """Frozen covariate means and sample sds."""

    means: dict
    sds: dict

    def to_dict(self):
        return {"means": dict(self.means), "sds": dict(self.sds)}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d["means"]), dict(d["sds"]))

    def apply_row(self, row: Mapping[str, float]):
        return {k: (float(row[k]) - self.means[k]) / self.sds[k] for k in self.means}


def normalize(table: DailyTable, stats: NormStats | None = None, columns: Sequence[str] | None = None):
    """Centre and scale covariates (not the response).

    With ``stats=None`` the means and sds (ddof=1) are computed from ``table``;
    otherwise the supplied frozen statistics are applied unchanged.
    """
    cols = list(table.covariates) if columns is None else list(columns)
    if stats is None:
        if len(table) < 2:
            raise DomainError("need at least two rows to compute normalisation statistics")
        means, sds = {}, {}
        for c in cols:
            v = table.covariates[c]
            sd = float(np.std(v, ddof=1))
            if not sd > 0:
                raise DomainError(f"covariate {c!r} has zero variance")
            means[c], sds[c] = float(np.mean(v)), sd
        stats = NormStats(means, sds)
    new_cov = dict(table.covariates)
    for c in stats.means:
        new_cov[c] = (table.covariates[c] - stats.means[c]) / stats.sds[c]
    return DailyTable(list(table.dates), table.y_fx.copy(), new_cov), stats
