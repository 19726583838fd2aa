"""RINEX 2.11 / 3.x readers for GPS navigation and observation files.

Only what single point positioning needs is extracted: broadcast Keplerian
ephemerides, Klobuchar coefficients and the L1 C/A pseudorange. Records that
violate the type invariants are skipped and counted rather than aborting the
whole file.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

GPS_EPOCH = datetime(1980, 1, 6)
SECONDS_PER_WEEK = 604_800.0

PSEUDORANGE_MIN = 1.5e7
PSEUDORANGE_MAX = 5.0e7

# total lines per navigation record in RINEX 3, by system letter
_V3_RECORD_LINES = {"G": 8, "E": 8, "C": 8, "J": 8, "I": 8, "R": 4, "S": 4}


class RinexError(ValueError):
    """Structured parse failure; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class BroadcastEphemeris:
    """One GPS broadcast ephemeris record (angles in radians, times in GPS seconds of week)."""

    prn: int
    week: int
    toe: float
    toc_week: int
    toc: float
    af0: float
    af1: float
    af2: float
    sqrt_a: float
    e: float
    i0: float
    omega0: float
    omega: float
    m0: float
    delta_n: float
    idot: float
    omega_dot: float
    cuc: float = 0.0
    cus: float = 0.0
    crc: float = 0.0
    crs: float = 0.0
    cic: float = 0.0
    cis: float = 0.0
    iode: float = 0.0
    health: float = 0.0
    tgd: float = 0.0

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"PRN {self.prn}: {name} is not finite")
        if not 1 <= self.prn <= 32:
            raise ValueError(f"PRN {self.prn} outside [1, 32]")
        if not 0.0 <= self.e < 0.1:
            raise ValueError(f"PRN {self.prn}: eccentricity {self.e} outside [0, 0.1)")
        if not 2.0e7 <= self.sqrt_a**2 <= 3.0e7:
            raise ValueError(f"PRN {self.prn}: semi-major axis {self.sqrt_a**2} m out of range")

    @property
    def toe_total(self) -> float:
        return self.week * SECONDS_PER_WEEK + self.toe


@dataclass(frozen=True)
class IonoParameters:
    """Klobuchar broadcast coefficients (GPS ICD units: s, s/semicircle^n)."""

    alpha: tuple[float, float, float, float]
    beta: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        alpha = tuple(float(a) for a in self.alpha)
        beta = tuple(float(b) for b in self.beta)
        if len(alpha) != 4 or len(beta) != 4:
            raise ValueError("Klobuchar alpha and beta need exactly 4 coefficients each")
        if not all(math.isfinite(v) for v in alpha + beta):
            raise ValueError("Klobuchar coefficients must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class EpochObservation:
    week: int
    sow: float
    entries: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("epoch without observations")
        prns = [prn for prn, _ in self.entries]
        if len(set(prns)) != len(prns):
            raise ValueError("duplicate PRN within epoch")
        for prn, pr in self.entries:
            if not PSEUDORANGE_MIN <= pr <= PSEUDORANGE_MAX:
                raise ValueError(f"PRN {prn}: pseudorange {pr} m out of range")

    @property
    def total_seconds(self) -> float:
        return self.week * SECONDS_PER_WEEK + self.sow


@dataclass
class NavigationData:
    ephemerides: list[BroadcastEphemeris]
    iono: IonoParameters | None
    version: float
    skipped: int = 0
    messages: list[str] = field(default_factory=list)


@dataclass
class ObservationData:
    epochs: list[EpochObservation]
    version: float
    dropped_epochs: int = 0
    approx_position: np.ndarray | None = None
    messages: list[str] = field(default_factory=list)


def gps_week_seconds(t: datetime) -> tuple[int, float]:
    """GPS week number and seconds of week for a (GPS time scale) datetime."""
    delta = t - GPS_EPOCH
    total = delta.days * 86400.0 + delta.seconds + delta.microseconds * 1e-6
    week = int(total // SECONDS_PER_WEEK)
    return week, total - week * SECONDS_PER_WEEK


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("ascii", errors="replace")
    if isinstance(source, os.PathLike):
        with open(source, "rb") as fh:
            return fh.read().decode("ascii", errors="replace")
    return str(source)


def _num(field_text: str) -> float:
    s = field_text.strip().replace("D", "E").replace("d", "e")
    if not s:
        return 0.0
    return float(s)


def _epoch_datetime(year: int, month: int, day: int, hour: int, minute: int, sec: float) -> datetime:
    if year < 100:
        year += 2000 if year < 80 else 1900
    if not 0.0 <= sec < 61.0:
        raise ValueError(f"seconds field {sec} out of range")
    whole = int(sec)
    return datetime(year, month, day, hour, minute) + timedelta(
        seconds=whole, microseconds=round((sec - whole) * 1e6)
    )


def _split_header(lines: list[str], expected_type: str) -> tuple[float, str, dict[str, list[tuple[int, str]]], int]:
    """Return (version, system, header records by label, index of first body line)."""
    if not lines:
        raise RinexError("empty file", 1)
    first = lines[0]
    if "RINEX VERSION / TYPE" not in first[60:]:
        raise RinexError("missing RINEX VERSION / TYPE header record", 1)
    try:
        version = float(first[:9])
    except ValueError:
        raise RinexError(f"unreadable RINEX version {first[:9]!r}", 1) from None
    if not 1.0 <= version < 5.0:
        raise RinexError(f"unsupported RINEX version {version}", 1)
    file_type = first[20:21].upper()
    if file_type != expected_type:
        raise RinexError(f"expected file type {expected_type!r}, found {file_type!r}", 1)
    system = first[40:41].upper() or "G"

    records: dict[str, list[tuple[int, str]]] = {}
    for idx, line in enumerate(lines[1:], start=1):
        label = line[60:].strip()
        if label == "END OF HEADER":
            return version, system, records, idx + 1
        records.setdefault(label, []).append((idx + 1, line))
    raise RinexError("END OF HEADER not found", len(lines))


def _header_iono(version: float, records: dict[str, list[tuple[int, str]]]) -> IonoParameters | None:
    alpha = beta = None
    try:
        if version < 3.0:
            if "ION ALPHA" in records:
                lineno, line = records["ION ALPHA"][0]
                alpha = [_num(line[2 + 12 * k : 14 + 12 * k]) for k in range(4)]
            if "ION BETA" in records:
                lineno, line = records["ION BETA"][0]
                beta = [_num(line[2 + 12 * k : 14 + 12 * k]) for k in range(4)]
        else:
            for lineno, line in records.get("IONOSPHERIC CORR", []):
                coeffs = [_num(line[5 + 12 * k : 17 + 12 * k]) for k in range(4)]
                if line[:4] == "GPSA":
                    alpha = coeffs
                elif line[:4] == "GPSB":
                    beta = coeffs
    except ValueError as exc:
        raise RinexError(f"malformed ionospheric header record: {exc}", lineno) from None
    if alpha is None or beta is None:
        return None
    try:
        return IonoParameters(tuple(alpha), tuple(beta))
    except ValueError as exc:
        raise RinexError(str(exc), lineno) from None


def _ephemeris_from_fields(prn: int, toc: datetime, clock: list[float], orbit: list[float]) -> BroadcastEphemeris:
    # orbit: 7 broadcast-orbit lines x 4 fields, flattened
    toc_week, toc_sow = gps_week_seconds(toc)
    week = int(orbit[18])
    if week < 1024 <= toc_week:
        # 10-bit week number in some files
        week += 1024 * ((toc_week - week + 512) // 1024)
    return BroadcastEphemeris(
        prn=prn,
        week=week,
        toe=orbit[8],
        toc_week=toc_week,
        toc=toc_sow,
        af0=clock[0],
        af1=clock[1],
        af2=clock[2],
        iode=orbit[0],
        crs=orbit[1],
        delta_n=orbit[2],
        m0=orbit[3],
        cuc=orbit[4],
        e=orbit[5],
        cus=orbit[6],
        sqrt_a=orbit[7],
        cic=orbit[9],
        omega0=orbit[10],
        cis=orbit[11],
        i0=orbit[12],
        crc=orbit[13],
        omega=orbit[14],
        omega_dot=orbit[15],
        idot=orbit[16],
        health=orbit[21],
        tgd=orbit[22],
    )


def parse_navigation(source) -> NavigationData:
    """Parse a GPS navigation file (RINEX 2.x or 3.x).

    ``source`` may be the file contents as ``bytes``/``str`` or a path-like.
    """
    lines = _read_text(source).splitlines()
    version, system, records, body = _split_header(lines, "N")
    if version >= 3.0 and system not in ("G", "M"):
        raise RinexError(f"navigation file for system {system!r}, expected GPS", 1)
    iono = _header_iono(version, records)

    ephemerides: list[BroadcastEphemeris] = []
    messages: list[str] = []
    skipped = 0
    i = body
    n = len(lines)
    while i < n:
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        lineno = i + 1
        if version >= 3.0:
            sys_char = line[0:1]
            if sys_char not in _V3_RECORD_LINES:
                skipped += 1
                messages.append(f"line {lineno}: unrecognised record start {line[:3]!r}")
                i += 1
                continue
            span = _V3_RECORD_LINES[sys_char]
            if sys_char != "G":
                i += span
                continue
        else:
            span = 8
        block = lines[i : i + span]
        i += span
        if len(block) < span:
            skipped += 1
            messages.append(f"line {lineno}: truncated navigation record")
            continue
        try:
            if version >= 3.0:
                prn = int(line[1:3])
                toc = _epoch_datetime(
                    int(line[4:8]), int(line[9:11]), int(line[12:14]),
                    int(line[15:17]), int(line[18:20]), float(line[21:23]),
                )
                clock = [_num(line[23 + 19 * k : 42 + 19 * k]) for k in range(3)]
                orbit = [_num(b[4 + 19 * k : 23 + 19 * k]) for b in block[1:] for k in range(4)]
            else:
                prn = int(line[0:2])
                toc = _epoch_datetime(
                    int(line[3:5]), int(line[6:8]), int(line[9:11]),
                    int(line[12:14]), int(line[15:17]), float(line[17:22]),
                )
                clock = [_num(line[22 + 19 * k : 41 + 19 * k]) for k in range(3)]
                orbit = [_num(b[3 + 19 * k : 22 + 19 * k]) for b in block[1:] for k in range(4)]
            ephemerides.append(_ephemeris_from_fields(prn, toc, clock, orbit))
        except (ValueError, OverflowError) as exc:
            skipped += 1
            messages.append(f"line {lineno}: skipped record: {exc}")

    if not ephemerides:
        raise RinexError("no ephemerides")
    return NavigationData(ephemerides, iono, version, skipped, messages)


def _v2_obs_types(records) -> list[str]:
    types: list[str] = []
    for _, line in records.get("# / TYPES OF OBSERV", []):
        types.extend(line[6:60].split())
    return types


def _v3_obs_types(records) -> dict[str, list[str]]:
    types: dict[str, list[str]] = {}
    current = None
    for _, line in records.get("SYS / # / OBS TYPES", []):
        if line[0:1].strip():
            current = line[0]
            types[current] = []
        if current is not None:
            types[current].extend(line[7:60].split())
    return types


def _obs_value(text: str) -> float | None:
    s = text[:14].strip()
    if not s:
        return None
    return float(s)


def _make_epoch(when: datetime, entries: list[tuple[int, float]], messages: list[str], lineno: int):
    seen: dict[int, float] = {}
    for prn, pr in entries:
        if not 1 <= prn <= 32:
            continue
        if not PSEUDORANGE_MIN <= pr <= PSEUDORANGE_MAX:
            messages.append(f"line {lineno}: G{prn:02d} pseudorange {pr} m out of range, omitted")
            continue
        seen.setdefault(prn, pr)
    if not seen:
        return None
    week, sow = gps_week_seconds(when)
    return EpochObservation(week, sow, tuple(sorted(seen.items())))


def parse_observation(source) -> ObservationData:
    """Parse a RINEX 2.x/3.x observation file, keeping GPS L1 C/A pseudoranges only."""
    lines = _read_text(source).splitlines()
    version, _, records, body = _split_header(lines, "O")

    approx = None
    if "APPROX POSITION XYZ" in records:
        lineno, line = records["APPROX POSITION XYZ"][0]
        try:
            approx = np.array([_num(line[14 * k : 14 * (k + 1)]) for k in range(3)])
        except ValueError:
            raise RinexError("malformed APPROX POSITION XYZ", lineno) from None

    if version >= 3.0:
        types = _v3_obs_types(records).get("G", [])
        code = "C1C"
    else:
        types = _v2_obs_types(records)
        code = "C1"
    if code not in types:
        raise RinexError(f"observation types lack the {code} pseudorange")
    col = types.index(code)

    reader = _read_v3_epochs if version >= 3.0 else _read_v2_epochs
    epochs, dropped, messages = reader(lines, body, len(types), col)
    return ObservationData(epochs, version, dropped, approx, messages)


def _read_v2_epochs(lines: list[str], i: int, ntypes: int, col: int):
    epochs: list[EpochObservation] = []
    messages: list[str] = []
    dropped = 0
    per_sat = max(1, math.ceil(ntypes / 5))
    n = len(lines)
    while i < n:
        line = lines[i]
        lineno = i + 1
        if not line.strip():
            i += 1
            continue
        try:
            flag = int(line[26:29].strip() or 0)
            nsat = int(line[29:32])
            if nsat < 0 or flag < 0:
                raise ValueError("negative count")
        except ValueError:
            dropped += 1
            messages.append(f"line {lineno}: unreadable epoch header")
            i += 1
            continue
        if flag > 1:
            # event records: nsat counts header lines (or sat blocks for flag 6)
            i += 1 + (nsat * per_sat if flag == 6 else nsat)
            continue
        sats_text = line[32:68]
        i += 1
        n_cont = max(0, math.ceil(nsat / 12) - 1)
        for _ in range(n_cont):
            if i < n:
                sats_text += lines[i][32:68]
            i += 1
        sats = [sats_text[3 * k : 3 * k + 3] for k in range(nsat)]
        block = lines[i : i + nsat * per_sat]
        i += nsat * per_sat
        if i > n or len(block) < nsat * per_sat:
            dropped += 1
            messages.append(f"line {lineno}: truncated epoch block dropped")
            continue
        try:
            when = _epoch_datetime(
                int(line[1:3]), int(line[4:6]), int(line[7:9]),
                int(line[10:12]), int(line[13:15]), float(line[15:26]),
            )
            entries = []
            for k, sat in enumerate(sats):
                if sat[0:1] not in (" ", "G") or not sat[1:3].strip():
                    continue
                sat_lines = block[k * per_sat : (k + 1) * per_sat]
                text = sat_lines[col // 5].ljust(80)
                value = _obs_value(text[16 * (col % 5) : 16 * (col % 5) + 16])
                if value is not None:
                    entries.append((int(sat[1:3]), value))
            epoch = _make_epoch(when, entries, messages, lineno)
        except (ValueError, OverflowError) as exc:
            dropped += 1
            messages.append(f"line {lineno}: epoch dropped: {exc}")
            continue
        if epoch is None:
            dropped += 1
            messages.append(f"line {lineno}: epoch without usable GPS pseudoranges")
        else:
            epochs.append(epoch)
    return epochs, dropped, messages


def _read_v3_epochs(lines: list[str], i: int, ntypes: int, col: int):
    epochs: list[EpochObservation] = []
    messages: list[str] = []
    dropped = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        lineno = i + 1
        if not line.startswith(">"):
            i += 1
            continue
        try:
            flag = int(line[31:32].strip() or 0)
            nsat = int(line[32:35])
            if nsat < 0:
                raise ValueError("negative count")
        except ValueError:
            dropped += 1
            messages.append(f"line {lineno}: unreadable epoch header")
            i += 1
            continue
        i += 1
        block = []
        while len(block) < nsat and i < n and not lines[i].startswith(">"):
            block.append(lines[i])
            i += 1
        if flag > 1:
            continue
        if len(block) < nsat:
            dropped += 1
            messages.append(f"line {lineno}: truncated epoch block dropped")
            continue
        try:
            when = _epoch_datetime(
                int(line[2:6]), int(line[7:9]), int(line[10:12]),
                int(line[13:15]), int(line[16:18]), float(line[18:29]),
            )
            entries = []
            for sat_line in block:
                if sat_line[0:1] != "G":
                    continue
                start = 3 + 16 * col
                value = _obs_value(sat_line[start : start + 16])
                if value is not None:
                    entries.append((int(sat_line[1:3]), value))
            epoch = _make_epoch(when, entries, messages, lineno)
        except (ValueError, OverflowError) as exc:
            dropped += 1
            messages.append(f"line {lineno}: epoch dropped: {exc}")
            continue
        if epoch is None:
            dropped += 1
            messages.append(f"line {lineno}: epoch without usable GPS pseudoranges")
        else:
            epochs.append(epoch)
    return epochs, dropped, messages
