"""ECG records: WFDB-style headers, signal payloads and corpus loading.

Native record file (``.ecg``), all integers little-endian::

    offset 0   8 bytes   magic b"ECGNAT01"
    offset 8   uint32    header length H in bytes
    offset 12  H bytes   UTF-8 WFDB-style header text (format field "f32",
                         gain 1/mV, baseline 0)
    offset 12+H          float32 samples, frame-interleaved
                         (n_samples frames of n_leads values, in mV)

WFDB records are read from ``<id>.hea`` plus either a MATLAB ``.mat``
payload (variable ``val``, leads x samples) or a format-16 ``.dat`` file
(int16, frame-interleaved).  Physical units are ``(adc - baseline) / gain``.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .labels import LabelMap, label_vector

MAGIC = b"ECGNAT01"
NATIVE_SUFFIX = ".ecg"


class HeaderError(ValueError):
    pass


@dataclass(frozen=True)
class LeadSpec:
    file: str
    fmt: str
    gain: float = 1000.0
    baseline: int = 0
    units: str = "mV"
    adc_res: int = 16
    adc_zero: int = 0
    init_value: int = 0
    checksum: int = 0
    block_size: int = 0
    name: str = ""


@dataclass(frozen=True)
class Header:
    record: str
    n_leads: int
    fs: float
    n_samples: int
    leads: tuple[LeadSpec, ...]
    dx_codes: tuple[str, ...]
    age: str = ""
    sex: str = ""
    comments: tuple[str, ...] = ()


_GAIN = re.compile(r"^([-+0-9.eE]+)(?:\(([-+0-9]+)\))?(?:/(\S+))?$")


def _number(tok: str, lineno: int, what: str, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise HeaderError(f"header line {lineno}: malformed {what} {tok!r}") from None


def parse_header(text: str) -> Header:
    """Parse a WFDB-style header.  Diagnoses come from the ``# Dx:`` comment."""
    lines = [(i, ln.strip()) for i, ln in enumerate(text.splitlines(), 1)]
    body = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    comments = [(i, ln.lstrip("#").strip()) for i, ln in lines if ln.startswith("#")]
    if not body:
        raise HeaderError("header has no record line")

    lineno, first = body[0]
    tok = first.split()
    if len(tok) < 4:
        raise HeaderError(f"header line {lineno}: record line needs name, leads, fs, samples")
    n_leads = _number(tok[1], lineno, "signal count", int)
    fs = _number(tok[2].split("/")[0].split("(")[0], lineno, "sampling frequency")
    n_samples = _number(tok[3], lineno, "sample count", int)

    leads = []
    for lineno, line in body[1:]:
        t = line.split()
        if len(t) < 3:
            raise HeaderError(f"header line {lineno}: signal line needs file, format, gain")
        m = _GAIN.match(t[2])
        if not m:
            raise HeaderError(f"header line {lineno}: malformed gain {t[2]!r}")
        ints = [_number(v, lineno, "signal field", int) for v in t[3:8]]
        ints += [16, 0, 0, 0, 0][len(ints):]
        leads.append(
            LeadSpec(
                file=t[0],
                fmt=t[1],
                gain=float(m.group(1)) or 200.0,
                baseline=int(m.group(2)) if m.group(2) else ints[1],
                units=m.group(3) or "mV",
                adc_res=ints[0],
                adc_zero=ints[1],
                init_value=ints[2],
                checksum=ints[3],
                block_size=ints[4],
                name=" ".join(t[8:]),
            )
        )
    if len(leads) != n_leads:
        raise HeaderError(f"header declares {n_leads} signals but lists {len(leads)}")

    dx, age, sex, other = None, "", "", []
    for lineno, c in comments:
        key, _, value = c.partition(":")
        key = key.strip().lower()
        if key == "dx":
            dx = tuple(code.strip() for code in value.split(",") if code.strip())
        elif key == "age":
            age = value.strip()
        elif key == "sex":
            sex = value.strip()
        else:
            other.append(c)
    if dx is None:
        raise HeaderError("header has no '# Dx:' line")
    return Header(first.split()[0], n_leads, fs, n_samples, tuple(leads), dx, age, sex, tuple(other))


def format_header(h: Header) -> str:
    fs = int(h.fs) if float(h.fs).is_integer() else h.fs
    out = [f"{h.record} {h.n_leads} {fs} {h.n_samples}"]
    for s in h.leads:
        gain = int(s.gain) if float(s.gain).is_integer() else s.gain
        out.append(
            f"{s.file} {s.fmt} {gain}({s.baseline})/{s.units} {s.adc_res} {s.adc_zero} "
            f"{s.init_value} {s.checksum} {s.block_size} {s.name}".rstrip()
        )
    out.append(f"# Age: {h.age}")
    out.append(f"# Sex: {h.sex}")
    out.append(f"# Dx: {','.join(h.dx_codes)}")
    out += [f"# {c}" for c in h.comments]
    return "\n".join(out) + "\n"


@dataclass
class RawSignal:
    samples: np.ndarray  # [n_leads, L], mV
    fs: float


@dataclass
class EcgRecord:
    id: str
    signal: RawSignal
    dx_codes: tuple[str, ...]
    age: str = ""
    sex: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def n_leads(self) -> int:
        return self.signal.samples.shape[0]


LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")


def native_header(record: EcgRecord) -> Header:
    n, L = record.signal.samples.shape
    names = LEAD_NAMES if n == 12 else tuple(f"L{i}" for i in range(n))
    leads = tuple(LeadSpec(f"{record.id}{NATIVE_SUFFIX}", "f32", 1.0, 0, "mV", 32, 0, 0, 0, 0, names[i]) for i in range(n))
    return Header(record.id, n, record.signal.fs, L, leads, tuple(record.dx_codes), record.age, record.sex)


def write_native(record: EcgRecord, path) -> Path:
    path = Path(path)
    head = format_header(native_header(record)).encode()
    payload = np.ascontiguousarray(record.signal.samples.T, dtype="<f4").tobytes()
    path.write_bytes(MAGIC + struct.pack("<I", len(head)) + head + payload)
    return path


def read_native(path) -> EcgRecord:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a native ECG record")
    (n_head,) = struct.unpack("<I", raw[8:12])
    header = parse_header(raw[12 : 12 + n_head].decode())
    data = np.frombuffer(raw, dtype="<f4", offset=12 + n_head)
    if data.size != header.n_leads * header.n_samples:
        raise ValueError(f"{path}: payload has {data.size} values, header implies {header.n_leads * header.n_samples}")
    samples = data.reshape(header.n_samples, header.n_leads).T.astype(np.float64)
    return EcgRecord(header.record, RawSignal(samples, header.fs), header.dx_codes, header.age, header.sex)


def read_wfdb(header_path) -> EcgRecord:
    header_path = Path(header_path)
    header = parse_header(header_path.read_text())
    payload = header_path.parent / header.leads[0].file
    if payload.suffix == ".mat":
        from scipy.io import loadmat

        adc = np.asarray(loadmat(payload)["val"], dtype=np.float64)
    elif header.leads[0].fmt == "16":
        adc = np.fromfile(payload, dtype="<i2").astype(np.float64)
        adc = adc.reshape(-1, header.n_leads).T
    else:
        raise ValueError(f"{header_path}: unsupported signal format {header.leads[0].fmt!r}")
    if adc.shape != (header.n_leads, header.n_samples):
        raise ValueError(f"{header_path}: payload shape {adc.shape} disagrees with header")
    gain = np.array([s.gain for s in header.leads])[:, None]
    base = np.array([s.baseline for s in header.leads])[:, None]
    return EcgRecord(header.record, RawSignal((adc - base) / gain, header.fs), header.dx_codes, header.age, header.sex)


def load_record(path) -> EcgRecord:
    path = Path(path)
    if path.suffix == NATIVE_SUFFIX:
        return read_native(path)
    if path.suffix == ".hea":
        return read_wfdb(path)
    raise ValueError(f"unrecognised record file {path}")


LABEL_MAP_FILE = "labelmap.csv"


@dataclass
class Corpus:
    records: list[EcgRecord]
    label_map: LabelMap

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.id)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def labels(self) -> np.ndarray:
        return np.stack([label_vector(r.dx_codes, self.label_map) for r in self.records])

    def select(self, ids) -> "Corpus":
        wanted = set(ids)
        unknown = wanted - set(self.ids)
        if unknown:
            raise KeyError(f"records not in corpus: {sorted(unknown)[:5]}")
        return replace(self, records=[r for r in self.records if r.id in wanted])


def load_corpus(directory, label_map: LabelMap | None = None) -> Corpus:
    """Every ``.ecg`` and ``.hea`` record under ``directory``, sorted by id.

    The label map defaults to ``labelmap.csv`` in the directory, then to the
    built-in 2021 scored set.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"data directory {directory} does not exist")
    if label_map is None:
        f = directory / LABEL_MAP_FILE
        label_map = LabelMap.load(f) if f.exists() else LabelMap.builtin(2021)
    paths = sorted(directory.rglob(f"*{NATIVE_SUFFIX}")) + sorted(directory.rglob("*.hea"))
    records = [load_record(p) for p in paths]
    if not records:
        raise FileNotFoundError(f"no records found under {directory}")
    return Corpus(records, label_map)
