"""Readers and writers for heatmap containers, landmark tables, fold specs and run config.

``.hmt`` layout: one UTF-8 JSON header line, then raw little-endian float32
values, channel-major and row-major within each channel::

    {"w":168,"h":132,"c":8,"dtype":"f32le","layout":"chw"}\\n<payload>
"""
from __future__ import annotations

import csv
import io as _io
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateKeyError,
    HeaderError,
    InvalidConfigurationError,
    LengthMismatchError,
    NonFiniteError,
    TableError,
    UnsupportedDtypeError,
)
from .heatmap import DecodeConfig, HeatmapStack
from .metrics import LandmarkSet, ScaleConfig
from .ssr import DEFAULT_BUDGET, DEFAULT_FRACTION

HMT_SUFFIX = ".hmt"
LANDMARK_HEADER = ["image_id", "landmark_index", "x", "y"]
_MAX_HEADER = 4096


# -- heatmap container -------------------------------------------------------

def encode_heatmaps(h: HeatmapStack) -> bytes:
    header = json.dumps(
        {"w": h.width, "h": h.height, "c": h.channels, "dtype": "f32le", "layout": "chw"},
        separators=(",", ":"),
    )
    payload = np.ascontiguousarray(h.values, dtype="<f4").tobytes()
    return header.encode("utf-8") + b"\n" + payload


def decode_heatmaps(data: bytes) -> HeatmapStack:
    nl = data.find(b"\n", 0, _MAX_HEADER)
    if nl < 0:
        raise HeaderError("no header line found")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header is not JSON: {exc}") from None
    if not isinstance(header, dict):
        raise HeaderError("header must be a JSON object")
    if header.get("dtype") != "f32le":
        raise UnsupportedDtypeError(f"unsupported dtype {header.get('dtype')!r}")
    if header.get("layout") != "chw":
        raise HeaderError(f"unsupported layout {header.get('layout')!r}")
    try:
        w, h, c = (int(header[k]) for k in ("w", "h", "c"))
    except (KeyError, TypeError, ValueError):
        raise HeaderError("header needs integer w, h and c") from None
    if min(w, h, c) < 1:
        raise HeaderError(f"bad dimensions w={w} h={h} c={c}")
    payload = data[nl + 1:]
    expected = 4 * w * h * c
    if len(payload) != expected:
        raise LengthMismatchError(f"payload is {len(payload)} bytes, header implies {expected}")
    values = np.frombuffer(payload, dtype="<f4").reshape(c, h, w)
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("payload contains non-finite values")
    return HeatmapStack(values.astype(np.float32))


def save_heatmaps(path, h: HeatmapStack):
    Path(path).write_bytes(encode_heatmaps(h))


def load_heatmaps(path) -> HeatmapStack:
    return decode_heatmaps(Path(path).read_bytes())


# -- landmark table ----------------------------------------------------------

def parse_landmark_table(text: str) -> list:
    """One LandmarkSet per image id, sorted by id; indices must run 1..K."""
    reader = csv.reader(_io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TableError("empty file", line=1) from None
    if [h.strip() for h in header] != LANDMARK_HEADER:
        raise TableError(f"header must be {','.join(LANDMARK_HEADER)}", line=1)
    rows = {}
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != 4:
            raise TableError(f"expected 4 fields, got {len(row)}", line=line)
        image_id = row[0]
        try:
            index = int(row[1])
            x, y = float(row[2]), float(row[3])
        except ValueError as exc:
            raise TableError(str(exc), line=line) from None
        if index < 1:
            raise TableError(f"landmark_index must be >= 1, got {index}", line=line)
        if not (np.isfinite(x) and np.isfinite(y)):
            raise TableError("non-finite coordinate", line=line)
        key = (image_id, index)
        if key in rows:
            raise DuplicateKeyError(f"duplicate row for image_id={image_id!r} landmark_index={index}",
                                    line=line)
        rows[key] = (x, y)
    per_image = {}
    for (image_id, index), xy in rows.items():
        per_image.setdefault(image_id, {})[index] = xy
    out = []
    for image_id in sorted(per_image):
        pts = per_image[image_id]
        k = len(pts)
        if sorted(pts) != list(range(1, k + 1)):
            raise TableError(f"image {image_id!r}: landmark indices must be 1..{k}, got {sorted(pts)}")
        out.append(LandmarkSet(image_id, [pts[i] for i in range(1, k + 1)]))
    return out


def load_landmark_table(path) -> list:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_landmark_table(f.read())


def format_landmark_table(sets) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LANDMARK_HEADER)
    for s in sorted(sets, key=lambda s: s.image_id):
        for i, (x, y) in enumerate(s.points, start=1):
            writer.writerow([s.image_id, i, repr(float(x)), repr(float(y))])
    return buf.getvalue()


def save_landmark_table(path, sets):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_landmark_table(sets))


# -- fold specs ----------------------------------------------------------------

@dataclass(frozen=True)
class FoldSpec:
    """Participant-level split for one cross-validation fold."""

    fold: str
    train: tuple = ()
    val: tuple = ()
    test: tuple = ()

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, tuple(str(p) for p in getattr(self, name)))
        seen = {}
        for name in ("train", "val", "test"):
            for p in getattr(self, name):
                if p in seen and seen[p] != name:
                    raise InvalidConfigurationError(
                        f"fold {self.fold}: participant {p!r} in both {seen[p]} and {name}")
                seen[p] = name


def parse_fold_specs(obj) -> list:
    items = obj if isinstance(obj, list) else [obj]
    specs = []
    for item in items:
        if not isinstance(item, dict) or "fold" not in item:
            raise InvalidConfigurationError("fold spec must be an object with a 'fold' key")
        specs.append(FoldSpec(str(item["fold"]), item.get("train", ()), item.get("val", ()),
                              item.get("test", ())))
    ids = [s.fold for s in specs]
    if len(set(ids)) != len(ids):
        raise InvalidConfigurationError("duplicate fold ids")
    return specs


def load_fold_specs(path) -> list:
    with open(path, encoding="utf-8") as f:
        return parse_fold_specs(json.load(f))


def participant_of(image_id: str, sep: str = "_") -> str:
    """Default image-to-participant rule: the image id prefix before ``sep``."""
    return image_id.split(sep, 1)[0]


# -- run configuration -------------------------------------------------------

@dataclass(frozen=True)
class SSRConfig:
    enabled: bool = True
    fraction: float = DEFAULT_FRACTION
    seed: int = 0
    budget: int = DEFAULT_BUDGET
    resample_per_image: bool = False

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise InvalidConfigurationError(f"ssr.fraction must lie in (0, 1], got {self.fraction}")
        if self.budget < 1:
            raise InvalidConfigurationError("ssr.budget must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    scale: ScaleConfig = field(default_factory=ScaleConfig)
    ssr: SSRConfig = field(default_factory=SSRConfig)
    paths: dict = field(default_factory=dict)

    def check_paths(self):
        for name, p in self.paths.items():
            if p is not None and not os.path.exists(p):
                raise InvalidConfigurationError(f"path {name}={p} does not exist")

    def as_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {"decode": DecodeConfig, "scale": ScaleConfig, "ssr": SSRConfig}


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise InvalidConfigurationError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise InvalidConfigurationError(f"unknown keys in {name!r}: {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise InvalidConfigurationError(f"{name}: {exc}") from None


def run_config_from_dict(data: dict, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig; ``overrides`` maps ``"section.key"`` to values and wins."""
    data = dict(data or {})
    extra = set(data) - set(_SECTIONS) - {"paths"}
    if extra:
        raise InvalidConfigurationError(f"unknown config sections: {sorted(extra)}")
    merged = {name: dict(data.get(name, {})) for name in _SECTIONS}
    paths = dict(data.get("paths", {}))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, leaf = key.partition(".")
        if section == "paths":
            paths[leaf] = value
        elif section in merged:
            merged[section][leaf] = value
        else:
            raise InvalidConfigurationError(f"unknown override {key!r}")
    return RunConfig(**{n: _section(c, merged[n], n) for n, c in _SECTIONS.items()}, paths=paths)


def load_run_config(path=None, overrides: dict | None = None, check_paths=True) -> RunConfig:
    data = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    cfg = run_config_from_dict(data, overrides)
    if check_paths:
        cfg.check_paths()
    return cfg

