"""File emission: PGM snapshots, RFC-4180 CSV, JSON, config echo and a
hashed manifest.  Every byte written is a pure function of the resolved
configuration, so rerunning a config reproduces identical hashes."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

# gray level per state, matching the snapshot palette:
# free -> white, blue -> black, red -> pale gray, frozen -> dark gray
PGM_LEVELS = np.array([255, 0, 170, 85], dtype=np.uint8)
_LEVEL_TO_STATE = {255: 0, 0: 1, 170: 2, 85: 3}


def write_pgm(config: np.ndarray, shape: tuple[int, int], path) -> None:
    """Binary (P5) PGM snapshot of a 2-d configuration."""
    if len(shape) != 2:
        raise ValueError("PGM snapshots require a 2-d lattice")
    img = PGM_LEVELS[np.asarray(config, dtype=np.uint8).reshape(shape)]
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (shape[1], shape[0]))
        fh.write(img.tobytes())


def read_pgm(path) -> tuple[np.ndarray, tuple[int, int]]:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError("not a binary PGM file")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        fh.readline()  # maxval
        img = np.frombuffer(fh.read(width * height), dtype=np.uint8)
    states = np.array([_LEVEL_TO_STATE[v] for v in img], dtype=np.uint8)
    return states, (height, width)


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV (CRLF line endings)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir: Path, config_text: str) -> Path:
    """Hash every file in the output directory into manifest.json."""
    outdir = Path(outdir)
    files = {}
    for f in sorted(outdir.iterdir()):
        if f.name == "manifest.json" or not f.is_file():
            continue
        files[f.name] = sha256_file(f)
    payload = {
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "files": files,
    }
    path = outdir / "manifest.json"
    write_json(path, payload)
    return path


# ---------------------------------------------------------------------
# configuration: INI sections as a two-level key tree
# ---------------------------------------------------------------------

KNOWN_KEYS = {
    "params": {"lambda1", "lambda2", "gamma", "radius", "norm", "dim"},
    "domain": {"sides"},
    "run": {"horizon", "seed", "init", "samples", "snapshots", "threads"},
    "couple": {"vary", "values", "check_at"},
    "dual": {"instances", "sites", "horizon", "lambda_min", "lambda_max",
             "gamma_min", "gamma_max", "export_tree"},
    "meanfield": {"mode", "u0", "dt", "t_max", "form", "lambda1_range",
                  "lambda2_range", "gammas"},
    "sweep": {"gammas", "replicas", "init", "max_material_rate"},
    "blocks": {"l", "m", "t", "tile_side", "gammas", "replicas",
               "experiment", "init", "include_inf"},
}


def parse_config(path=None, overrides=()) -> configparser.ConfigParser:
    """Load the INI config, apply ``section.key=value`` overrides, and
    reject unknown keys with their full path."""
    cp = configparser.ConfigParser()
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValueError(f"override {item!r} is not section.key=value")
        key_path, value = item.split("=", 1)
        section, key = key_path.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section.strip(), key.strip(), value.strip())
    for section in cp.sections():
        if section not in KNOWN_KEYS:
            raise ValueError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in KNOWN_KEYS[section]:
                raise ValueError(f"unknown config key {section}.{key}")
    return cp


def config_text(cp: configparser.ConfigParser) -> str:
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def echo_config(cp: configparser.ConfigParser, outdir: Path) -> Path:
    path = Path(outdir) / "resolved_config.ini"
    with open(path, "w") as fh:
        cp.write(fh)
    return path


def resolve_outdir(out: str) -> Path:
    """Apply the ALLELOPATHY_OUTPUT_ROOT prefix to relative paths."""
    root = os.environ.get("ALLELOPATHY_OUTPUT_ROOT")
    p = Path(out)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def parse_sides(text: str) -> tuple[int, ...]:
    sep = "x" if "x" in text else ","
    sides = tuple(int(s) for s in text.split(sep) if s.strip())
    if not sides or any(s < 1 for s in sides):
        raise ValueError(f"invalid domain sides {text!r}")
    return sides
