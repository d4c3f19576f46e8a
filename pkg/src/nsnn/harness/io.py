"""Model persistence and artifact writers."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

from ..errors import MalformedFileError, VersionError
from ..network import FORMAT_VERSION, Network, network_from_dict, network_to_dict

_SRC = Path(__file__).resolve().parents[1]


def save_model(net: Network, path, extra=None):
    doc = network_to_dict(net)
    if extra:
        doc["meta"] = extra
    # json writes floats with repr, the shortest string that round-trips
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path) -> Network:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise MalformedFileError(f"{path}: missing format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise VersionError(f"{path}: format_version {doc['format_version']} != {FORMAT_VERSION}")
    try:
        return network_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFileError(f"{path}: {exc}") from exc


def build_id() -> str:
    """Content hash of the package sources, stable across checkouts."""
    h = hashlib.sha1()
    for p in sorted(_SRC.rglob("*.py")):
        h.update(p.relative_to(_SRC).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


class ArtifactWriter:
    """Writes every artifact of one run inside ``out_dir``, stamped with the
    seed and config hash."""

    def __init__(self, out_dir, seed, config_hash):
        self.out_dir = Path(out_dir)
        self.seed = seed
        self.config_hash = config_hash

    def path(self, name) -> Path:
        p = (self.out_dir / name).resolve()
        if self.out_dir.resolve() not in p.parents:
            raise ValueError(f"{name} escapes the output directory")
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return p

    def csv(self, name, rows, columns):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(f"# seed={self.seed} config_hash={self.config_hash}\n")
            writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(row[k]) for k in columns})

    def json(self, name, doc):
        doc = dict(doc, seed=self.seed, config_hash=self.config_hash)
        self.path(name).write_text(json.dumps(doc, indent=1, sort_keys=True, default=_default))

    def model(self, name, net):
        save_model(net, self.path(name), extra={"seed": self.seed, "config_hash": self.config_hash})


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _default(obj):
    import numpy as np

    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))
