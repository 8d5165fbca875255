"""Metrics report container with JSON and CSV serialization."""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_COLUMNS = ("freq_hz", "metric", "algorithm", "side", "value")


def _fmt(v):
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        return str(v)
    return repr(v)


@dataclass
class MetricsReport:
    """Per-bin and broadband measures keyed by ``(metric, algorithm, side)``.

    ``side`` is ``"L"``, ``"R"`` or ``""`` for binaural measures (MSC error).
    """

    freqs_hz: np.ndarray
    per_bin: dict = field(default_factory=dict)
    broadband: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def add_bins(self, metric, algorithm, side, values):
        self.per_bin[(metric, algorithm, side)] = np.asarray(values, dtype=float)

    def add_broadband(self, metric, algorithm, side, value):
        self.broadband[(metric, algorithm, side)] = float(value)

    def get(self, metric, algorithm, side=""):
        return self.broadband[(metric, algorithm, side)]

    def rows(self):
        for (metric, alg, side), value in sorted(self.broadband.items()):
            yield ("broadband", metric, alg, side, _fmt(value))
        keys = sorted(self.per_bin)
        for i, f in enumerate(self.freqs_hz):
            for metric, alg, side in keys:
                yield (_fmt(f), metric, alg, side, _fmt(self.per_bin[(metric, alg, side)][i]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(self.rows())

    def to_dict(self):
        return {
            "freqs_hz": [float(f) for f in self.freqs_hz],
            "broadband": [
                {"metric": m, "algorithm": a, "side": s, "value": v} for (m, a, s), v in sorted(self.broadband.items())
            ],
            "per_bin": [
                {"metric": m, "algorithm": a, "side": s, "values": [float(x) for x in vals]}
                for (m, a, s), vals in sorted(self.per_bin.items())
            ],
            "notes": self.notes,
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, allow_nan=True))

    @classmethod
    def from_dict(cls, d):
        rep = cls(np.asarray(d["freqs_hz"], dtype=float), notes=d.get("notes", {}))
        for e in d["broadband"]:
            rep.add_broadband(e["metric"], e["algorithm"], e["side"], e["value"])
        for e in d["per_bin"]:
            rep.add_bins(e["metric"], e["algorithm"], e["side"], e["values"])
        return rep
