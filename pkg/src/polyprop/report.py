"""Replicate aggregation and validation against reference properties."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .exceptions import MissingReference, TooFewReplicates

TG, DENSITY, BULK_MODULUS = "TG", "DENSITY", "BULK_MODULUS"
PROPERTIES = (TG, DENSITY, BULK_MODULUS)
EXPERIMENTAL, MD_ONLY, NONE = "EXPERIMENTAL", "MD_ONLY", "NONE"
PASS, FAIL, EXCLUDED = "PASS", "FAIL", "EXCLUDED"

TG_TOLERANCE_K = 20.0
DENSITY_TOLERANCE_PCT = 5.0
BULK_MODULUS_TOLERANCE_PCT = 30.0
_QUALITY_RANK = {"EXCELLENT": 3, "GOOD": 2, "ACCEPTABLE": 1, "POOR": 0}


def aggregate_replicates(values):
    """Arithmetic mean and sample (N-1) standard deviation."""
    v = np.asarray(list(values), dtype=float)
    if len(v) < 2:
        raise TooFewReplicates(f"need at least 2 replicates, got {len(v)}")
    return float(np.mean(v)), float(np.std(v, ddof=1))


@dataclass(frozen=True)
class ReferenceEntry:
    polymer: str
    property: str
    experimental: tuple | None
    md_literature: tuple | None
    rule: str
    source: str = ""

    def __post_init__(self):
        for rng in (self.experimental, self.md_literature):
            if rng is not None and rng[0] > rng[1]:
                raise ValueError(f"{self.polymer} {self.property}: range lower bound exceeds upper")
        if self.rule == EXPERIMENTAL and self.experimental is None:
            raise ValueError(f"{self.polymer} {self.property}: EXPERIMENTAL rule needs an experimental range")
        if self.rule not in (EXPERIMENTAL, MD_ONLY, NONE):
            raise ValueError(f"unknown comparison rule {self.rule!r}")


def load_references(path=None) -> dict:
    """References keyed by (polymer, property); defaults to the shipped table."""
    if path is None:
        text = resources.files("polyprop").joinpath("data/references.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    out = {}
    for e in raw["entries"]:
        exp = tuple(e["experimental"]) if e.get("experimental") else None
        md = tuple(e["md_literature"]) if e.get("md_literature") else None
        out[(e["polymer"], e["property"])] = ReferenceEntry(e["polymer"], e["property"], exp, md, e["rule"],
                                                            e.get("source", ""))
    return out


def distance_to_range(value, lo, hi):
    """Signed distance from ``value`` to [lo, hi]; zero inside."""
    if value < lo:
        return value - lo
    if value > hi:
        return value - hi
    return 0.0


def _tg_value(rep):
    if isinstance(rep, dict):
        return float(rep.get("tg_K", rep.get("value"))), rep.get("quality")
    return float(rep), None


def best_tg_replicate(replicates, lo, hi):
    """Replicate closest to the reference interval; ties go to the better fit quality."""
    reps = [_tg_value(r) for r in replicates]
    if not reps:
        raise TooFewReplicates("no Tg replicates")

    def key(item):
        i, (v, q) = item
        return (abs(distance_to_range(v, lo, hi)), -_QUALITY_RANK.get(q, -1), i)

    i, (v, _) = min(enumerate(reps), key=key)
    return i, v


def _ensemble(values):
    if isinstance(values, (int, float)):
        return float(values)
    vals = [float(v) for v in values]
    return float(np.mean(vals))


@dataclass(frozen=True)
class ValidationVerdict:
    polymer: str
    property: str
    predicted: float
    delta: float | None
    delta_unit: str
    verdict: str
    best_replicate: int | None = None

    def to_dict(self):
        return {"polymer": self.polymer, "property": self.property, "predicted": self.predicted,
                "delta": self.delta, "delta_unit": self.delta_unit, "verdict": self.verdict,
                "best_replicate": self.best_replicate}


def validate(predictions: dict, references: dict | None = None) -> list:
    """Verdict per (polymer, property) prediction.

    ``predictions`` maps polymer -> property -> replicate values (Tg entries may
    be dicts with ``tg_K`` and ``quality``); a bare number is taken as already
    aggregated.
    """
    refs = load_references() if references is None else references
    verdicts = []
    for polymer in predictions:
        for prop in PROPERTIES:
            if prop not in predictions[polymer]:
                continue
            ref = refs.get((polymer, prop))
            if ref is None:
                raise MissingReference(f"no reference for {polymer} {prop}")
            values = predictions[polymer][prop]
            best = None
            if prop == TG:
                reps = values if isinstance(values, (list, tuple)) else [values]
                rng = ref.experimental or ref.md_literature
                if rng is not None:
                    best, pred = best_tg_replicate(reps, *rng)
                else:
                    best, pred = 0, _tg_value(reps[0])[0]
            else:
                pred = _ensemble(values)
            if ref.rule != EXPERIMENTAL:
                verdicts.append(ValidationVerdict(polymer, prop, pred, None, "K" if prop == TG else "%",
                                                  EXCLUDED, best))
                continue
            lo, hi = ref.experimental
            if prop == TG:
                delta = pred - hi
                ok = abs(distance_to_range(pred, lo, hi)) <= TG_TOLERANCE_K
                verdicts.append(ValidationVerdict(polymer, prop, pred, delta, "K", PASS if ok else FAIL, best))
            else:
                dist = distance_to_range(pred, lo, hi)
                bound = lo if pred < lo else hi
                pct = dist / bound * 100.0
                tol = DENSITY_TOLERANCE_PCT if prop == DENSITY else BULK_MODULUS_TOLERANCE_PCT
                ok = abs(pct) <= tol
                verdicts.append(ValidationVerdict(polymer, prop, pred, pct, "%", PASS if ok else FAIL, best))
    return verdicts


def _cell(v: ValidationVerdict):
    if v.verdict == EXCLUDED:
        return "---"
    mark = "PASS" if v.verdict == PASS else "FAIL"
    if v.delta_unit == "K":
        return f"{mark} ({v.delta:+.0f} K)"
    digits = 1 if v.property == DENSITY else 0
    d = round(v.delta, digits)
    d = 0.0 if d == 0 else d  # no "-0"
    return f"{mark} ({d:+.{digits}f}%)"


def summary_table(verdicts) -> str:
    """Markdown table with properties as rows and polymers as columns."""
    polymers = []
    for v in verdicts:
        if v.polymer not in polymers:
            polymers.append(v.polymer)
    titles = {TG: f"Tg (+/-{TG_TOLERANCE_K:g} K)", DENSITY: f"Density (+/-{DENSITY_TOLERANCE_PCT:g}%)",
              BULK_MODULUS: f"Bulk modulus (+/-{BULK_MODULUS_TOLERANCE_PCT:g}%)"}
    by_key = {(v.polymer, v.property): v for v in verdicts}
    lines = ["| Property (criterion) | " + " | ".join(polymers) + " |",
             "|---|" + "---|" * len(polymers)]
    for prop in PROPERTIES:
        cells = [_cell(by_key[(p, prop)]) if (p, prop) in by_key else "" for p in polymers]
        lines.append(f"| {titles[prop]} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def summary_counts(verdicts) -> dict:
    out = {PASS: 0, FAIL: 0, EXCLUDED: 0}
    for v in verdicts:
        out[v.verdict] += 1
    return out


def summary_dict(verdicts) -> dict:
    return {"verdicts": [v.to_dict() for v in verdicts], "counts": summary_counts(verdicts),
            "markdown": summary_table(verdicts)}


def mean_absolute_error(values):
    vals = [abs(v) for v in values]
    return math.fsum(vals) / len(vals)
