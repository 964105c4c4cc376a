"""Dataset files, run configs, and report rendering.

Datasets are JSON Lines: one utterance record per line, grouped by
household_id at load time (records need not be contiguous). Floats are
serialized through repr, which round-trips 64-bit values exactly, so
simulate -> save -> load -> evaluate is bit-stable. Run configs are strict
JSON documents: unknown keys are rejected with the offending path.
"""

import csv
import hashlib
import io
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, StructuralError
from .evaluate import EvalReport, MethodSpec
from .fusion import EdgePoolFusion, FusionRule, PowerMeanFusion, SingleView
from .graph import CohortScaling, LocalScaling, ScalingRule, UniversalScaling
from .propagation import PropagationConfig
from .records import HouseholdDataset, UtteranceRecord
from .simulate import SimulationConfig

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# JSONL datasets
# ---------------------------------------------------------------------------

def record_to_dict(record: UtteranceRecord, group: str) -> dict:
    out: dict[str, Any] = {
        "utt_id": record.utt_id,
        "household_id": record.household_id,
        "group": group,
        "role": record.role,
    }
    if record.speaker is not None:
        out["speaker"] = record.speaker
    if record.session_id is not None:
        out["session_id"] = record.session_id
    if record.cohort is not None:
        out["cohort"] = record.cohort
    out["views"] = {name: vec.tolist() for name, vec in record.views.items()}
    return out


def save_dataset(households: Sequence[HouseholdDataset], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for hh in households:
            for record in hh.ordered():
                fh.write(json.dumps(record_to_dict(record, hh.group),
                                    separators=(",", ":")))
                fh.write("\n")


_RECORD_KEYS = {"utt_id", "household_id", "group", "role", "speaker",
                "session_id", "cohort", "views"}


def _parse_record(data: dict, line_no: int) -> tuple[UtteranceRecord, str]:
    unknown = set(data) - _RECORD_KEYS
    if unknown:
        raise StructuralError(f"line {line_no}: unknown record keys {sorted(unknown)}")
    for key in ("utt_id", "household_id", "role"):
        if key not in data:
            raise StructuralError(f"line {line_no}: missing {key!r}")
    views = data.get("views", {})
    if not isinstance(views, dict):
        raise StructuralError(f"line {line_no}: views must be an object")
    record = UtteranceRecord(
        utt_id=str(data["utt_id"]),
        household_id=str(data["household_id"]),
        role=str(data["role"]),
        speaker=data.get("speaker"),
        session_id=data.get("session_id"),
        cohort=data.get("cohort"),
        views={str(k): np.asarray(v, dtype=float) for k, v in views.items()})
    return record, str(data.get("group", "random"))


def load_dataset(path: str | Path) -> list[HouseholdDataset]:
    """Load and validate a JSONL dataset, grouping records by household."""
    path = Path(path)
    by_household: dict[str, list[UtteranceRecord]] = {}
    groups: dict[str, str] = {}
    seen_ids: set[str] = set()
    dims: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StructuralError(f"line {line_no}: malformed JSON ({exc})") from exc
            record, group = _parse_record(data, line_no)
            if record.utt_id in seen_ids:
                raise StructuralError(f"line {line_no}: duplicate utt_id {record.utt_id!r}")
            seen_ids.add(record.utt_id)
            for name, vec in record.views.items():
                if vec.ndim != 1:
                    raise StructuralError(
                        f"line {line_no}: view {name!r} of {record.utt_id!r} "
                        f"is not a flat vector")
                dims.setdefault(name, vec.shape[0])
                if vec.shape[0] != dims[name]:
                    raise StructuralError(
                        f"view {name!r} of {record.utt_id!r} has dimension "
                        f"{vec.shape[0]}, expected {dims[name]}")
            by_household.setdefault(record.household_id, []).append(record)
            groups.setdefault(record.household_id, group)
    if not by_household:
        raise StructuralError(f"{path}: no households found")
    households = []
    for hid in sorted(by_household):
        records = by_household[hid]
        cohorts = {r.cohort for r in records}
        hh = HouseholdDataset(
            household_id=hid, group=groups[hid], utterances=records,
            cohort=cohorts.pop() if len(cohorts) == 1 else None)
        hh.validate()
        households.append(hh)
    return households


# ---------------------------------------------------------------------------
# Run configs
# ---------------------------------------------------------------------------

def _reject_unknown(data: Mapping, allowed: set[str], path: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)}")


def scaling_from_dict(data: Mapping, path: str = "scaling") -> ScalingRule:
    kind = data.get("kind")
    if kind == "universal":
        _reject_unknown(data, {"kind", "sigma"}, path)
        return UniversalScaling(sigma=float(data["sigma"]))
    if kind == "cohort":
        _reject_unknown(data, {"kind", "sigma_by_cohort"}, path)
        return CohortScaling(sigma_by_cohort={str(k): float(v) for k, v
                                              in data["sigma_by_cohort"].items()})
    if kind == "local":
        _reject_unknown(data, {"kind", "k", "s"}, path)
        return LocalScaling(k=int(data["k"]), s=float(data["s"]))
    raise ConfigurationError(f"{path}: unknown scaling kind {kind!r}")


def scaling_to_dict(rule: ScalingRule) -> dict:
    if isinstance(rule, UniversalScaling):
        return {"kind": "universal", "sigma": rule.sigma}
    if isinstance(rule, CohortScaling):
        return {"kind": "cohort", "sigma_by_cohort": dict(rule.sigma_by_cohort)}
    return {"kind": "local", "k": rule.k, "s": rule.s}


def fusion_from_dict(data: Mapping, path: str = "fusion") -> FusionRule:
    kind = data.get("kind")
    if kind == "single_view":
        _reject_unknown(data, {"kind", "view"}, path)
        return SingleView(view_name=str(data["view"]))
    if kind == "edge_pool":
        _reject_unknown(data, {"kind", "views"}, path)
        return EdgePoolFusion(view_names=tuple(str(v) for v in data["views"]))
    if kind == "power_mean":
        _reject_unknown(data, {"kind", "views", "p", "shift"}, path)
        shift = data.get("shift")
        return PowerMeanFusion(view_names=tuple(str(v) for v in data["views"]),
                               p=float(data["p"]),
                               shift=None if shift is None else float(shift))
    raise ConfigurationError(f"{path}: unknown fusion kind {kind!r}")


def fusion_to_dict(rule: FusionRule) -> dict:
    if isinstance(rule, SingleView):
        return {"kind": "single_view", "view": rule.view_name}
    if isinstance(rule, EdgePoolFusion):
        return {"kind": "edge_pool", "views": list(rule.view_names)}
    return {"kind": "power_mean", "views": list(rule.view_names),
            "p": rule.p, "shift": rule.shift}


_PROPAGATION_KEYS = {"alpha", "tol", "max_iter", "solver", "step1_includes_heldout"}


def propagation_from_dict(data: Mapping, path: str = "propagation") -> PropagationConfig:
    _reject_unknown(data, _PROPAGATION_KEYS, path)
    kwargs = dict(data)
    return PropagationConfig(**kwargs)


_METHOD_KEYS = {"method", "view", "scaling", "fusion", "propagation",
                "session_sigma", "unit_normalize"}


def method_from_dict(data: Mapping, path: str = "method") -> MethodSpec:
    _reject_unknown(data, _METHOD_KEYS, path)
    scaling = data.get("scaling")
    fusion = data.get("fusion")
    propagation = data.get("propagation")
    return MethodSpec(
        method=str(data.get("method", "2LP")),
        view=str(data.get("view", "voice")),
        scaling=None if scaling is None else scaling_from_dict(scaling, f"{path}.scaling"),
        fusion=None if fusion is None else fusion_from_dict(fusion, f"{path}.fusion"),
        propagation=(PropagationConfig() if propagation is None
                     else propagation_from_dict(propagation, f"{path}.propagation")),
        session_sigma=float(data.get("session_sigma", 0.25)),
        unit_normalize=bool(data.get("unit_normalize", False)))


def method_to_dict(spec: MethodSpec) -> dict:
    return {
        "method": spec.method,
        "view": spec.view,
        "scaling": None if spec.scaling is None else scaling_to_dict(spec.scaling),
        "fusion": None if spec.fusion is None else fusion_to_dict(spec.fusion),
        "propagation": asdict(spec.propagation),
        "session_sigma": spec.session_sigma,
        "unit_normalize": spec.unit_normalize,
    }


_SIMULATION_KEYS = {f for f in SimulationConfig.__dataclass_fields__}


def simulation_from_dict(data: Mapping, path: str = "simulation") -> SimulationConfig:
    _reject_unknown(data, _SIMULATION_KEYS, path)
    kwargs = dict(data)
    if "dev_val_ratio" in kwargs:
        kwargs["dev_val_ratio"] = tuple(kwargs["dev_val_ratio"])
    if "groups" in kwargs:
        kwargs["groups"] = tuple(kwargs["groups"])
    return SimulationConfig(**kwargs)


_RUN_CONFIG_KEYS = {"schema_version", "seed", "simulation", "method"}


class RunConfig:
    """Top-level config document: seed, simulation, and method sections."""

    def __init__(self, seed: int = 0,
                 simulation: SimulationConfig | None = None,
                 method: MethodSpec | None = None,
                 raw: dict | None = None):
        self.seed = seed
        self.simulation = simulation
        self.method = method
        self.raw = raw if raw is not None else self.to_dict()

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {version!r}")
        _reject_unknown(data, _RUN_CONFIG_KEYS, "config")
        sim = data.get("simulation")
        method = data.get("method")
        return cls(seed=int(data.get("seed", 0)),
                   simulation=None if sim is None else simulation_from_dict(sim),
                   method=None if method is None else method_from_dict(method),
                   raw=dict(data))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with Path(path).open("r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: malformed JSON ({exc})") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "seed": self.seed}
        if self.simulation is not None:
            sim = asdict(self.simulation)
            sim["dev_val_ratio"] = list(sim["dev_val_ratio"])
            sim["groups"] = list(sim["groups"])
            out["simulation"] = sim
        if self.method is not None:
            out["method"] = method_to_dict(self.method)
        return out

    def hash(self) -> str:
        return config_hash(self.to_dict())


def config_hash(config: Mapping) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def report_to_dict(report: EvalReport, seed: int, cfg_hash: str,
                   include_timing: bool = False) -> dict:
    """Serializable report. Timing is excluded by default so that reruns of
    the same seed produce byte-identical files."""
    methods = []
    for m in report.methods:
        entry: dict[str, Any] = {
            "method": m.spec.method,
            "label": m.spec.label,
            "family": m.spec.family,
            "spec": method_to_dict(m.spec),
            "households": [
                {
                    "household_id": h.household_id,
                    "group": h.group,
                    "errors": h.errors,
                    "heldout": h.heldout,
                    "sier": h.sier,
                    "ties": h.ties,
                    "abstains": h.abstains,
                    "converged": h.converged,
                    **({"seconds": h.seconds} if include_timing else {}),
                }
                for h in m.households
            ],
            "groups": {g: {"errors": m.counts(g)[0], "heldout": m.counts(g)[1],
                           "sier": m.micro_sier(g)} for g in m.groups},
            "overall": {"errors": m.counts()[0], "heldout": m.counts()[1],
                        "sier": m.micro_sier()},
        }
        if m.skipped:
            entry["skipped"] = [{"household_id": hid, "error": msg}
                                for hid, msg in m.skipped]
        methods.append(entry)
    out = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "config_hash": cfg_hash,
        "methods": methods,
    }
    improvements = report.improvements()
    if improvements:
        out["improvement_vs_best_baseline_pct"] = improvements
        out["footnote"] = ("improvement rows compare each family's best "
                           "micro-SIER against the best baseline, per group")
    return out


def write_report(report: EvalReport, path: str | Path, seed: int,
                 cfg_hash: str, include_timing: bool = False) -> dict:
    data = report_to_dict(report, seed, cfg_hash, include_timing)
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return data


def render_report(data: Mapping, fmt: str) -> str:
    """Render a serialized report as json, csv, or a markdown table."""
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True)
    groups = sorted({g for m in data["methods"] for g in m["groups"]})
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["label", "family"] + groups + ["overall"])
        for m in data["methods"]:
            row = [m["label"], m["family"]]
            row += [_fmt_pct(m["groups"].get(g, {}).get("sier")) for g in groups]
            row.append(_fmt_pct(m["overall"]["sier"]))
            writer.writerow(row)
        return buf.getvalue()
    if fmt == "md":
        lines = ["| method | " + " | ".join(groups) + " | overall |",
                 "|---" * (len(groups) + 2) + "|"]
        for m in data["methods"]:
            cells = [_fmt_pct(m["groups"].get(g, {}).get("sier")) for g in groups]
            cells.append(_fmt_pct(m["overall"]["sier"]))
            lines.append("| " + m["label"] + " | " + " | ".join(cells) + " |")
        improvements = data.get("improvement_vs_best_baseline_pct")
        if improvements:
            lines.append("")
            lines.append("| improvement (%) | " + " | ".join(groups) + " |  |")
            lines.append("|---" * (len(groups) + 2) + "|")
            for family, row in improvements.items():
                cells = ["n/a" if row.get(g) is None else f"{row[g]:.1f}"
                         for g in groups]
                lines.append("| " + family + " | " + " | ".join(cells) + " |  |")
            lines.append("")
            lines.append(f"_{data['footnote']}_")
        return "\n".join(lines) + "\n"
    raise ConfigurationError(f"unknown report format {fmt!r}")


def _fmt_pct(value) -> str:
    return "" if value is None else f"{100.0 * value:.2f}"


def write_manifest(path: str | Path, cfg: RunConfig,
                   counts: Mapping[str, Mapping[str, int]]) -> dict:
    data = {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "households": {split: dict(groups) for split, groups in counts.items()},
        "files": {"dev": "dev.jsonl", "val": "val.jsonl"},
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return data
