"""Job file parsing.

A verification job is a TOML document describing what to certify:

    mode = "transform"            # or "corpus"
    seed = 7
    dataset = "manifest.tsv"      # transform mode: `<path>\t<label>` lines
    scorer = "centroid"
    epsilon_grid = [1e-5, 1e-3, 1e-2, 0.05]

    [budget]
    n = 1000
    k = 20
    delta = 0.9
    alpha = 1e-6

    [transform]
    kind = "low_pass"
    cutoff_hz = [2500.0, 3000.0]

Values can be overridden from the command line with dotted `--set` options,
e.g. `--set budget.n=250 --set transform.cutoff_hz=[4000,6000]`.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import transforms
from .certifier import DEFAULT_T_RANGE, CertBudget
from .errors import ConfigError, InvalidScoresError
from .types import Direction

DEFAULT_EPSILON_GRID = (1e-5, 1e-3, 1e-2, 0.05)
DEFAULT_DELTA = 0.9
DEFAULT_ALPHA = 1e-6
DEFAULT_SCORER = "centroid"
DEFAULT_SAMPLE_RATE = 16000

_MODES = ("transform", "corpus", "vc")

_TRANSFORM_PARAM_KEYS = {
    transforms.GAIN: ("gain_db",),
    transforms.LOW_PASS: ("cutoff_hz",),
    transforms.HIGH_PASS: ("cutoff_hz",),
    transforms.BAND_PASS: ("center_hz", "width_ratio"),
    transforms.GAUSSIAN_NOISE: ("sigma",),
    transforms.BACKGROUND_NOISE: ("snr_db",),
    transforms.PITCH_SHIFT: ("semitones",),
    transforms.TIME_STRETCH: ("rate",),
    transforms.RIR: (),
    transforms.COMPOSITE: (),
}


@dataclass
class VerificationJob:
    mode: str
    seed: int
    manifest: str
    scorer_spec: str
    epsilon_grid: tuple
    budget: CertBudget
    transform: transforms.TransformSpec | None
    sample_rate: int
    splits: tuple = ()
    config_echo: dict = field(default_factory=dict)
    base_dir: str = "."


def _range_pair(value, key):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (float(value), float(value))
    if (isinstance(value, (list, tuple)) and len(value) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        return (float(value[0]), float(value[1]))
    raise ConfigError(f"{key} must be a number or a [lo, hi] pair, got {value!r}")


def build_transform(table, base_dir, sample_rate) -> transforms.TransformSpec:
    if not isinstance(table, dict):
        raise ConfigError("transform must be a table")
    table = dict(table)
    kind = table.pop("kind", None)
    if kind not in _TRANSFORM_PARAM_KEYS:
        raise ConfigError(f"unknown transform kind {kind!r}")

    if kind == transforms.COMPOSITE:
        children_cfg = table.pop("children", None)
        if not children_cfg:
            raise ConfigError("composite transform needs a children array")
        children = [build_transform(child, base_dir, sample_rate) for child in children_cfg]
        _reject_extras(table, kind)
        return transforms.composite(*children)

    assets = None
    if kind in (transforms.BACKGROUND_NOISE, transforms.RIR):
        manifest = table.pop("assets", None)
        if not manifest:
            raise ConfigError(f"{kind} transform needs an assets manifest path")
        manifest = os.path.join(base_dir, manifest)
        assets = transforms.AssetBank.from_manifest(manifest, rate=sample_rate)

    params = {}
    for key in _TRANSFORM_PARAM_KEYS[kind]:
        if key not in table:
            raise ConfigError(f"{kind} transform needs {key}")
        params[key] = _range_pair(table.pop(key), f"transform.{key}")
    _reject_extras(table, kind)

    factory = {
        transforms.GAIN: lambda: transforms.gain(*params["gain_db"]),
        transforms.LOW_PASS: lambda: transforms.low_pass(*params["cutoff_hz"]),
        transforms.HIGH_PASS: lambda: transforms.high_pass(*params["cutoff_hz"]),
        transforms.BAND_PASS: lambda: transforms.band_pass(params["center_hz"], params["width_ratio"]),
        transforms.GAUSSIAN_NOISE: lambda: transforms.gaussian_noise(*params["sigma"]),
        transforms.BACKGROUND_NOISE: lambda: transforms.background_noise(assets, *params["snr_db"]),
        transforms.PITCH_SHIFT: lambda: transforms.pitch_shift(*params["semitones"]),
        transforms.TIME_STRETCH: lambda: transforms.time_stretch(*params["rate"]),
        transforms.RIR: lambda: transforms.rir(assets),
    }[kind]
    return factory()


def _reject_extras(table, kind):
    if table:
        raise ConfigError(f"unknown keys for {kind} transform: {sorted(table)}")


def _require(table, key, kinds, what):
    if key not in table:
        raise ConfigError(f"job is missing required key {key!r}")
    val = table[key]
    if not isinstance(val, kinds) or isinstance(val, bool):
        raise ConfigError(f"{key} must be {what}, got {val!r}")
    return val


def parse_override(text: str):
    """Parse a KEY=VALUE command line override; VALUE uses TOML syntax."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    raw = raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw  # bare strings are convenient: --set scorer=energy
    return key.split("."), value


def apply_overrides(table: dict, overrides) -> dict:
    for text in overrides or ():
        path, value = parse_override(text)
        node = table
        for part in path[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"cannot override through non-table key {part!r}")
            node = nxt
        node[path[-1]] = value
    return table


def _parse_splits(raw, m):
    splits = []
    for entry in raw:
        if not (isinstance(entry, list) and len(entry) == 2):
            raise ConfigError(f"sweep split must be [n, k], got {entry!r}")
        n, k = entry
        if not all(isinstance(v, int) and v > 0 for v in (n, k)):
            raise ConfigError(f"sweep split must hold positive integers, got {entry!r}")
        if n * k != m:
            raise ConfigError(f"sweep split n*k must equal budget n*k={m}, got {n}*{k}")
        splits.append((n, k))
    return tuple(splits)


def job_from_table(table: dict, base_dir=".") -> VerificationJob:
    table = dict(table)
    config_echo = _deep_copy_plain(table)

    mode = _require(table, "mode", str, "a string")
    if mode not in _MODES:
        raise ConfigError(f"mode must be one of {_MODES}, got {mode!r}")

    seed = table.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

    manifest_key = "dataset" if mode == "transform" else "corpus"
    manifest = _require(table, manifest_key, str, "a path string")
    manifest = os.path.join(base_dir, manifest)

    scorer_spec = table.get("scorer", DEFAULT_SCORER)
    if not isinstance(scorer_spec, str):
        raise ConfigError(f"scorer must be a spec string, got {scorer_spec!r}")

    eps_raw = table.get("epsilon_grid", list(DEFAULT_EPSILON_GRID))
    if (not isinstance(eps_raw, list) or not eps_raw
            or not all(isinstance(e, (int, float)) and not isinstance(e, bool) and 0 < e < 1
                       for e in eps_raw)):
        raise ConfigError(f"epsilon_grid must be a non-empty list of values in (0, 1), got {eps_raw!r}")
    epsilon_grid = tuple(sorted({float(e) for e in eps_raw}))

    sample_rate = table.get("sample_rate", DEFAULT_SAMPLE_RATE)
    if not isinstance(sample_rate, int) or isinstance(sample_rate, bool) or sample_rate <= 0:
        raise ConfigError(f"sample_rate must be a positive integer, got {sample_rate!r}")

    budget_tbl = table.get("budget")
    if not isinstance(budget_tbl, dict):
        raise ConfigError("job needs a [budget] table with n and k")
    n = _require(budget_tbl, "n", int, "an integer")
    k = _require(budget_tbl, "k", int, "an integer")
    delta = float(budget_tbl.get("delta", DEFAULT_DELTA))
    alpha = float(budget_tbl.get("alpha", DEFAULT_ALPHA))
    t_lo = float(budget_tbl.get("t_min_magnitude", -DEFAULT_T_RANGE[1]))
    t_hi = float(budget_tbl.get("t_max_magnitude", -DEFAULT_T_RANGE[0]))
    if not 0 < t_lo < t_hi:
        raise ConfigError(f"need 0 < t_min_magnitude < t_max_magnitude, got {t_lo}, {t_hi}")
    extras = set(budget_tbl) - {"n", "k", "delta", "alpha", "t_min_magnitude", "t_max_magnitude"}
    if extras:
        raise ConfigError(f"unknown budget keys: {sorted(extras)}")
    try:
        budget = CertBudget(n=n, k=k, delta=delta, alpha=alpha,
                            t_range=(-t_hi, -t_lo), direction=Direction.BONA_FIDE)
    except (ValueError, InvalidScoresError) as exc:
        raise ConfigError(str(exc)) from exc

    transform_spec = None
    if mode == "transform":
        tbl = table.get("transform")
        if tbl is None:
            raise ConfigError("transform mode needs a [transform] table")
        transform_spec = build_transform(tbl, base_dir, sample_rate)
    elif "transform" in table:
        raise ConfigError(f"{mode} mode does not take a [transform] table")

    splits = ()
    if "sweep" in table:
        sweep_tbl = table["sweep"]
        if not isinstance(sweep_tbl, dict) or "splits" not in sweep_tbl:
            raise ConfigError("[sweep] table needs a splits array")
        splits = _parse_splits(sweep_tbl["splits"], budget.m)

    known = {"mode", "seed", manifest_key, "scorer", "epsilon_grid", "sample_rate",
             "budget", "transform", "sweep"}
    extras = set(table) - known
    if extras:
        raise ConfigError(f"unknown job keys: {sorted(extras)}")

    return VerificationJob(
        mode=mode, seed=seed, manifest=manifest, scorer_spec=scorer_spec,
        epsilon_grid=epsilon_grid, budget=budget, transform=transform_spec,
        sample_rate=sample_rate, splits=splits, config_echo=config_echo,
        base_dir=base_dir)


def _deep_copy_plain(value):
    if isinstance(value, dict):
        return {k: _deep_copy_plain(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_deep_copy_plain(v) for v in value]
    return value


def load_job(path, overrides=()) -> VerificationJob:
    try:
        with open(path, "rb") as fh:
            table = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"job file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"job file is not valid TOML: {exc}") from exc
    apply_overrides(table, overrides)
    return job_from_table(table, base_dir=os.path.dirname(os.path.abspath(path)))


def job_from_dict(table: dict, base_dir=".", overrides=()) -> VerificationJob:
    table = _deep_copy_plain(table)
    apply_overrides(table, overrides)
    return job_from_table(table, base_dir=base_dir)


def read_manifest(path, *, want_labels):
    """Read a tab separated manifest. Transform datasets require a label per
    line; corpus manifests take an optional group name (default "all")."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError as exc:
        raise ConfigError(f"manifest not found: {path}") from exc
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        clip_path = os.path.join(base, parts[0])
        if want_labels:
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected `path<TAB>label`")
            label = parts[1].strip().lower()
            if label not in ("bonafide", "spoof"):
                raise ConfigError(f"{path}:{lineno}: label must be bonafide or spoof, got {label!r}")
            entries.append((clip_path, label))
        else:
            if len(parts) > 2:
                raise ConfigError(f"{path}:{lineno}: expected `path[<TAB>group]`")
            group = parts[1].strip() if len(parts) == 2 else "all"
            entries.append((clip_path, group))
    if not entries:
        raise ConfigError(f"manifest {path} has no entries")
    return entries
