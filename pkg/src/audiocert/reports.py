"""Report assembly and serialization (structured text, CSV, config echo).

All emitters are pure functions of the report value, and files are written
atomically (temp file + rename), so two identical runs produce byte-identical
artifacts.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field

from .types import Direction


@dataclass
class ItemResult:
    index: int
    path: str
    label: str | None
    initial: Direction | None
    counted_correct: bool
    bound: float | None = None
    t_star: float | None = None
    c_hat: float | None = None
    c_tilde: float | None = None
    error_prob: float | None = None
    cv_method: str | None = None
    degenerate: bool = False
    certified: dict = field(default_factory=dict)  # epsilon -> bool
    error: str | None = None

    @classmethod
    def from_certificates(cls, index, path, label, initial, counted_correct, certs):
        head = certs[0]
        return cls(
            index=index, path=path, label=label, initial=initial,
            counted_correct=counted_correct, bound=head.bound, t_star=head.t_star,
            c_hat=head.c_hat, c_tilde=head.c_tilde, error_prob=head.error_prob,
            cv_method=head.cv_method, degenerate=head.degenerate,
            certified={c.epsilon: bool(c.certified) for c in certs})


@dataclass
class Report:
    mode: str
    scorer_name: str
    seed: int
    epsilon_grid: list
    budget: dict
    items: list
    config_echo: dict
    split_label: str | None = None

    @property
    def pca(self) -> dict:
        """Fraction of items that were initially classified correctly and hold
        a valid certificate, per epsilon. Failed items count as uncertified."""
        out = {}
        n = max(len(self.items), 1)
        for eps in self.epsilon_grid:
            good = sum(1 for it in self.items
                       if it.error is None and it.counted_correct and it.certified.get(eps, False))
            out[eps] = good / n
        return out

    @property
    def binary_pca(self) -> dict | None:
        """Uniform certification indicator per epsilon (corpus and vc modes):
        every group must hold a valid certificate."""
        if self.mode == "transform":
            return None
        return {eps: bool(self.items) and all(
            it.error is None and it.certified.get(eps, False) for it in self.items)
            for eps in self.epsilon_grid}

    def _ok_items(self):
        return [it for it in self.items if it.error is None]

    @property
    def mean_bound(self) -> float | None:
        ok = self._ok_items()
        return sum(it.bound for it in ok) / len(ok) if ok else None

    @property
    def mean_error_prob(self) -> float | None:
        ok = self._ok_items()
        return sum(it.error_prob for it in ok) / len(ok) if ok else None


# ---------------------------------------------------------------------------
# minimal TOML emission for config echoes and the text report


def _toml_scalar(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    s = str(v)
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def dumps_toml(table: dict, prefix="") -> str:
    """Emit a nested dict as TOML. Scalars/lists first, then sub-tables."""
    lines = []
    subtables = []
    for key, val in table.items():
        if val is None:
            continue
        if isinstance(val, dict):
            subtables.append((key, val))
        elif isinstance(val, (list, tuple)) and val and all(isinstance(x, dict) for x in val):
            subtables.append((key, list(val)))
        else:
            lines.append(f"{key} = {_toml_scalar(val)}")
    out = "\n".join(lines)
    for key, val in subtables:
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            body = dumps_toml(val, prefix=name + ".")
            out += f"\n\n[{name}]\n{body}" if body else f"\n\n[{name}]"
        else:
            for entry in val:
                body = dumps_toml(entry, prefix=name + ".")
                out += f"\n\n[[{name}]]\n{body}" if body else f"\n\n[[{name}]]"
    return out.strip()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, Direction):
        return v.value
    return str(v)


def report_txt(report: Report) -> str:
    buf = io.StringIO()
    head = {
        "mode": report.mode,
        "scorer": report.scorer_name,
        "seed": report.seed,
        "items": len(report.items),
        "epsilon_grid": list(report.epsilon_grid),
    }
    if report.split_label:
        head["split"] = report.split_label
    buf.write(dumps_toml({"run": head, "budget": report.budget}))
    buf.write("\n\n[aggregate]\n")
    for eps, v in report.pca.items():
        buf.write(f'pca_{eps:g} = {repr(v)}\n')
    if report.binary_pca is not None:
        for eps, v in report.binary_pca.items():
            buf.write(f'binary_pca_{eps:g} = {_fmt(v)}\n')
    buf.write(f"mean_bound = {_fmt(report.mean_bound)}\n")
    buf.write(f"mean_error_prob = {_fmt(report.mean_error_prob)}\n")
    for it in report.items:
        buf.write(f"\n[[item]]\n")
        buf.write(f"index = {it.index}\n")
        buf.write(f"path = {_toml_scalar(it.path)}\n")
        if it.label is not None:
            buf.write(f"label = {_toml_scalar(it.label)}\n")
        if it.error is not None:
            buf.write(f"error = {_toml_scalar(it.error)}\n")
            continue
        buf.write(f"initial_class = {_toml_scalar(it.initial.value)}\n")
        buf.write(f"counted_correct = {_fmt(it.counted_correct)}\n")
        buf.write(f"bound = {_fmt(it.bound)}\n")
        buf.write(f"t_star = {_fmt(it.t_star)}\n")
        buf.write(f"c_hat = {_fmt(it.c_hat)}\n")
        buf.write(f"c_tilde = {_fmt(it.c_tilde)}\n")
        buf.write(f"error_prob = {_fmt(it.error_prob)}\n")
        buf.write(f"cv_method = {_toml_scalar(it.cv_method)}\n")
        buf.write(f"degenerate = {_fmt(it.degenerate)}\n")
        for eps in report.epsilon_grid:
            buf.write(f"certified_{eps:g} = {_fmt(it.certified.get(eps, False))}\n")
    if report.config_echo:
        buf.write("\n" + dumps_toml({"config_echo": report.config_echo}) + "\n")
    return buf.getvalue()


def report_csv_rows(report: Report):
    eps_cols = [f"certified@{eps:g}" for eps in report.epsilon_grid]
    header = ["index", "path", "label", "initial_class", "counted_correct",
              "bound", "t_star", "c_hat", "c_tilde", "error_prob",
              "cv_method", "degenerate", *eps_cols, "error"]
    if report.split_label:
        header.insert(0, "split")
    rows = [header]
    for it in report.items:
        row = [it.index, it.path, _fmt(it.label),
               _fmt(it.initial.value if it.initial else None), _fmt(it.counted_correct),
               _fmt(it.bound), _fmt(it.t_star), _fmt(it.c_hat), _fmt(it.c_tilde),
               _fmt(it.error_prob), _fmt(it.cv_method), _fmt(it.degenerate),
               *[_fmt(it.certified.get(eps)) if it.error is None else ""
                 for eps in report.epsilon_grid],
               _fmt(it.error)]
        if report.split_label:
            row.insert(0, report.split_label)
        rows.append(row)
    return rows


def report_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(report_csv_rows(report))
    return buf.getvalue()


def sweep_csv(reports) -> str:
    """Concatenated per-item rows across splits, one header."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    first = True
    for rep in reports:
        rows = report_csv_rows(rep)
        writer.writerows(rows if first else rows[1:])
        first = False
    return buf.getvalue()


def sweep_txt(reports) -> str:
    buf = io.StringIO()
    for rep in reports:
        buf.write(f"[[split]]\n")
        buf.write(f"split = {_toml_scalar(rep.split_label)}\n")
        buf.write(f"mean_bound = {_fmt(rep.mean_bound)}\n")
        buf.write(f"mean_error_prob = {_fmt(rep.mean_error_prob)}\n")
        for eps, v in rep.pca.items():
            buf.write(f"pca_{eps:g} = {repr(v)}\n")
        buf.write("\n")
    return buf.getvalue()


def atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-report-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report_files(report: Report, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report.txt": report_txt(report),
        "report.csv": report_csv(report),
        "config_echo": dumps_toml(report.config_echo) + "\n",
    }
    for name, text in paths.items():
        atomic_write_text(os.path.join(out_dir, name), text)
    return {name: os.path.join(out_dir, name) for name in paths}


def write_sweep_files(reports, config_echo: dict, out_dir) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report.txt": sweep_txt(reports),
        "report.csv": sweep_csv(reports),
        "config_echo": dumps_toml(config_echo) + "\n",
    }
    for name, text in paths.items():
        atomic_write_text(os.path.join(out_dir, name), text)
    return {name: os.path.join(out_dir, name) for name in paths}
