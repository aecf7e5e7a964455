"""Command line front end.

    audiocert certify-transform --job job.toml --out results/
    audiocert certify-corpus    --job corpus.toml --out results/
    audiocert sweep             --job sweep.toml --out results/
    audiocert probe-scorer      --scorer "bridge:python3 child.py"
    audiocert version

Jobs run locally by default; `--server URL` submits the job to a running
service instead and writes the identical report files from its response.

Exit codes: 0 success, 2 configuration error, 3 scorer/bridge failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__, driver, jobs
from .errors import ConfigError, ScorerError
from .jobs import load_job
from .reports import write_report_files, write_sweep_files
from .scorer import parse_scorer_spec, probe_scorer

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCORER = 3


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="audiocert",
                                     description="probabilistic robustness certification "
                                                 "for audio anti-spoofing scorers")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_job_command(name, help_text):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--job", required=True, help="job file (TOML)")
        cmd.add_argument("--out", default="audiocert_out", help="output directory")
        cmd.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE", help="override a job key (repeatable)")
        cmd.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                         help="parallel scoring lanes (never affects results)")
        cmd.add_argument("--seed", type=int, default=None, help="override the job seed")
        cmd.add_argument("--scorer", default=None, help="override the job scorer spec")
        cmd.add_argument("--server", default=None, metavar="URL",
                         help="submit to a running service instead of running locally")
        cmd.add_argument("--export-augmented", type=int, default=0, metavar="N",
                         help="also write the first N augmented variants per item")
        cmd.add_argument("--clip-exports", action="store_true",
                         help="clamp exported audio to [-1, 1] for playback")
        cmd.add_argument("-v", "--verbose", action="store_true")
        return cmd

    add_job_command("certify-transform", "certify each labeled clip under a transform")
    add_job_command("certify-corpus", "certify score distributions of generated corpora")
    add_job_command("sweep", "re-certify the same pooled draws under several (n, k) splits")

    probe = sub.add_parser("probe-scorer", help="handshake and determinism check")
    probe.add_argument("--scorer", required=True, help="scorer spec to probe")

    sub.add_parser("version", help="print the package version")
    return parser


def _effective_overrides(args) -> list:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.scorer is not None:
        overrides.append(f"scorer={json.dumps(args.scorer)}")
    return overrides


_EXPECTED_MODES = {
    "certify-transform": ("transform",),
    "certify-corpus": ("corpus", "vc"),
    "sweep": ("transform", "corpus", "vc"),
}


def _check_mode(command, job):
    allowed = _EXPECTED_MODES[command]
    if job.mode not in allowed:
        raise ConfigError(f"{command} needs a job with mode in {allowed}, got {job.mode!r}")


def _summarize(report) -> None:
    tag = f" [{report.split_label}]" if report.split_label else ""
    for eps, value in report.pca.items():
        print(f"pca@{eps:g}{tag} = {value:.4f}")
    if report.binary_pca is not None:
        for eps, value in report.binary_pca.items():
            print(f"binary_pca@{eps:g}{tag} = {value}")
    if report.mean_bound is not None:
        print(f"mean_bound{tag} = {report.mean_bound:.6g}")
        print(f"mean_error_prob{tag} = {report.mean_error_prob:.6g}")


def _export_augmented(job, args) -> None:
    if args.export_augmented <= 0 or job.transform is None:
        return
    entries = jobs.read_manifest(job.manifest, want_labels=(job.mode == "transform"))
    for index, (path, _) in enumerate(entries):
        clip = driver._load_clip(path, job.sample_rate)
        out_dir = os.path.join(args.out, "augmented", f"item_{index:03d}")
        driver.export_augmented(job.transform, clip, args.export_augmented,
                                driver.item_seed(job.seed, index), out_dir,
                                clip_to_unit=args.clip_exports)
    _log(f"wrote {args.export_augmented} augmented variants per item under "
         f"{os.path.join(args.out, 'augmented')}")


def _run_local(command, args) -> int:
    job = load_job(args.job, overrides=_effective_overrides(args))
    _check_mode(command, job)
    started = time.monotonic()
    if command == "sweep":
        reports = driver.run_budget_sweep(job, workers=args.workers)
        write_sweep_files(reports, job.config_echo, args.out)
        for report in reports:
            _summarize(report)
    else:
        run = driver.run_transform_job if command == "certify-transform" else driver.run_corpus_job
        report = run(job, workers=args.workers)
        write_report_files(report, args.out)
        _summarize(report)
        if getattr(args, "verbose", False):
            for item in report.items:
                status = item.error or ("certified" if all(item.certified.values())
                                        else "not certified at all epsilons")
                _log(f"item {item.index} ({item.path}): {status}")
    _export_augmented(job, args)
    _log(f"done in {time.monotonic() - started:.1f}s; reports in {args.out}")
    return EXIT_OK


def _run_remote(command, args) -> int:
    import httpx

    try:
        with open(args.job, "rb") as fh:
            table = jobs.tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"job file not found: {args.job}")
    except jobs.tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"job file is not valid TOML: {exc}")

    base = args.server.rstrip("/")
    payload = {
        "job": table,
        "overrides": _effective_overrides(args),
        "workers": args.workers,
        "base_dir": os.path.dirname(os.path.abspath(args.job)),
    }
    with httpx.Client(base_url=base, timeout=30.0) as client:
        accepted = client.post("/jobs", json=payload)
        if accepted.status_code != 202:
            raise ConfigError(f"service rejected the job: {accepted.status_code} {accepted.text}")
        job_id = accepted.json()["job_id"]
        _log(f"submitted job {job_id} to {base}")
        while True:
            record = client.get(f"/jobs/{job_id}").json()
            if record["status"] in ("done", "failed"):
                break
            time.sleep(0.25)
    if record["status"] == "failed":
        kind = record.get("error_kind")
        message = record.get("error") or "job failed"
        if kind == "scorer":
            raise ScorerError(message)
        raise ConfigError(message)
    os.makedirs(args.out, exist_ok=True)
    from .reports import atomic_write_text
    for name, text in record["artifacts"].items():
        atomic_write_text(os.path.join(args.out, name), text)
    _log(f"reports in {args.out}")
    return EXIT_OK


def _run_probe(args) -> int:
    scorer = parse_scorer_spec(args.scorer)
    try:
        record = probe_scorer(scorer)
    finally:
        scorer.close()
    print(f"name = {record['name']!r}")
    print(f"p_spoof = {record['p_spoof']!r}")
    print(f"p_bonafide = {record['p_bonafide']!r}")
    print(f"initial_class = {record['initial_class']!r}")
    print(f"deterministic = {str(record['deterministic']).lower()}")
    print(f"latency_ms = [{record['latency_ms'][0]:.2f}, {record['latency_ms'][1]:.2f}]")
    return EXIT_OK if record["deterministic"] else EXIT_SCORER


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "version":
            print(__version__)
            return EXIT_OK
        if args.command == "probe-scorer":
            return _run_probe(args)
        if args.server:
            return _run_remote(args.command, args)
        return _run_local(args.command, args)
    except ConfigError as exc:
        _log(f"configuration error: {exc}")
        return EXIT_CONFIG
    except ScorerError as exc:
        _log(f"scorer error: {exc}")
        return EXIT_SCORER


def entrypoint() -> None:
    raise SystemExit(main())
