"""Command-line entry point.

Three subcommands: ``simulate`` writes one trial's per-step trajectory,
``mc`` writes coverage/variance tables plus per-draw results, ``diagnose``
refits a stored trajectory and writes the conditional-variance path.

Every data file is byte-deterministic given (config, seed): fixed column
order, 17-significant-digit decimals, LF newlines. The mc manifest records
wall-clock timestamps unless SOURCE_DATE_EPOCH is set (the reproducible-
builds convention), in which case it too is byte-stable.

Exit codes: 0 success, 2 validation/parse failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .config import SCHEMA, config_to_json, load_config, preset_config
from .core import PositivityError, SpecificationError, TrialConfig, ValidationError
from .dgp import resolve_dgp
from .harness import estimate_from_trajectory, mc_coverage, run_adaptive_trial
from .regression import SelectionError

_USER_ERRORS = (ValidationError, SpecificationError, PositivityError, SelectionError)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _resolve_config(args) -> TrialConfig:
    if (args.config is None) == (args.preset is None):
        raise ValidationError("config: pass exactly one of --config or --preset")
    if args.config is not None:
        return load_config(args.config)
    return preset_config(args.preset)


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _trajectory_text(config: TrialConfig, trajectory) -> str:
    lines = ["t,a,y," + ",".join(trajectory.w_names) + ",g_used,blip_estimate,d_decision"]
    for i in range(trajectory.n):
        cells = [
            str(i + 1),
            str(int(trajectory.a[i])),
            str(int(trajectory.y[i])),
            *(_fmt(v) for v in trajectory.w[i]),
            _fmt(trajectory.g1[i]),
            _fmt(trajectory.blip[i]),
            str(int(trajectory.d[i])),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    config = _resolve_config(args)
    _, trajectory = run_adaptive_trial(config, args.seed, keep_trajectory=True)
    _write_text(args.out, _trajectory_text(config, trajectory))
    return 0


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = datetime.datetime.fromtimestamp(int(epoch), tz=datetime.timezone.utc)
    else:
        moment = datetime.datetime.now(tz=datetime.timezone.utc)
    return moment.isoformat()


def _coverage_text(table) -> str:
    lines = ["checkpoint,coverage,variance"]
    for ck, cov, var in zip(table.checkpoints, table.coverage, table.variance):
        lines.append(f"{ck},{_fmt(cov)},{_fmt(var)}")
    return "\n".join(lines) + "\n"


def _plotdata_text(results) -> str:
    lines = ["draw,checkpoint,psi_hat,truth,ci_lo,ci_hi"]
    for i, res in enumerate(results):
        for ck, report, truth in zip(res.checkpoints, res.reports, res.truths):
            lines.append(
                f"{i},{ck},{_fmt(report.psi_hat)},{_fmt(truth)},"
                f"{_fmt(report.ci[0])},{_fmt(report.ci[1])}"
            )
    return "\n".join(lines) + "\n"


def cmd_mc(args) -> int:
    config = _resolve_config(args)
    started = _timestamp()
    table, results = mc_coverage(
        config, args.draws, base_seed=args.seed, jobs=args.jobs, collect_trials=True
    )
    os.makedirs(args.out, exist_ok=True)
    outputs = {
        "coverage.csv": _coverage_text(table),
        "trials.jsonl": "".join(
            json.dumps(res.to_json_dict(), separators=(",", ":")) + "\n"
            for res in results
        ),
        "plotdata.csv": _plotdata_text(results),
    }
    digests = {}
    for name, text in outputs.items():
        _write_text(os.path.join(args.out, name), text)
        digests[name] = "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()
    manifest = {
        "schema": SCHEMA,
        "tool": "nof1trial",
        "version": __version__,
        "command": "mc",
        "config": config_to_json(config),
        "base_seed": args.seed,
        "draws": args.draws,
        "started_at": started,
        "finished_at": _timestamp(),
        "files": digests,
    }
    _write_text(
        os.path.join(args.out, "run_manifest.json"),
        json.dumps(manifest, indent=2) + "\n",
    )
    return 0


def _parse_trajectory(path: str, config: TrialConfig):
    spec = resolve_dgp(config.dgp_id)
    expected = ["t", "a", "y", *spec.w_names, "g_used", "blip_estimate", "d_decision"]
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines:
        raise ValidationError("trajectory: empty file")
    header = lines[0].split(",")
    if header != expected:
        raise ValidationError(
            f"trajectory: header {header} does not match the configured dgp {expected}"
        )
    if len(lines) == 1:
        raise ValidationError("trajectory: no data rows")
    n = len(lines) - 1
    n_w = len(spec.w_names)
    a = np.zeros(n)
    y = np.zeros(n)
    w = np.zeros((n, n_w))
    g1 = np.zeros(n)
    blip = np.zeros(n)
    d = np.zeros(n, dtype=np.int8)
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != len(expected):
            raise ValidationError(f"trajectory: row {i + 2} has {len(cells)} cells")
        try:
            if int(cells[0]) != i + 1:
                raise ValidationError(f"trajectory: row {i + 2} is out of order")
            a[i] = float(cells[1])
            y[i] = float(cells[2])
            for j in range(n_w):
                w[i, j] = float(cells[3 + j])
            g1[i] = float(cells[3 + n_w])
            blip[i] = float(cells[4 + n_w])
            d[i] = int(float(cells[5 + n_w]))
        except ValueError as exc:
            raise ValidationError(f"trajectory: row {i + 2}: {exc}") from exc
    return a, y, w, g1, blip, d


def cmd_diagnose(args) -> int:
    config = _resolve_config(args)
    columns = _parse_trajectory(args.trial, config)
    report = estimate_from_trajectory(config, *columns)
    lines = ["n,running_cond_var_avg"]
    for n, avg in report.cond_var_path:
        lines.append(f"{n},{_fmt(avg)}")
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nof1trial",
        description="Adaptive single-series trial simulation and estimation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, draws=False):
        p.add_argument("--config", help="JSON config path")
        p.add_argument("--preset", choices=("sim1a", "sim1b"), help="built-in config")
        p.add_argument("--seed", type=int, default=0, help="base random seed")
        if draws:
            p.add_argument("--draws", type=int, default=500, help="Monte Carlo draws")
            p.add_argument(
                "--jobs", type=int, default=os.cpu_count() or 1,
                help="worker processes (never affects output bytes)",
            )

    p_sim = sub.add_parser("simulate", help="run one trial, write its trajectory CSV")
    common(p_sim)
    p_sim.add_argument("--out", required=True, help="trajectory CSV path")
    p_sim.set_defaults(func=cmd_simulate)

    p_mc = sub.add_parser("mc", help="run a coverage study, write tables + manifest")
    common(p_mc, draws=True)
    p_mc.add_argument("--out", required=True, help="output directory")
    p_mc.set_defaults(func=cmd_mc)

    p_diag = sub.add_parser(
        "diagnose", help="refit a stored trajectory, write the variance path"
    )
    common(p_diag)
    p_diag.add_argument("trial", help="trajectory CSV from simulate")
    p_diag.add_argument("--out", required=True, help="variance-path CSV path")
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
