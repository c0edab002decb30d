"""Command-line front end.

Subcommands: simulate, wait-study, probability, naive-baseline. Every flag
can also be set through an environment variable named ``JURYSIM_`` plus the
flag name in upper case (``--master-seed`` -> ``JURYSIM_MASTER_SEED``);
explicit flags win.

Exit codes: 0 success, 1 configuration or argument error, 2 a run failed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .. import probability as prob
from .campaign import (
    PARTIAL_MARKER,
    PHASE_COLUMNS,
    WAIT_COLUMNS,
    Campaign,
    CampaignError,
    default_parallel,
    phase_rows,
    run_campaign,
    to_csv,
    wait_rows,
    write_table,
)
from .config import ConfigError, load_config, parse_config

ENV_PREFIX = "JURYSIM_"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# wait-study grid used when no config is given
WAIT_STUDY_DEFAULT = {
    "name": "wait-study",
    "n": 2000,
    "j": 22,
    "time_params": {"t_min_ms": 100},
    "sweep": {"t_max_ms": [200, 400, 800, 1600], "t_ele_ms": [25, 50, 100, 200, 400, 800]},
}

log = logging.getLogger("jurysim")


class UsageError(Exception):
    pass


def naive_baseline(n: int) -> float:
    """Seconds for every node to attest every other one, perfectly parallel."""
    if n < 2:
        raise prob.ParameterError(f"need n >= 2, got {n}")
    # integer milliseconds keep the result exact to the printed precision
    return (835 + 849 * (n - 1)) / 1000


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _int_range(text: str) -> List[int]:
    """``a:b[:step]`` (inclusive) or comma-separated integers."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            if step <= 0:
                raise ValueError
            return list(range(lo, hi + 1, step))
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b[:step] or a,b,c, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=_env("out"), help="output directory")
    common.add_argument(
        "--format", choices=("csv", "json", "both"), default=_env("format", "both"), help="table format"
    )
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    campaign = argparse.ArgumentParser(add_help=False)
    campaign.add_argument("--config", type=Path, default=_env("config"), help="YAML scenario config")
    campaign.add_argument("--seeds", type=int, default=_env("seeds"), help="runs per parameter point")
    campaign.add_argument("--master-seed", type=int, default=_env("master_seed"), help="seed of the seed sequence")
    campaign.add_argument(
        "--parallel", type=int, default=_env("parallel"), help="worker processes (default: available cores)"
    )

    parser = argparse.ArgumentParser(prog="jurysim", description="Jury-based blame resolution simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common, campaign], help="run a simulation campaign")
    sub.add_parser("wait-study", parents=[common, campaign], help="sweep t_max and t_ele")

    p = sub.add_parser("probability", parents=[common], help="jury failure probabilities")
    p.add_argument("--n", type=int, required=True, help="network size")
    p.add_argument("--j", type=_int_range, required=True, help="jury size(s), e.g. 22 or 10:100:10")
    p.add_argument("--f", type=_int_range, required=True, help="adversary count(s), e.g. 0:3000:100")
    p.add_argument(
        "--q",
        default="both",
        help="quorum: an integer, 'standard' (2(j-1)/3), 'strong' (4(j-1)/5) or 'both'",
    )
    p.add_argument("--exact-below", type=int, default=prob.EXACT_BELOW_DEFAULT, help="exact arithmetic crossover")

    b = sub.add_parser("naive-baseline", help="time for all-pairs attestation")
    b.add_argument("--n", type=_int_range, required=True, help="network size(s)")
    return parser


def _campaign_config(args, default=None):
    overrides = {}
    if args.seeds is not None:
        overrides["run_count"] = int(args.seeds)
    if args.master_seed is not None:
        overrides["master_seed"] = int(args.master_seed)
    if args.config is not None:
        return load_config(args.config, overrides)
    if default is None:
        raise ConfigError("--config (or JURYSIM_CONFIG) is required")
    return parse_config(default, overrides)


def _run_and_write(args, config, stem: str, rows_of, columns) -> int:
    out: Path = args.out or Path("results")
    out.mkdir(parents=True, exist_ok=True)
    marker = out / PARTIAL_MARKER
    marker.write_text("campaign in progress\n")

    def flush(campaign: Campaign) -> None:
        write_table(rows_of(campaign), columns, out, stem, args.format)

    parallel = int(args.parallel) if args.parallel is not None else default_parallel()
    try:
        campaign = run_campaign(config, parallel=max(1, parallel), on_point=flush)
    except CampaignError as exc:
        flush(exc.partial)
        marker.write_text(
            f"campaign stopped after {len(exc.partial.points)} of {len(config.points())} points\n{exc}\n"
        )
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    flush(campaign)
    marker.unlink()
    for ext in (["csv"] if args.format == "csv" else ["json"] if args.format == "json" else ["csv", "json"]):
        print(out / f"{stem}.{ext}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = _campaign_config(args)
    return _run_and_write(args, config, "campaign", phase_rows, PHASE_COLUMNS)


def cmd_wait_study(args) -> int:
    config = _campaign_config(args, default=WAIT_STUDY_DEFAULT)
    return _run_and_write(args, config, "wait_study", wait_rows, WAIT_COLUMNS)


def _quorums(spec: str, j: int) -> List[tuple]:
    presets = {"standard": prob.standard_quorum, "strong": prob.strong_quorum}
    if spec == "both":
        return [(name, fn(j)) for name, fn in presets.items()]
    if spec in presets:
        return [(spec, presets[spec](j))]
    try:
        return [("explicit", int(spec))]
    except ValueError:
        raise UsageError(f"--q must be an integer, 'standard', 'strong' or 'both', got {spec!r}") from None


def cmd_probability(args) -> int:
    columns = ("preset",) + tuple(prob.CURVE_COLUMNS)
    rows = []
    for j in args.j:
        for preset, q in _quorums(args.q, j):
            for row in prob.failure_curve(args.n, j, q, args.f, exact_below=args.exact_below):
                rows.append({"preset": preset, **vars(row)})
    if args.out is None:
        sys.stdout.write(to_csv(rows, columns))
    else:
        for path in write_table(rows, columns, args.out, "probability", args.format):
            print(path)
    return EXIT_OK


def cmd_naive_baseline(args) -> int:
    for n in args.n:
        seconds = naive_baseline(n)
        print(f"n={n}: {seconds:.3f} s ({seconds / 3600:.2f} h)")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "wait-study": cmd_wait_study,
    "probability": cmd_probability,
    "naive-baseline": cmd_naive_baseline,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage; report it as a configuration error
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError, prob.ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.exception("run failed")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
