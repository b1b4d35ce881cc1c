"""Command-line driver: panel export, estimation and Monte Carlo tables.

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

from . import __version__
from .dgp import GenerationError, RngStream, SolverError, generate_panel, panel_to_csv, read_panel_csv
from .model_core import DomainError, ScenarioSpec, VisibilityMask, preset
from .montecarlo import (
    ALL_METHODS,
    METHODS,
    TABLE_IDS,
    ConfigError,
    McSummary,
    render_markdown,
    rows_to_csv,
    run_study,
    run_table,
    summary_to_csv,
)
from .proposed import EstimationError
from .recovery import RecoveryError, apply_mask, hide

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "PRODFN_SEED"

log = logging.getLogger("housing_prodfn")


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    table: Optional[int] = None
    methods: Tuple[str, ...] = ALL_METHODS
    mask: str = "none"
    out: str = "."
    workers: int = 1

    def __post_init__(self) -> None:
        if self.table is not None and self.table not in TABLE_IDS:
            raise ConfigError(f"table must be one of {TABLE_IDS}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown methods: {bad}")
        VisibilityMask.parse(self.mask)
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def seed(self) -> int:
        return self.scenario.seed

    @property
    def visibility(self) -> VisibilityMask:
        return VisibilityMask.parse(self.mask)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.to_dict(),
            "table": self.table,
            "methods": list(self.methods),
            "mask": self.mask,
            "out": self.out,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "scenario" in d:
            d["scenario"] = ScenarioSpec.from_dict(d["scenario"])
        if "methods" in d:
            d["methods"] = tuple(d["methods"])
        return cls(**d)

    def echo(self) -> Dict[str, Any]:
        """Fields that determine results; output location and worker count excluded."""
        d = self.to_dict()
        del d["out"], d["workers"]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # route usage errors to the config exit code
        raise ConfigError(message)


def _dims(text: str) -> Tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ConfigError(f"--dims expects NxJxT, got {text!r}")
    try:
        N, J, T = (int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--dims expects integers, got {text!r}") from None
    return N, J, T


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help=f"master seed (fallback: ${SEED_ENV})")
    common.add_argument("--table", type=int, choices=TABLE_IDS)
    common.add_argument("--method", choices=ALL_METHODS + ("all",))
    common.add_argument("--mask", choices=("none", "hide-capital", "hide-value"))
    common.add_argument("--replications", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--eps-sd", type=float)
    common.add_argument("--no-productivity", action="store_true")
    common.add_argument("--tech", choices=("cd", "ces"))
    common.add_argument("--returns", choices=("crs", "drs"))
    common.add_argument("--dims", type=_dims, metavar="NxJxT")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="prodfn", description="Housing production function simulation and estimation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("generate", parents=[common], help="write one simulated panel as CSV")
    est = sub.add_parser("estimate", parents=[common], help="estimate elasticities from a panel CSV")
    est.add_argument("panel", help="panel CSV path")
    est.add_argument("--json", action="store_true", help="print the JSON report only")
    sub.add_parser("table", parents=[common], help="run a table's Monte Carlo grid and render it")
    sub.add_parser("study", parents=[common], help="run a Monte Carlo study and write CSVs")
    return p


def resolve_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    """Config file first, then flags; the seed falls back to the environment."""
    base: Dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a JSON object")
    cfg = RunConfig.from_dict(base)
    spec = cfg.scenario
    seed_in_file = "seed" in base.get("scenario", {})

    changes: Dict[str, Any] = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    elif not seed_in_file and environ.get(SEED_ENV):
        try:
            changes["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.eps_sd is not None:
        changes["eps_sd"] = args.eps_sd
    if args.no_productivity:
        changes["productivity_on"] = False
    if args.dims is not None:
        changes["N"], changes["J"], changes["T"] = args.dims
    if args.tech or args.returns:
        cur_tech = spec.tech.family.value
        cur_ret = "crs" if spec.tech.is_crs else "drs"
        tech = preset(args.tech or cur_tech, args.returns or cur_ret)
        changes["tech"] = tech
        if tech.family.value == "ces" and tech.is_crs:
            # this design produces a few negative land costs
            changes["allow_negative_rent"] = True
    if changes.get("seed", 0) < 0:
        raise ConfigError("seed must be non-negative")
    spec = spec.replace(**changes)

    top: Dict[str, Any] = {"scenario": spec}
    if args.table is not None:
        top["table"] = args.table
    if args.method is not None:
        top["methods"] = ALL_METHODS if args.method == "all" else (args.method,)
    if args.mask is not None:
        top["mask"] = args.mask
    if args.out is not None:
        top["out"] = args.out
    if args.workers is not None:
        top["workers"] = args.workers
    return dataclasses.replace(cfg, **top)


# ---------------------------------------------------------------------------
# commands


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _echo_csv(cfg: RunConfig, body: str) -> str:
    return "# config: " + json.dumps(cfg.echo(), sort_keys=True) + "\n" + body


def cmd_generate(cfg: RunConfig) -> int:
    panel = generate_panel(cfg.scenario, RngStream(cfg.seed, 0))
    if cfg.mask != "none":
        panel = hide(panel, cfg.visibility)
    out = _outdir(cfg)
    _write(out / "panel.csv", panel_to_csv(panel))
    _write(out / "panel_config.json", cfg.to_json() + "\n")
    print(f"wrote {out / 'panel.csv'} ({panel.n_obs} rows)")
    return EXIT_OK


def _report_table(reports) -> str:
    def f(v):
        return "--" if v is None else f"{v:.3f}"

    lines = ["| method | capital | land |", "|---|---|---|"]
    lines += [f"| {r.method} | {f(r.eps_k_mean)} | {f(r.eps_l_mean)} |" for r in reports]
    return "\n".join(lines)


def cmd_estimate(cfg: RunConfig, panel_path: str, json_only: bool = False) -> int:
    mask = cfg.visibility
    panel = apply_mask(read_panel_csv(panel_path, mask), mask, cfg.scenario.capital_price)
    reports = [METHODS[m](panel) for m in cfg.methods]
    doc = {
        "config": cfg.to_dict(),
        "panel": os.fspath(panel_path),
        "n_obs": panel.n_obs,
        "reports": [r.summary() for r in reports],
    }
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonable)
    if cfg.out != ".":
        _write(_outdir(cfg) / "estimate.json", text + "\n")
    if json_only:
        print(text)
    else:
        print(_report_table(reports))
        print()
        print(text)
    return EXIT_OK


def _jsonable(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def _emit_study(cfg: RunConfig, summary: McSummary, stem: str, markdown: Optional[str]) -> None:
    out = _outdir(cfg)
    _write(out / f"{stem}_replications.csv", _echo_csv(cfg, rows_to_csv(summary.replications)))
    _write(out / f"{stem}_summary.csv", _echo_csv(cfg, summary_to_csv(summary)))
    _write(out / f"{stem}_config.json", cfg.to_json() + "\n")
    if markdown is not None:
        _write(out / f"{stem}.md", markdown + "\n<!-- config: " + json.dumps(cfg.echo(), sort_keys=True) + " -->\n")
    for w in summary.warnings:
        print(f"warning: {w}", file=sys.stderr)


def cmd_table(cfg: RunConfig, print_markdown: bool = True) -> int:
    if cfg.table is None:
        raise ConfigError("--table is required")
    summary = run_table(cfg.table, cfg.scenario, cfg.workers)
    md = render_markdown(cfg.table, summary, cfg.scenario)
    _emit_study(cfg, summary, f"table{cfg.table}", md)
    if print_markdown:
        print(md)
    return EXIT_OK


def cmd_study(cfg: RunConfig) -> int:
    if cfg.table is not None:
        cmd_table(cfg, print_markdown=False)
        return _done(cfg, f"table{cfg.table}")
    summary = run_study(cfg.scenario, cfg.methods, cfg.visibility, "custom", cfg.workers)
    _emit_study(cfg, summary, "study", None)
    return _done(cfg, "study")


def _done(cfg: RunConfig, stem: str) -> int:
    print(f"wrote {Path(cfg.out) / (stem + '_summary.csv')}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
        cfg = resolve_config(args)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "estimate":
            return cmd_estimate(cfg, args.panel, args.json)
        if args.command == "table":
            return cmd_table(cfg)
        return cmd_study(cfg)
    except (ConfigError, DomainError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GenerationError, SolverError, EstimationError, RecoveryError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
