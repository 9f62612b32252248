"""``restmut`` command line: ingest, mutate, run, report, pipeline, fixtures."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import fixtures
from .concretize import ConcretizationError, PlanOptions, TestPlan, concretize
from .config import ENV_CONFIG, ConfigError, RunConfig
from .engine import InvalidTestCase, SelectionStrategy, manifest, mutate_all
from .executor import Timeouts, exit_code, junit_xml, run_suite, setup_via_url
from .ingest import LogError, build_test_cases, collect_bindings, label_exchanges, parse_log
from .iots import IOTSError, TestCase, dumps_canonical, load_file, store
from .operators import OperatorContext, resolve
from .report import ReportError, build_report, load_results, render_table

log = logging.getLogger("restmut")

MANIFEST = "manifest.json"
BINDINGS = "bindings.json"


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        super().__init__(f"{stage}: {exc}")


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------

def write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def load_testcases(directory: str | Path) -> list[TestCase]:
    d = Path(directory)
    if not d.is_dir():
        raise IOTSError(f"{d} is not a directory")
    files = sorted(p for p in d.glob("*.json") if p.name not in (MANIFEST, BINDINGS))
    return [load_file(str(p)) for p in files]


def load_bindings(path: str | Path | None) -> dict[str, str]:
    if not path or not Path(path).exists():
        return {}
    return {str(k): str(v) for k, v in json.loads(Path(path).read_text(encoding="utf-8")).items()}


def operator_context(cfg: RunConfig) -> OperatorContext:
    return OperatorContext.with_payload_files(cfg.payloads) if cfg.payloads else OperatorContext()


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_ingest(logs: Sequence[str], sut_id: str, session_key: str, out: Path, lenient: bool = False) -> list[TestCase]:
    tcs: list[TestCase] = []
    bindings: dict[str, str] = {}
    for i, path in enumerate(logs):
        xs = label_exchanges(parse_log(Path(path).read_bytes(), lenient=lenient), sut_id)
        prefix = Path(path).stem if len(logs) > 1 else None
        tcs.extend(build_test_cases(xs, sut_id, session_key, prefix or Path(path).stem))
        bindings.update(collect_bindings(xs))
    for tc in tcs:
        write_bytes(out / f"{tc.name}.json", store(tc))
    write_bytes(out / BINDINGS, dumps_canonical(dict(sorted(bindings.items()))))
    return tcs


def stage_mutate(tcs: Sequence[TestCase], cfg: RunConfig, out: Path):
    ops = resolve(cfg.operators or None)
    strategy = SelectionStrategy(cfg.strategy, cfg.n)
    records = mutate_all(tcs, ops, strategy, cfg.seed, operator_context(cfg))
    for r in records:
        write_bytes(out / f"{r.id}.json", store(r.mutant))
    man = manifest(records, strategy, cfg.seed, ops, len(tcs))
    write_bytes(out / MANIFEST, dumps_canonical(man))
    return records, man


def stage_concretize(mutants_dir: Path, cfg: RunConfig, bindings: dict[str, str], out: Path | None) -> tuple[list[TestPlan], dict]:
    man_path = mutants_dir / MANIFEST
    man = json.loads(man_path.read_text(encoding="utf-8")) if man_path.exists() else {}
    files = [mutants_dir / m["file"] for m in man.get("mutants", ())] if man else sorted(
        p for p in mutants_dir.glob("*.json") if p.name != MANIFEST)
    opts = PlanOptions(session_delay=cfg.session_delay_s)
    plans = []
    for p in files:
        tc = load_file(str(p))
        plan = concretize(tc, bindings, cfg.seed, p.stem, opts)
        plans.append(plan)
        if out is not None:
            write_bytes(out / f"{p.stem}.json", dumps_canonical(plan.to_json()))
    return plans, man


def stage_run(plans: Sequence[TestPlan], cfg: RunConfig):
    if not cfg.sut_url:
        raise ConfigError("the run stage needs a SUT URL (--sut / sut_url)")
    setup = setup_via_url(cfg.setup_url) if cfg.setup_url else None
    return run_suite(plans, cfg.sut_url, Timeouts.from_ms(cfg.quiescence_ms), setup, cfg.port)


def write_report(results, man, out: Path, junit: bool, weaknesses=None) -> dict:
    rep = build_report(results, man, weaknesses)
    write_bytes(out / "report.json", dumps_canonical(rep))
    if junit:
        write_bytes(out / "junit.xml", junit_xml(results).encode("utf-8"))
    return rep


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _config(args: argparse.Namespace, **overrides: Any) -> RunConfig:
    """Config file < ``$RESTMUT_SEED`` < command-line flags."""
    env = dict(os.environ)
    if getattr(args, "config", None):
        env[ENV_CONFIG] = args.config
    return RunConfig.from_env(env, **overrides)


def cmd_ingest(args: argparse.Namespace) -> int:
    tcs = stage_ingest(args.log, args.sut, args.session_key, Path(args.out), args.lenient)
    print(f"{len(tcs)} test case(s) written to {args.out}")
    return 0


def cmd_mutate(args: argparse.Namespace) -> int:
    cfg = _config(args, seed=args.seed, strategy=args.strategy, n=args.n,
                  operators=args.ops.split(",") if args.ops else None, payloads=_payload_args(args.payload))
    tcs = load_testcases(args.inp)
    records, man = stage_mutate(tcs, cfg, Path(args.out))
    print(f"{len(records)} mutant(s) from {len(tcs)} test case(s) written to {args.out}")
    for op, n in man["counts"].items():
        print(f"  {op}: {n}")
    return 0


def _payload_args(items: Sequence[str] | None) -> dict[str, str] | None:
    if not items:
        return None
    out = {}
    for it in items:
        kind, sep, path = it.partition("=")
        if not sep:
            raise ConfigError(f"--payload expects kind=path, got {it!r}")
        out[kind] = path
    return out


def cmd_run(args: argparse.Namespace) -> int:
    mock_port = "auto" if args.mock_port in (None, "auto") else int(args.mock_port)
    cfg = _config(args, seed=args.seed, sut_url=args.sut, setup_url=args.setup_url, quiescence_ms=args.timeout_ms,
                  session_delay_s=args.session_delay, mock_port=mock_port, dry_run=args.dry_run or None)
    if not cfg.dry_run and not cfg.sut_url:
        raise ConfigError("run needs --sut URL")
    mutants = Path(args.plans)
    bindings = load_bindings(args.bindings)
    plans_out = Path(args.plans_out) if args.plans_out else None
    plans, man = stage_concretize(mutants, cfg, bindings, plans_out)
    if cfg.dry_run:
        print(f"{len(plans)} plan(s) built; dry run, nothing sent")
        return 0
    results, summary = stage_run(plans, cfg)
    rep = build_report(results, man)
    if args.report:
        write_bytes(Path(args.report), dumps_canonical(rep))
    if args.emit == "junit-xml":
        write_bytes(Path(args.junit or "junit.xml"), junit_xml(results).encode("utf-8"))
    print(render_table(rep))
    return exit_code(results)


def cmd_report(args: argparse.Namespace) -> int:
    results = load_results(args.results)
    man = json.loads(Path(args.manifest).read_text(encoding="utf-8")) if args.manifest else None
    weak = fixtures.WEAKNESSES if args.fixture_weaknesses else None
    rep = build_report(results, man, weak)
    print(render_table(rep))
    if args.json:
        write_bytes(Path(args.json), dumps_canonical(rep))
    return rep["exitCode"]


def pipeline(cfg: RunConfig, weaknesses=None) -> tuple[int, dict | None]:
    """ingest -> mutate -> concretize -> run -> report, honouring ``cfg.stages``."""
    if cfg.wants("run") and not cfg.dry_run and not cfg.sut_url:
        raise ConfigError("the run stage needs a SUT URL (sut_url)")
    out = Path(cfg.out_dir)
    tc_dir, mut_dir, plan_dir = out / "testcases", out / "mutants", out / "plans"
    stage = "ingest"
    try:
        if cfg.wants("ingest") and cfg.logs:
            tcs = stage_ingest(cfg.logs, cfg.sut_id, cfg.session_key, tc_dir)
        else:
            tcs = []
        if cfg.testcases:
            tcs = tcs + load_testcases(cfg.testcases)
        bindings = load_bindings(tc_dir / BINDINGS)
        if cfg.testcases:
            bindings = {**load_bindings(Path(cfg.testcases) / BINDINGS), **bindings}
        stage = "mutate"
        if cfg.wants("mutate"):
            stage_mutate(tcs, cfg, mut_dir)
        stage = "concretize"
        if not cfg.wants("concretize"):
            return 0, None
        plans, man = stage_concretize(mut_dir, cfg, bindings, plan_dir)
        if cfg.dry_run or not cfg.wants("run"):
            return 0, None
        stage = "run"
        results, _ = stage_run(plans, cfg)
        stage = "report"
        rep = write_report(results, man, out, cfg.junit, weaknesses)
        return exit_code(results), rep
    except (ConfigError, ReportError):
        raise
    except (IOTSError, LogError, InvalidTestCase, ConcretizationError, OSError, ValueError) as exc:
        raise StageError(stage, exc) from exc


def cmd_pipeline(args: argparse.Namespace) -> int:
    overrides = dict(
        seed=args.seed, sut_url=args.sut, sut_id=args.sut_id, setup_url=args.setup_url, out_dir=args.out,
        logs=args.log or None, testcases=args.inp, strategy=args.strategy, n=args.n,
        operators=args.ops.split(",") if args.ops else None,
        dry_run=args.dry_run or None, junit=True if args.emit == "junit-xml" else None,
    )
    if args.skip:
        overrides["stages"] = [s for s in RunConfig.STAGES if s not in args.skip]
    cfg = _config(args, **overrides)
    if args.save_config:
        write_bytes(Path(args.save_config), cfg.dumps().encode())
    code, rep = pipeline(cfg, fixtures.WEAKNESSES if args.fixture_weaknesses else None)
    if rep is not None:
        print(render_table(rep))
    else:
        print(f"artifacts written to {cfg.out_dir}")
    return code


def cmd_fixtures(args: argparse.Namespace) -> int:
    return fixtures.run_from_args(args)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="restmut", description="security mutation testing for REST services")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--seed", type=int, default=None, help="run seed (default: $RESTMUT_SEED or 0)")
        sp.add_argument("--config", default=None, help="JSON run config (default: $RESTMUT_CONFIG)")

    sp = sub.add_parser("ingest", help="convert JSONL logs into IOTS test cases")
    sp.add_argument("--log", action="append", required=True)
    sp.add_argument("--sut", required=True, help="component id of the service under test")
    sp.add_argument("--session-key", default="from")
    sp.add_argument("--lenient", action="store_true", help="skip malformed lines")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("mutate", help="generate mutants")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--ops", default=None, help="comma-separated operator slugs, or 'all'")
    sp.add_argument("--strategy", default=None, type=str.upper, choices=("S0", "S1", "S2"))
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--payload", action="append", help="kind=path payload dictionary")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_mutate)

    sp = sub.add_parser("run", help="concretize mutants and execute them")
    sp.add_argument("--plans", required=True, help="directory of mutants (with manifest.json)")
    sp.add_argument("--sut", default=None, help="base URL of the service under test")
    sp.add_argument("--setup-url", default=None, help="POSTed {mockUrl} before each plan")
    sp.add_argument("--mock-port", default="auto")
    sp.add_argument("--timeout-ms", type=int, default=None)
    sp.add_argument("--session-delay", type=float, default=None, help="seconds waited by session mutants")
    sp.add_argument("--bindings", default=None, help="recorded parameter values (JSON)")
    sp.add_argument("--plans-out", default=None)
    sp.add_argument("--report", default=None)
    sp.add_argument("--emit", choices=("junit-xml",), default=None)
    sp.add_argument("--junit", default=None)
    sp.add_argument("--dry-run", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="summarise a results file")
    sp.add_argument("--results", required=True)
    sp.add_argument("--manifest", default=None)
    sp.add_argument("--json", default=None)
    sp.add_argument("--fixture-weaknesses", action="store_true")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("pipeline", help="ingest, mutate, run and report in one go")
    sp.add_argument("--log", action="append")
    sp.add_argument("--in", dest="inp", default=None)
    sp.add_argument("--sut", default=None, help="base URL of the service under test")
    sp.add_argument("--sut-id", default=None, help="component id of the service in the logs")
    sp.add_argument("--setup-url", default=None)
    sp.add_argument("--ops", default=None)
    sp.add_argument("--strategy", default=None, type=str.upper, choices=("S0", "S1", "S2"))
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--skip", action="append", choices=RunConfig.STAGES)
    sp.add_argument("--emit", choices=("junit-xml",), default=None)
    sp.add_argument("--dry-run", action="store_true")
    sp.add_argument("--save-config", default=None)
    sp.add_argument("--fixture-weaknesses", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("fixtures", help="start the demo AccMan services")
    fixtures.add_arguments(sp)
    sp.set_defaults(func=cmd_fixtures)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return int(args.func(args))
    except (ConfigError, ReportError, StageError) as exc:
        print(f"restmut: error: {exc}", file=sys.stderr)
        return 2
    except (IOTSError, LogError, InvalidTestCase, ConcretizationError, OSError, KeyError) as exc:
        print(f"restmut: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
