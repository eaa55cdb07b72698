"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 stage failure, 4 LLM transport failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Sequence, TextIO

from .codegen import CodegenError, LoweringError, validate_rtl, write_rtl
from .cwe_db import DbError, load_db, lookup
from .cwe_filter import FilterConfig
from .llm_client import LlmError, ProviderConfig
from .pipeline import ConfigError, PipelineConfig, rtl_artifacts, run_pipeline
from .policy import (PolicyError, assertion_to_policy, classify_placement, dumps_policies, loads_policies,
                     parse_action)
from .spec_model import (MissingAnswerError, Role, SpecError, SurveyError, UnparseableAnswerError,
                         check_answer, load_spec, load_survey_template, serialize_spec, survey_to_spec)
from .sva import SvaSyntaxError, UncorrectableError, correct, lint, parse_assertion

log = logging.getLogger("socsec")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_LLM = 0, 2, 3, 4


class SessionAborted(RuntimeError):
    pass


Ask = Callable[[str], str]


def _asker(stdin: TextIO, stdout: TextIO) -> Ask:
    def ask(prompt: str) -> str:
        stdout.write(prompt)
        stdout.flush()
        line = stdin.readline()
        if not line:
            raise EOFError
        return line.rstrip("\n")
    return ask


def prompt_survey(ask: Ask, say: Callable[[str], None] = print, template=None):
    """Walk the survey interactively; invalid answers are asked again, EOF aborts."""
    template = template or load_survey_template()
    answers: dict[str, str] = {}

    def one(q) -> str:
        while True:
            try:
                raw = ask(f"{q.prompt} ").strip()
            except EOFError:
                raise SessionAborted(f"input ended at {q.id}") from None
            if not raw:
                if not q.required:
                    return ""
                say(f"  {q.id} needs an answer")
                continue
            try:
                return check_answer(q, raw)
            except UnparseableAnswerError as exc:
                say(f"  {exc}")

    for q in template.soc:
        answers[q.id] = one(q)
    for role, key in ((Role.MASTER, "soc.num_masters"), (Role.SLAVE, "soc.num_slaves")):
        for i in range(1, int(answers[key]) + 1):
            for q in template.ip_questions(role, i):
                answers[q.id] = one(q)
    return survey_to_spec(answers, template)


def prompt_actions(pending: Sequence[tuple[str, str | None]], ask: Ask,
                   say: Callable[[str], None] = print) -> dict[str, str]:
    """Collect one action per assertion key; empty input takes the offered default."""
    out = {}
    for key, default in pending:
        out[key] = prompt_one_action(key, default, ask, say)
    return out


def prompt_one_action(key: str, default: str | None, ask: Ask, say: Callable[[str], None] = print) -> str:
    hint = f" [{default}]" if default else ""
    while True:
        try:
            raw = ask(f"Action for {key}{hint}: ").strip()
        except EOFError:
            raise SessionAborted(f"input ended while asking for the action of {key}") from None
        if not raw:
            if default:
                return default
            say("  no default is available; enter an action such as  sig = 32'h0;")
            continue
        try:
            parse_action(raw)
        except PolicyError as exc:
            say(f"  {exc}")
            continue
        return raw


def _read_answers(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read answers file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("answers file must hold a JSON object")
    return data


# -- subcommands ---------------------------------------------------------------------

def cmd_run(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    answers = _read_answers(args.answers)
    actions = answers.get("actions", {})
    if not isinstance(actions, dict):
        raise ConfigError("'actions' in the answers file must map assertion keys to actions")
    provider = None
    if not args.offline:
        provider = ProviderConfig(endpoint_url=args.endpoint, model_name=args.model, api_key_ref=args.api_key_env)
    ask = _asker(stdin, stdout)

    def prompt(key: str, default: str | None) -> str:
        return prompt_one_action(key, default, ask, lambda m: print(m, file=stdout))
    only = None
    if args.only_violated is not None:
        only = tuple(s.strip() for s in args.only_violated.split(",") if s.strip())
    config = PipelineConfig(
        spec_path=args.spec, out_dir=args.out, db_path=args.db, provider=provider,
        mock_dir=args.mock_dir, offline=args.offline, stages=args.stages,
        filter=FilterConfig(args.threshold, args.llm_fallback, args.indeterminate, args.ip_fallback),
        actions=actions, only_violated=only, sva_source=args.sva_source, resume=args.resume,
        action_prompt=prompt if args.ask_actions else None)
    report = run_pipeline(config)
    for stage, status in report.stages.items():
        print(f"{stage:<7} {status}", file=stdout)
    if report.relevance_metric is not None:
        print(f"filtered {report.filtered_count} of {report.candidate_count} "
              f"(relevance {report.relevance_metric:.4f})", file=stdout)
    if report.error:
        print(f"error: {report.error}", file=sys.stderr)
    return report.exit_code


def cmd_survey(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    if args.answers is not None:
        given = _read_answers(args.answers)
        given = given.get("survey", given)
        spec = survey_to_spec({k: str(v) for k, v in given.items()})
    else:
        spec = prompt_survey(_asker(stdin, stdout), lambda m: print(m, file=stdout))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(serialize_spec(spec), encoding="utf-8")
    print(f"wrote {args.out}", file=stdout)
    return EXIT_OK


def cmd_lint(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    text = _read_text(args.file)
    findings = lint(text)
    for f in findings:
        fix = f"  fix: {f.fix!r}" if f.fix is not None else ""
        print(f"{args.file}:{f.span[0]}-{f.span[1]}: {f.rule_id} {f.message}{fix}", file=stdout)
    if args.fix:
        fixed, _ = correct(text)
        print(fixed, end="" if fixed.endswith("\n") else "\n", file=stdout)
    if any(f.rule_id == "R0" for f in findings):
        return EXIT_STAGE
    if not args.fix and any(f.fix is not None for f in findings):
        return EXIT_STAGE
    return EXIT_OK


def cmd_translate(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    text = _read_text(args.file)
    unit = parse_assertion(text)
    spec = load_spec(args.spec) if args.spec else None
    policy = assertion_to_policy(unit, args.action, spec, args.cwe, args.mode)
    if spec is not None:
        entry = None
        if args.cwe:
            entry = lookup(load_db(args.db), args.cwe)
        ip = spec.find_ip(args.ip) if args.ip else None
        if args.ip and ip is None:
            raise ConfigError(f"no IP named {args.ip!r} in {args.spec}")
        policy = classify_placement(policy, entry, spec, ip)
    print(dumps_policies([policy]), end="", file=stdout)
    return EXIT_OK


def cmd_gen_rtl(args: argparse.Namespace, stdin: TextIO, stdout: TextIO) -> int:
    policies = loads_policies(_read_text(args.policies))
    spec = load_spec(args.spec)
    arts = rtl_artifacts(policies, spec)
    failed = False
    for art in arts:
        for finding in validate_rtl(art):
            failed = True
            print(f"{art.file_name}: {finding}", file=sys.stderr)
        for w in art.warnings:
            print(f"{art.file_name}: warning: {w}", file=sys.stderr)
    if failed:
        return EXIT_STAGE
    for path in write_rtl(arts, args.out):
        print(path, file=stdout)
    return EXIT_OK


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="socsec", description="SoC security assertions, policies and RTL")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline stages")
    run.add_argument("--spec", type=Path, required=True)
    run.add_argument("--db", type=Path, help="CWE database TSV (default: the bundled one)")
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--offline", action="store_true", help="never contact a live LLM")
    run.add_argument("--mock-dir", type=Path, help="directory of canned LLM responses")
    run.add_argument("--stages", default="query,cwe,filter,sva,policy,rtl",
                     help="comma list of stages or letters q,c,f,s,p,r (must start at query)")
    run.add_argument("--answers", type=Path, help="JSON file with an 'actions' object")
    run.add_argument("--ask-actions", action="store_true", help="prompt for each policy action")
    run.add_argument("--only-violated", help="comma list of CWE ids or assertion keys to turn into policies")
    run.add_argument("--resume", action="store_true", help="reuse valid stage checkpoints")
    run.add_argument("--sva-source", choices=("llm", "template"), default="llm")
    run.add_argument("--threshold", type=float, default=0.75, help="similarity threshold")
    run.add_argument("--llm-fallback", action="store_true", help="ask the LLM about unknown CWE ids")
    run.add_argument("--indeterminate", choices=("drop", "keep"), default="drop")
    run.add_argument("--ip-fallback", choices=("none", "all"), default="none")
    run.add_argument("--endpoint", default=ProviderConfig.endpoint_url)
    run.add_argument("--model", default=ProviderConfig.model_name)
    run.add_argument("--api-key-env", default=ProviderConfig.api_key_ref,
                     help="environment variable holding the API key")
    run.set_defaults(func=cmd_run)

    sv = sub.add_parser("survey", help="answer the SoC questionnaire and write a spec")
    sv.add_argument("--out", type=Path, required=True)
    sv.add_argument("--answers", type=Path, help="JSON object of question id -> answer")
    sv.set_defaults(func=cmd_survey)

    ln = sub.add_parser("lint-sva", help="lint an assertion file")
    ln.add_argument("file", type=Path)
    ln.add_argument("--fix", action="store_true", help="print the corrected text")
    ln.set_defaults(func=cmd_lint)

    tr = sub.add_parser("translate-sva", help="turn an assertion into a policy document")
    tr.add_argument("file", type=Path)
    tr.add_argument("--action", required=True)
    tr.add_argument("--cwe")
    tr.add_argument("--mode", type=int, default=0)
    tr.add_argument("--spec", type=Path, help="classify placement against this spec")
    tr.add_argument("--db", type=Path)
    tr.add_argument("--ip", help="IP the assertion was written for")
    tr.set_defaults(func=cmd_translate)

    gr = sub.add_parser("gen-rtl", help="generate enforcement RTL from a policy file")
    gr.add_argument("policies", type=Path)
    gr.add_argument("--spec", type=Path, required=True)
    gr.add_argument("--out", type=Path, default=Path("out/rtl"))
    gr.set_defaults(func=cmd_gen_rtl)
    return ap


def main(argv: Sequence[str] | None = None, stdin: TextIO | None = None, stdout: TextIO | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    try:
        return args.func(args, stdin, stdout)
    except (ConfigError, SpecError, DbError, MissingAnswerError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SessionAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LlmError as exc:
        print(f"LLM error: {exc}", file=sys.stderr)
        return EXIT_LLM
    except (SvaSyntaxError, UncorrectableError, PolicyError, CodegenError, LoweringError,
            SurveyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
