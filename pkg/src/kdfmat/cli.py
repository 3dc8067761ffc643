"""Command-line front end: ``kdfmat {eval,verify,fuzz,list-identities}``.

Exit codes
----------
0  success (converged / identity passed / every fuzz instance passed)
1  I/O, parse or usage error (the message names the offending field)
2  series not converged within ``--max-diagonal``
3  singular shift, singular matrix or branch cut
4  hypothesis violation (``verify``)
5  referee finding (an identity flagged as a referee failed)
6  identity residual above tolerance
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import identities as ids
from .campaign import campaign, make_instance
from .errors import BranchCut, HypothesisViolation, NotConverged, SingularMatrix, SingularShift
from .identities import IdentityInstance, run_instance
from .series import DEFAULT_CONTROL, SeriesControl, kdf_eval

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2
EXIT_SINGULAR = 3
EXIT_HYPOTHESIS = 4
EXIT_FINDING = 5
EXIT_FAIL = 6

TOL_ENV = "KDF_DEFAULT_TOL"

REPORT_FIELDS = ("id", "seed", "r", "knobs", "abs_residual", "rel_residual", "pass", "lhs_terms",
                 "rhs_terms", "status", "error")


class InputError(Exception):
    """Bad command-line input; the message is shown to the user."""


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=False, separators=(", ", ": "))


def _series_control(args) -> SeriesControl:
    tol = args.tol
    if tol is None:
        env = os.environ.get(TOL_ENV)
        if env is not None:
            try:
                tol = float(env)
            except ValueError:
                raise InputError(f"environment variable {TOL_ENV} is not a number: {env!r}") from None
    if tol is None:
        tol = DEFAULT_CONTROL.tol
    try:
        return SeriesControl(tol=tol, max_diagonal=args.max_diagonal)
    except ValueError as exc:
        raise InputError(f"--tol/--max-diagonal: {exc}") from None


def _read_json(path: str):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {out}: {exc.strerror}") from None


def _csv_text(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _report_row(rep: dict) -> list:
    return [json.dumps(rep.get(k), separators=(",", ":")) if k == "knobs" else rep.get(k, "")
            for k in REPORT_FIELDS]


def _check_id(identity_id: str) -> str:
    if identity_id not in ids.REGISTRY:
        raise InputError(f"--id: unknown identity {identity_id!r} (see list-identities)")
    return identity_id


# -- eval -------------------------------------------------------------------------


def _error_report(exc: Exception) -> dict:
    out = {"status": "error", "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, SingularShift):
        out.update({"k": exc.k, "role": exc.role, "index": exc.index})
    return out


def cmd_eval(args) -> int:
    ctrl = _series_control(args)
    obj = _read_json(args.input)
    if not isinstance(obj, dict):
        raise InputError("eval input must be a JSON object")
    for key in ("params", "x", "y"):
        if key not in obj:
            raise InputError(f"eval input is missing field {key!r}")
    try:
        params = ids.params_from_json(obj["params"], obj.get("r"))
        x = ids._complex_from_json(obj["x"], "x")
        y = ids._complex_from_json(obj["y"], "y")
    except ValueError as exc:
        raise InputError(str(exc)) from None
    code = EXIT_OK
    try:
        res = kdf_eval(params, x, y, ctrl)
        report = {"status": "ok", **res.to_json()}
    except NotConverged as exc:
        report = {"status": "not_converged", **exc.result.to_json()}
        code = EXIT_NOT_CONVERGED
    except (SingularShift, SingularMatrix, BranchCut) as exc:
        report = _error_report(exc)
        code = EXIT_SINGULAR
    if args.format == "csv":
        if "value" in report:
            lit = report["value"]
            r = lit["dim"]
            rows = [[i // r, i % r, re, im] for i, (re, im) in enumerate(zip(lit["re"], lit["im"]))]
            text = _csv_text(rows, ["row", "col", "re", "im"])
        else:
            text = _csv_text([list(report.values())], list(report))
    else:
        text = _dumps(report) + "\n"
    _write(text, args.out)
    return code


# -- verify -----------------------------------------------------------------------


def cmd_verify(args) -> int:
    ctrl = _series_control(args)
    identity_id = _check_id(args.id) if args.id else None
    if args.input is None and args.seed is None:
        raise InputError("verify needs an instance file or --seed")
    if args.input is not None:
        obj = _read_json(args.input)
        if isinstance(obj, dict) and identity_id is not None:
            if "id" in obj and obj["id"] != identity_id:
                raise InputError(f"field 'id' is {obj['id']!r} but --id is {identity_id!r}")
            obj = {**obj, "id": identity_id}
        try:
            inst = IdentityInstance.from_json(obj, ctrl, args.identity_tol)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        _check_id(inst.id)
    else:
        if identity_id is None:
            raise InputError("--id is required with --seed")
        inst = make_instance(identity_id, args.seed, args.dim, ctrl, args.identity_tol)
    code = EXIT_OK
    try:
        report = ids.check(inst).to_json()
        code = {"pass": EXIT_OK, "finding": EXIT_FINDING, "fail": EXIT_FAIL}[report["status"]]
    except HypothesisViolation as exc:
        report = _failure_report(inst, "hypothesis", exc)
        report["clause"] = exc.clause
        code = EXIT_HYPOTHESIS
    except NotConverged as exc:
        report = _failure_report(inst, "error", exc)
        code = EXIT_NOT_CONVERGED
    except (SingularShift, SingularMatrix, BranchCut) as exc:
        report = _failure_report(inst, "error", exc)
        code = EXIT_SINGULAR
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.format == "csv":
        text = _csv_text([_report_row(report)], REPORT_FIELDS)
    else:
        text = _dumps(report) + "\n"
    _write(text, args.out)
    return code


def _failure_report(inst: IdentityInstance, status: str, exc: Exception) -> dict:
    rep = ids.IdentityReport(inst.id, inst.seed, inst.params.dim, inst.knobs, float("nan"), float("nan"),
                             False, 0, 0, status, f"{type(exc).__name__}: {exc}")
    return rep.to_json()


# -- fuzz -------------------------------------------------------------------------


def _summary(reports: list, identity_ids: list, count: int, seed: int) -> dict:
    per = {}
    for identity_id in identity_ids:
        mine = [r for r in reports if r["id"] == identity_id]
        finite = [r["rel_residual"] for r in mine if r["rel_residual"] is not None]
        per[identity_id] = {
            "count": len(mine),
            "max_rel_residual": max(finite) if finite else None,
            "pass": sum(r["status"] == "pass" for r in mine),
            "fail": sum(r["status"] == "fail" for r in mine),
            "finding": sum(r["status"] == "finding" for r in mine),
            "error": sum(r["status"] == "error" for r in mine),
        }
    return {"summary": {"seed": seed, "count_per_id": count, "instances": len(reports),
                        "all_pass": all(r["status"] == "pass" for r in reports), "ids": per}}


def _run_json(inst: IdentityInstance) -> dict:
    return run_instance(inst).to_json()


def cmd_fuzz(args) -> int:
    ctrl = _series_control(args)
    identity_ids = [_check_id(i) for i in args.id] if args.id else list(ids.IDS)
    if args.count < 0:
        raise InputError("--count must be non-negative")
    seed = 0 if args.seed is None else args.seed
    instances = list(campaign(identity_ids, args.count, seed, args.dim, ctrl, args.identity_tol))
    if args.jobs > 1 and len(instances) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_run_json, instances, chunksize=4))
    else:
        reports = [_run_json(inst) for inst in instances]
    summary = _summary(reports, identity_ids, args.count, seed)
    if args.format == "csv":
        rows = [_report_row(r) for r in reports]
        for identity_id, s in summary["summary"]["ids"].items():
            rows.append([f"summary:{identity_id}", seed, "", "", "", s["max_rel_residual"],
                         s["pass"] == s["count"], "", "", f"{s['pass']}/{s['count']} pass", ""])
        text = _csv_text(rows, REPORT_FIELDS)
    else:
        text = "".join(_dumps(r) + "\n" for r in reports) + _dumps(summary) + "\n"
    _write(text, args.out)
    statuses = {r["status"] for r in reports}
    if statuses <= {"pass"}:
        return EXIT_OK
    if statuses <= {"pass", "finding"}:
        return EXIT_FINDING
    return EXIT_FAIL


# -- list-identities ----------------------------------------------------------------


def cmd_list(args) -> int:
    entries = [{"id": ident.id, "kind": ident.kind, "title": ident.title, "knobs": list(ident.knobs),
                "formula": ident.formula, "hypotheses": list(ident.hypotheses), "referee": ident.referee}
               for ident in ids.REGISTRY.values()]
    if args.format == "csv":
        rows = [[e["id"], e["kind"], " ".join(e["knobs"]), e["title"], e["formula"]] for e in entries]
        text = _csv_text(rows, ["id", "kind", "knobs", "title", "formula"])
    else:
        text = "".join(_dumps(e) + "\n" for e in entries)
    _write(text, args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kdfmat", description="Matrix KdF series evaluation and identity checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_series=True):
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        if with_series:
            p.add_argument("--tol", type=float, default=None,
                           help=f"series stop tolerance (default ${TOL_ENV} or {DEFAULT_CONTROL.tol})")
            p.add_argument("--max-diagonal", type=int, default=DEFAULT_CONTROL.max_diagonal)

    p_eval = sub.add_parser("eval", help="evaluate one KdF function from a JSON file")
    p_eval.add_argument("input", help="JSON with 'params', 'x', 'y' ('-' for stdin)")
    common(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_ver = sub.add_parser("verify", help="check one identity instance")
    p_ver.add_argument("input", nargs="?", help="instance JSON; omit to generate one from --seed")
    p_ver.add_argument("--id", help="identity id (overrides or supplies the file's 'id')")
    p_ver.add_argument("--seed", type=int, help="instance seed used when no file is given")
    p_ver.add_argument("--dim", type=int, help="fix the matrix dimension of generated instances")
    p_ver.add_argument("--identity-tol", type=float, default=ids.DEFAULT_IDENTITY_TOL)
    common(p_ver)
    p_ver.set_defaults(func=cmd_verify)

    p_fuzz = sub.add_parser("fuzz", help="seeded campaign over identities, NDJSON output")
    p_fuzz.add_argument("--id", action="append", help="identity id (repeatable; default all)")
    p_fuzz.add_argument("--count", type=int, default=10, help="instances per id")
    p_fuzz.add_argument("--seed", type=int, default=0)
    p_fuzz.add_argument("--dim", type=int, help="fix the matrix dimension (default random in 1..3)")
    p_fuzz.add_argument("--identity-tol", type=float, default=ids.DEFAULT_IDENTITY_TOL)
    p_fuzz.add_argument("--jobs", type=int, default=1, help="worker processes; output order is unchanged")
    common(p_fuzz)
    p_fuzz.set_defaults(func=cmd_fuzz)

    p_list = sub.add_parser("list-identities", help="print the identity registry")
    common(p_list, with_series=False)
    p_list.set_defaults(func=cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"kdfmat: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
