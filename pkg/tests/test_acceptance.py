"""The eight acceptance criteria, each printing one PASS/FAIL line."""

from __future__ import annotations

import json
import time

import numpy as np

import kdfmat.identities as idmod
from _acceptance_log import LINES
from kdfmat import (IDS, REGISTRY, GenSpec, HypothesisViolation, appell, check, deriv_y, gauss_2f1,
                    gen_family, gen_point, kdf_eval, make_instance, one_f0, one_f0_series, run_instance)
from kdfmat.campaign import balanced, campaign, instance_seed
from kdfmat.cli import main
from kdfmat.paramgen import perturb_member, rng_for
from kdfmat.series import APPELL_ROLES, SeriesControl
from oracles import one_f0_plain, rel, scalar_2f1, scalar_appell, scalar_kdf


def record(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    LINES.append(line)
    print(line)


def _scalars(lst):
    return [complex(m[0, 0]) for m in lst]


def test_1_scalar_oracle_equivalence():
    start = time.perf_counter()
    worst = {"2F1": 0.0, "appell": 0.0, "kdf": 0.0}
    rng = rng_for(2024, 1)
    for k in range(200):
        spec = GenSpec(r=1, shape=(1, 1, 0, 1, 0, 0), seed=10_000 + k)
        p = gen_family(spec).params
        x = gen_point(spec, "unit_disc", radius=0.55)
        a, b, c = p.A[0][0, 0], p.B[0][0, 0], p.D[0][0, 0]
        got = gauss_2f1(p.A[0], p.B[0], p.D[0], x).value[0, 0]
        worst["2F1"] = max(worst["2F1"], rel(got, scalar_2f1(a, b, c, x)))
    for k in range(200):
        kind = ("F1", "F2", "F3", "F4")[k % 4]
        names = APPELL_ROLES[kind]
        spec = GenSpec(r=1, shape=(len(names), 0, 0, 0, 0, 0), seed=20_000 + k)
        fam = gen_family(spec).params
        params = {name: fam.A[j] for j, name in enumerate(names)}
        x, y = gen_point(spec, kind, radius=0.5)
        got = appell(kind, params, x, y).value[0, 0]
        want = scalar_appell(kind, {n: complex(v[0, 0]) for n, v in params.items()}, x, y)
        worst["appell"] = max(worst["appell"], rel(got, want))
    for k in range(200):
        while True:
            shape = tuple(int(v) for v in rng.integers(0, 3, size=6))
            if balanced(shape):
                break
        spec = GenSpec(r=1, shape=shape, seed=30_000 + k)
        p = gen_family(spec).params
        x, y = gen_point(spec, "kdf_safe")
        got = kdf_eval(p, x, y).value[0, 0]
        want = scalar_kdf(*(_scalars(getattr(p, role)) for role in "ABCDEF"), x, y)
        worst["kdf"] = max(worst["kdf"], rel(got, want))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-10 and elapsed <= 60
    record(1, "scalar-oracle equivalence", ok,
           ", ".join(f"{k} max rel {v:.1e}" for k, v in worst.items()) + f", 600 instances, {elapsed:.1f} s")
    assert ok


def test_2_reduction_chain():
    worst_f2 = worst_gauss = 0.0
    for k in range(100):
        r = 1 + k % 3
        spec = GenSpec(r=r, shape=(1, 1, 1, 0, 1, 1), seed=40_000 + k)
        p = gen_family(spec).params
        x, y = gen_point(spec, "F2", radius=0.5)
        via_kdf = kdf_eval(p, x, y).value
        via_appell = appell("F2", {"A": p.A[0], "B": p.B[0], "B'": p.C[0], "C": p.E[0], "C'": p.F[0]},
                            x, y).value
        worst_f2 = max(worst_f2, rel(via_kdf, via_appell))
        g = GenSpec(r=r, shape=(1, 1, 0, 1, 0, 0), seed=50_000 + k)
        q = gen_family(g).params
        xg = gen_point(g, "unit_disc", radius=0.55)
        worst_gauss = max(worst_gauss, rel(kdf_eval(q, xg, 0.0).value,
                                           gauss_2f1(q.A[0], q.B[0], q.D[0], xg).value))
    ok = max(worst_f2, worst_gauss) <= 1e-10
    record(2, "reduction chain", ok, f"KdF vs F2 max rel {worst_f2:.1e}, KdF(y=0) vs 2F1 max rel {worst_gauss:.1e}")
    assert ok


def test_3_full_identity_sweep():
    start = time.perf_counter()
    reports = [run_instance(inst) for inst in campaign(IDS, 50, seed=1)]
    elapsed = time.perf_counter() - start
    worst = {}
    bad = []
    for rep in reports:
        worst[rep.id] = max(worst.get(rep.id, 0.0), rep.rel_residual if rep.status != "error" else np.inf)
        if rep.status not in ("pass", "finding"):
            bad.append((rep.id, rep.seed, rep.status, rep.error))
    findings = [rep for rep in reports if rep.status == "finding"]
    stable = True
    for rep in findings:
        inst = make_instance(rep.id, rep.seed)
        tight = run_instance(type(inst)(inst.id, inst.params, inst.x, inst.y, inst.knobs, inst.seed,
                                        SeriesControl(tol=1e-13)))
        stable &= tight.status == "finding" and abs(tight.rel_residual - rep.rel_residual) <= 0.1 * rep.rel_residual
    ok = not bad and stable and elapsed <= 15 * 60 and len(reports) == 50 * len(IDS)
    detail = (f"{len(reports)} instances over {len(IDS)} ids, worst rel {max(worst.values()):.1e} ({max(worst, key=worst.get)}), "
              f"R11 {'pass' if not findings else f'{len(findings)} findings'}, {elapsed:.0f} s")
    record(3, "full identity sweep", ok, detail)
    assert not bad, bad[:5]
    assert ok


def test_4_trivial_knob_exactness():
    worst = 0.0
    applicable = [ident for ident in REGISTRY.values() if ident.trivial]
    for ident in applicable:
        for k in range(10):
            inst = make_instance(ident.id, instance_seed(4, ident.id, k), knobs=ident.trivial)
            rep = check(inst)
            worst = max(worst, rep.rel_residual)
    ok = worst <= 1e-13
    skipped = sorted(set(IDS) - {i.id for i in applicable})
    record(4, "trivial-knob exactness", ok,
           f"{len(applicable)} ids x 10, max rel {worst:.1e}; no trivial knob: {', '.join(skipped)}")
    assert ok


def test_5_derivative_check():
    worst = 0.0
    fine = SeriesControl(tol=1e-13)
    h = 1e-5
    for k in range(50):
        r = 1 + k % 2
        rng = rng_for(5, k)
        while True:
            shape = tuple(int(v) for v in rng.integers(0, 3, size=6))
            if balanced(shape):
                break
        spec = GenSpec(r=r, shape=shape, seed=60_000 + k)
        p = gen_family(spec).params
        x, y = gen_point(spec, "kdf_safe", radius=0.3)
        closed = deriv_y(p, x, y, 1).value
        fd = (kdf_eval(p, x, y + h, fine).value - kdf_eval(p, x, y - h, fine).value) / (2 * h)
        worst = max(worst, np.linalg.norm(closed - fd) / (1 + np.linalg.norm(fd)))
    ok = worst <= 1e-6
    record(5, "derivative check", ok, f"50 instances r<=2, max rel {worst:.1e}")
    assert ok


def test_6_one_f0_closed_form():
    worst = 0.0
    for k in range(50):
        spec = GenSpec(r=1 + k % 3, shape=(1, 0, 0, 0, 0, 0), seed=70_000 + k)
        a = gen_family(spec).params.A[0]
        t = gen_point(spec, "t", radius=0.5)
        closed = one_f0(a, t)
        worst = max(worst, rel(closed, one_f0_plain(a, t)), rel(closed, one_f0_series(a, t).value))
    ok = worst <= 1e-10
    record(6, "1F0 closed form", ok, f"50 instances r<=3 |t|<=0.5, max rel {worst:.1e}")
    assert ok


def test_7_hypothesis_falsification(monkeypatch):
    def forbidden(*args, **kwargs):
        raise AssertionError("a series was summed before the hypothesis check")

    monkeypatch.setattr(idmod, "kdf_eval", forbidden)
    monkeypatch.setattr(idmod, "deriv_y", forbidden)
    hits = 0
    trials = 0
    k = 0
    while trials < 100:
        identity_id = IDS[k % len(IDS)]
        inst = make_instance(identity_id, instance_seed(7, identity_id, k), dim=2 + k % 2)
        k += 1
        members = list(inst.params.members())
        if len(members) < 2:
            continue
        trials += 1
        rng = rng_for(7, k)
        role, j, _ = members[int(rng.integers(0, len(members)))]
        inst.params = perturb_member(inst.params, role, j, 1e-3, rng)
        try:
            check(inst)
        except HypothesisViolation as exc:
            hits += f"{role}[{j}]" in exc.clause
    ok = hits == 100
    record(7, "hypothesis falsification", ok, f"{hits}/100 violations name the perturbed member")
    assert ok


def test_8_determinism(tmp_path):
    outs = []
    args = ["fuzz", "--count", "3", "--seed", "1"]
    for n, extra in enumerate(([], [], ["--jobs", "2"])):
        path = tmp_path / f"run{n}.ndjson"
        assert main(args + extra + ["--out", str(path)]) == 0
        outs.append(path.read_bytes())
    ok = outs[0] == outs[1] == outs[2]
    lines = outs[0].decode().splitlines()
    assert json.loads(lines[-1])["summary"]["instances"] == 3 * len(IDS)
    record(8, "determinism", ok, f"3 fuzz runs ({len(lines)} lines each, one with 2 workers) byte-identical")
    assert ok
