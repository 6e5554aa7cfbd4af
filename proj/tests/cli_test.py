"""End-to-end checks of the command-line tool: exit codes, schemas, determinism."""

import csv
import json
import os
import subprocess
import sys
import tempfile

import jsonschema

CLI = sys.argv[1]
SCHEMAS = sys.argv[2]
failures = []


def run(*args):
    return subprocess.run([CLI, *args], capture_output=True, text=True)


def check(name, cond, detail=""):
    print(("ok   " if cond else "FAIL ") + name + (": " + detail if detail and not cond else ""))
    if not cond:
        failures.append(name)


def schema(name):
    with open(os.path.join(SCHEMAS, name)) as f:
        return json.load(f)


def validates(doc, sch):
    try:
        jsonschema.validate(doc, sch)
        return True, ""
    except jsonschema.ValidationError as e:
        return False, e.message


def stderr_error(proc):
    try:
        lines = proc.stderr.strip().splitlines()
        return len(lines) == 1 and json.loads(lines[0])
    except json.JSONDecodeError:
        return False


def without_timing(text):
    doc = json.loads(text)
    doc.pop("timing", None)
    return doc


fit_schema = schema("fit_result.schema.json")
wald_schema = schema("wald_result.schema.json")

with tempfile.TemporaryDirectory() as tmp:
    s1 = os.path.join(tmp, "s1.csv")
    p = run("simulate", "--setting", "s1", "--n", "1000", "--seed", "7", "--out", s1)
    check("simulate exits 0", p.returncode == 0, p.stderr)
    with open(s1) as f:
        rows = list(csv.reader(f))
    check("simulate writes header and n rows", rows[0] == ["x1", "x2", "z1"] and len(rows) == 1001)
    with open(s1 + ".json") as f:
        side = json.load(f)
    check("simulate sidecar echoes the run", side["setting"] == "s1" and side["n"] == 1000 and side["seed"] == 7)

    pred = os.path.join(tmp, "pred.csv")
    p = run("fit", "--data", s1, "--dict", "family-1d", "--lambda", "cv", "--seed", "3", "--predict-out", pred)
    check("fit exits 0", p.returncode == 0, p.stderr)
    fit = json.loads(p.stdout)
    check("fit has 12 coefficients", len(fit["beta"]) == 12 and len(fit["names"]) == 12)
    ok, msg = validates(fit, fit_schema)
    check("fit output matches its schema", ok, msg)
    check("fit echoes its config", fit["config"]["run"]["seed"] == 3 and fit["config"]["lambda"] == "cv")
    with open(pred) as f:
        prows = list(csv.reader(f))
    check("fit prediction CSV", prows[0] == ["z1", "tau_hat"] and len(prows) == 202
          and all(-1 <= float(r[1]) <= 1 for r in prows[1:]))

    q = run("fit", "--data", s1, "--dict", "family-1d", "--lambda", "cv", "--seed", "3", "--threads", "auto")
    check("fit results do not depend on the thread count",
          q.returncode == 0 and {k: v for k, v in without_timing(q.stdout).items() if k != "config"}
          == {k: v for k, v in without_timing(p.stdout).items() if k != "config"})
    r = run("fit", "--data", s1, "--dict", "family-1d", "--lambda", "cv", "--seed", "3")
    check("fit repeated run is byte-identical apart from timing",
          r.returncode == 0 and json.dumps(without_timing(r.stdout)) == json.dumps(without_timing(p.stdout)))

    fit_path = os.path.join(tmp, "fit.json")
    with open(fit_path, "w") as f:
        f.write(p.stdout)
    p = run("predict", "--fit", fit_path, "--points", "grid:0.1:0.9:5", "--marginal", "1")
    check("predict exits 0", p.returncode == 0, p.stderr)
    lines = p.stdout.strip().splitlines()
    check("predict CSV shape", lines[0] == "z1,tau_hat,marginal_effect" and len(lines) == 6)
    expected = [r for r in prows[1:] if abs(float(r[0]) - 0.5) < 1e-12]
    got = [l.split(",") for l in lines[1:] if abs(float(l.split(",")[0]) - 0.5) < 1e-12]
    check("predict agrees with the fit-time prediction",
          len(expected) == 1 and len(got) == 1 and float(expected[0][1]) == float(got[0][1]))

    p = run("fit", "--data", s1, "--z", "z9")
    err = stderr_error(p)
    check("missing z column exits 3", p.returncode == 3, str(p.returncode))
    check("missing z column reports a data error", bool(err) and err["exit_code"] == 3 and err["error"] == "data"
          and "z9" in err["message"], p.stderr)

    p = run("fit", "--data", os.path.join(tmp, "absent.csv"))
    check("missing input file exits 3", p.returncode == 3 and bool(stderr_error(p)))

    p = run("fit", "--data", s1, "--kernel", "triangle")
    check("unknown kernel exits 2", p.returncode == 2 and bool(stderr_error(p)), p.stderr)
    p = run("fit", "--data", s1, "--bogus")
    check("unknown flag exits 2", p.returncode == 2 and bool(stderr_error(p)), p.stderr)
    p = run("fit", "--data", s1, "--threads", "0")
    check("threads 0 exits 2", p.returncode == 2 and bool(stderr_error(p)), p.stderr)

    p = run("fit", "--data", s1, "--lambda", "0.001", "--max-iters", "0")
    check("nonconverged fit exits 4", p.returncode == 4 and bool(stderr_error(p)), p.stderr)

    s5 = os.path.join(tmp, "s5.csv")
    run("simulate", "--setting", "s5", "--n", "800", "--seed", "5", "--out", s5)
    p = run("test-sa", "--data", s5, "--lambda", "0.01", "--seed", "1", "--bootstrap", "3")
    check("test-sa exits 0", p.returncode == 0, p.stderr)
    wald = json.loads(p.stdout)
    check("test-sa p_value in [0,1]", 0 <= wald["p_value"] <= 1)
    ok, msg = validates(wald, wald_schema)
    check("test-sa output matches its schema", ok, msg)
    q = run("test-sa", "--data", s5, "--lambda", "0.01", "--seed", "1", "--bootstrap", "3")
    check("test-sa repeated run is byte-identical apart from timing",
          json.dumps(without_timing(q.stdout)) == json.dumps(without_timing(p.stdout)))

    p = run("bench", "--table", "comparison", "--settings", "s5", "--n", "300", "--R", "2", "--grid-points", "11")
    check("bench exits 0", p.returncode == 0, p.stderr)
    check("bench writes a CSV with one row per estimator",
          len([l for l in p.stdout.splitlines() if l and not l.startswith("#")]) == 3, p.stdout[:400])

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
