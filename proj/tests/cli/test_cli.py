"""End-to-end checks of the nce-lab binary: exit codes, outputs, echoed configs."""

import json
import os
import pathlib
import shutil
import subprocess
import sys

EXE = None
SRC = None
WORK = None
FAILURES = []


def run(*args, env=None):
    full_env = dict(os.environ)
    full_env.pop("NCE_LAB_WORKERS", None)
    if env:
        full_env.update(env)
    return subprocess.run([EXE, *map(str, args)], capture_output=True, text=True, env=full_env)


def expect(cond, what, proc=None):
    if cond:
        return
    msg = what
    if proc is not None:
        msg += f"\n  rc={proc.returncode}\n  stdout={proc.stdout[:400]!r}\n  stderr={proc.stderr[:400]!r}"
    FAILURES.append(msg)
    print("FAIL:", msg)


def config(name):
    return SRC / "configs" / name


def write_plan(name, **fields):
    plan = {
        "name": name,
        "type": "sweep",
        "config_file": str(config("gauss1d_close.json")),
        "divergences": ["POJS", "OJS", "KL"],
        "sample_sizes": [300, 900],
        "replications": 4,
        "ratio": [1, 2],
        "base_seed": 5,
    }
    plan.update(fields)
    path = WORK / f"{name}.json"
    path.write_text(json.dumps(plan))
    return path


def test_usage_errors():
    p = run()
    expect(p.returncode == 1, "no subcommand exits 1", p)
    p = run("fit", "--config", config("gauss1d_close.json"), "--no-such-flag")
    expect(p.returncode == 1, "unknown flag exits 1", p)
    expect("--no-such-flag" in p.stderr + p.stdout, "unknown flag is named", p)
    expect("Usage" in p.stderr + p.stdout, "unknown flag prints usage", p)
    p = run("--help")
    expect(p.returncode == 0 and "experiment" in p.stdout, "--help exits 0", p)


def test_config_errors():
    p = run("fit", "--config", WORK / "missing.json")
    expect(p.returncode == 1, "missing config exits 1", p)
    bad = WORK / "bad.json"
    bad.write_text("{ not json")
    p = run("fit", "--config", bad)
    expect(p.returncode == 1, "malformed config exits 1", p)
    unknown = WORK / "unknown_key.json"
    doc = json.loads(config("gauss1d_close.json").read_text())
    doc["surprise"] = 1
    unknown.write_text(json.dumps(doc))
    p = run("fit", "--config", unknown)
    expect(p.returncode == 1, "unknown config key exits 1", p)
    p = run("fit", "--config", config("gauss1d_close.json"), "--divergence", "hellinger")
    expect(p.returncode == 1, "unknown divergence exits 1", p)
    p = run("experiment", "--plan", write_plan("bad_plan", divergences=["XYZ"]), "--out", WORK / "bad_plan")
    expect(p.returncode == 1, "bad plan exits 1", p)


def test_fit():
    out = WORK / "fit"
    p = run("fit", "--config", config("gauss1d_close.json"), "--divergence", "ojs", "--seed", "7", "--out", out)
    expect(p.returncode == 0, "fit exits 0", p)
    doc = json.loads(p.stdout)
    expect(doc["converged"] is True, "fit converges")
    expect(abs(doc["alpha_hat"]["theta"][0] - 0.5) < 0.1, "fit estimates theta near the truth")
    expect(doc["seed"] == 7 and doc["divergence"] == "ojs", "fit echoes its options")
    expect((out / "fit.json").exists(), "fit writes fit.json")
    echoed = json.loads((out / "resolved_config.json").read_text())
    expect(echoed["model"]["kind"] == "gauss1d", "resolved config names the model")
    expect(abs(echoed["model"]["true_alpha"][0] + 0.9189385332046727) < 1e-12, "resolved config fills in c")
    again = run("fit", "--config", config("gauss1d_close.json"), "--divergence", "ojs", "--seed", "7")
    expect(again.stdout == p.stdout, "fit is reproducible for a fixed seed")
    other = run("fit", "--config", config("gauss1d_close.json"), "--seed", "8")
    expect(other.stdout != p.stdout, "a different seed gives a different fit")
    pl = run("fit", "--config", config("gauss1d_close.json"), "--plugin")
    expect(pl.returncode == 0 and "beta_hat" in json.loads(pl.stdout), "plug-in fit reports beta_hat", pl)


def test_asvar_validate():
    out = WORK / "asvar"
    p = run("asvar", "--config", config("gauss1d_close.json"), "--divergence", "ojs", "--out", out)
    expect(p.returncode == 0, "asvar exits 0", p)
    doc = json.loads(p.stdout)
    nc = doc["asvar_nc"]
    expect(abs(nc[0][0] - 2.343) < 0.01 and abs(nc[1][1] - 2.083) < 0.01, "asvar reports the close OJS variance")
    expect((out / "asvar.json").exists() and (out / "resolved_config.json").exists(), "asvar writes its files")
    p = run("validate", "--config", config("gauss1d_close.json"), "--out", WORK / "validate")
    expect(p.returncode == 0, "validate exits 0", p)
    expect("ok" in p.stdout and "omega_block_inverse" in p.stdout, "validate prints the residual table", p)
    report = json.loads((WORK / "validate" / "validate.json").read_text())
    expect(report["all_within_tolerance"] and report["max_residual"] <= 1e-4, "validate residuals within 1e-4")


def test_experiment():
    plan = write_plan("tiny")
    first = WORK / "exp1"
    p = run("experiment", "--plan", plan, "--out", first, "--format", "csv")
    expect(p.returncode == 0, "experiment exits 0", p)
    expect("divergence" in p.stdout and "POJS" in p.stdout, "experiment prints a summary table", p)
    csv = (first / "tiny.csv").read_text().splitlines()
    expect(csv[0] == "divergence,m,component,mse,stderr,n_used,n_excluded", "csv header")
    expect(len(csv) == 1 + 3 * 2 * 2, "one csv row per method, size and component")
    resolved = json.loads((first / "resolved_plan.json").read_text())
    expect(resolved["divergences"] == ["POJS", "OJS", "KL"], "resolved plan lists the methods")

    second = WORK / "exp2"
    p = run("experiment", "--plan", plan, "--out", second, "--format", "csv", env={"NCE_LAB_WORKERS": "3"})
    expect(p.returncode == 0, "experiment with NCE_LAB_WORKERS exits 0", p)
    expect((second / "tiny.csv").read_bytes() == (first / "tiny.csv").read_bytes(), "csv is byte-identical")
    resolved = json.loads((second / "resolved_plan.json").read_text())
    expect(resolved["workers"] == 3, "NCE_LAB_WORKERS reaches the run")
    p = run("experiment", "--plan", plan, "--out", WORK / "exp3", "--workers", "2", env={"NCE_LAB_WORKERS": "1"})
    resolved = json.loads((WORK / "exp3" / "resolved_plan.json").read_text())
    expect(resolved["workers"] == 1, "NCE_LAB_WORKERS overrides --workers")

    p = run("experiment", "--plan", plan, "--out", WORK / "svg", "--format", "svg", "-q")
    svgs = sorted((WORK / "svg").glob("*.svg"))
    expect(p.returncode == 0 and len(svgs) == 2, "svg writes one plot per component", p)
    expect(all(s.read_text().count("<polyline") == 3 for s in svgs), "one polyline per method")

    p = run("experiment", "--plan", plan, "--out", WORK / "json", "--format", "json", "-q")
    table = json.loads((WORK / "json" / "tiny.json").read_text())
    expect(p.returncode == 0 and len(table["rows"]) == 12, "json table mirrors the csv rows", p)


def test_partial_failure():
    # An outlier at 1e200 overflows every objective, so no replication is usable.
    plan = write_plan("doomed", type="contamination", divergences=["KL"], sample_sizes=[300], replications=2,
                      contamination={"value": [1e200], "count": 1})
    p = run("experiment", "--plan", plan, "--out", WORK / "doomed")
    expect(p.returncode == 2, "fully excluded cell exits 2", p)
    expect((WORK / "doomed" / "doomed.csv").exists(), "partial failure still writes the table")


def main():
    global EXE, SRC, WORK
    EXE = sys.argv[1]
    SRC = pathlib.Path(sys.argv[2]).resolve()
    WORK = pathlib.Path(sys.argv[3]).resolve()
    shutil.rmtree(WORK, ignore_errors=True)
    WORK.mkdir(parents=True)
    for test in (test_usage_errors, test_config_errors, test_fit, test_asvar_validate, test_experiment,
                 test_partial_failure):
        test()
    print(f"{len(FAILURES)} failures")
    return 1 if FAILURES else 0


if __name__ == "__main__":
    sys.exit(main())
