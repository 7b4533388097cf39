"""Validates shipped configs, plans and experiment outputs against docs/*.schema.json."""

import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema
from referencing import Registry, Resource


def load(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def main():
    exe, src, work = sys.argv[1], pathlib.Path(sys.argv[2]).resolve(), pathlib.Path(sys.argv[3])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)

    schemas = {p.name: load(p) for p in (src / "docs").glob("*.schema.json")}
    registry = Registry().with_resources(
        (name, Resource.from_contents(doc)) for name, doc in schemas.items()
    )

    def validator(name):
        cls = jsonschema.validators.validator_for(schemas[name])
        cls.check_schema(schemas[name])
        return cls(schemas[name], registry=registry)

    plan_v = validator("plan.schema.json")
    config_v = validator("config.schema.json")
    table_v = validator("mse_table.schema.json")

    failures = 0

    def check(v, doc, what):
        nonlocal failures
        errors = sorted(v.iter_errors(doc), key=lambda e: list(e.path))
        for e in errors:
            print(f"{what}: {'/'.join(map(str, e.path))}: {e.message}")
        failures += bool(errors)

    plans = []
    for path in sorted((src / "configs").glob("*.json")):
        doc = load(path)
        if "divergences" in doc:
            check(plan_v, doc, path.name)
            plans.append(path)
        else:
            check(config_v, doc, path.name)
    if not plans:
        print("no plans found")
        return 1

    # Schema must reject what the parser rejects.
    bad_plan = {"config_file": "x.json", "divergences": ["XYZ"], "sample_sizes": [100]}
    if plan_v.is_valid(bad_plan):
        print("plan schema accepted an unknown divergence")
        failures += 1
    if plan_v.is_valid({"divergences": ["OJS"], "sample_sizes": [100]}):
        print("plan schema accepted a plan without a config")
        failures += 1

    # A small sweep: the json table and the echoed plan.
    plan = load(src / "configs" / "sweep_close.json")
    plan.update(config_file=str(src / "configs" / plan["config_file"]), sample_sizes=[300, 600],
                replications=4, name="schema_sweep")
    plan_path = work / "plan.json"
    plan_path.write_text(json.dumps(plan))
    out = work / "out"
    subprocess.run([exe, "experiment", "--plan", str(plan_path), "--out", str(out), "--format", "json", "-q"],
                   check=True, stdout=subprocess.DEVNULL)
    check(table_v, load(out / "schema_sweep.json"), "schema_sweep.json")
    resolved = load(out / "resolved_plan.json")
    check(plan_v, resolved, "resolved_plan.json")
    check(config_v, resolved["config"], "resolved_plan.json config")

    # fit echoes its resolved config.
    subprocess.run([exe, "fit", "--config", str(src / "configs" / "trunc3d.json"), "--m1", "300", "--m2", "300",
                    "--out", str(work / "fit")], check=True, stdout=subprocess.DEVNULL)
    check(config_v, load(work / "fit" / "resolved_config.json"), "resolved_config.json")

    print(f"{len(plans)} plans checked, {failures} failing documents")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
