"""End-to-end checks of the nti command-line tool.

usage: cli_tests.py NTI_BINARY RECOMPUTE_FLAGS_SCRIPT
"""

import csv
import io
import json
import pathlib
import subprocess
import sys
import tempfile

NTI = sys.argv[1]
RECOMPUTE = sys.argv[2]
failures = []


def run(*args, expect=0):
    p = subprocess.run([NTI, *args], capture_output=True, text=True)
    if p.returncode != expect:
        failures.append(f"{' '.join(args)}: exit {p.returncode}, expected {expect}\n{p.stderr}")
    return p


def check(cond, what):
    if not cond:
        failures.append(what)


def without_wall(text):
    rows = list(csv.reader(io.StringIO(text)))
    col = rows[0].index("wall_ms")
    return [r[:col] + r[col + 1:] for r in rows]


def small_config(base):
    cfg = json.loads(base)
    cfg["schedule"]["T"] = 10
    cfg["sweeps"] = {"N": [0, 10], "w": [1.0, 4.0, 8.0], "t0": [0.4, 0.8]}
    cfg["seeds"] = [1, 2, 3, 4, 5]
    return cfg


with tempfile.TemporaryDirectory() as tmp:
    tmp = pathlib.Path(tmp)

    # gen-config prints the defaults; writing and reloading them is lossless
    default_text = run("gen-config").stdout
    run("gen-config", "--out", str(tmp / "gen"))
    check(json.loads((tmp / "gen" / "config.json").read_text()) == json.loads(default_text), "gen-config --out differs")

    cfg = small_config(default_text)
    cfg_path = tmp / "small.json"
    cfg_path.write_text(json.dumps(cfg))

    # config errors exit 2
    bad = dict(cfg, colour="blue")
    (tmp / "bad.json").write_text(json.dumps(bad))
    run("invert", "--config", str(tmp / "bad.json"), expect=2)
    (tmp / "broken.json").write_text("{")
    run("invert", "--config", str(tmp / "broken.json"), expect=2)
    run("ablate", "--config", str(cfg_path), "--format", "xml", expect=2)
    run("frobnicate", expect=2)

    # divergence exits 3
    div = json.loads(json.dumps(cfg))
    div["denoiser"] = {"kind": "affine", "train_samples": 2000, "train_seed": 0}  # quadratic loss in the embedding
    div["inversion"]["lr"] = 1000.0
    (tmp / "div.json").write_text(json.dumps(div))
    p = run("invert", "--config", str(tmp / "div.json"), expect=3)
    check("timestep" in p.stderr, "divergence message lacks the timestep")

    # single runs produce parseable JSON
    inv = json.loads(run("invert", "--config", str(cfg_path), "--seed", "3").stdout)
    check(len(inv["embeddings"]) == 10, "invert should return one embedding per step")
    run("invert", "--config", str(cfg_path), "--seed", "3", "--out", str(tmp / "runs"))
    stored = tmp / "runs" / "invert-3.json"
    check(stored.exists(), "invert --out did not write invert-3.json")
    ed1 = json.loads(run("edit", "--config", str(cfg_path), "--seed", "3").stdout)
    ed2 = json.loads(run("edit", "--config", str(cfg_path), "--seed", "3", "--result", str(stored)).stdout)
    check(ed1["edited"] == ed2["edited"], "edit from a stored result differs from a fresh edit")
    smp = json.loads(run("sample", "--config", str(cfg_path), "--seed", "2").stdout)
    check(len(smp["x0"]) == 2, "sample x0 has the wrong size")

    # harness tables are deterministic
    out = tmp / "out"
    run("ablate", "--config", str(cfg_path), "--out", str(out))
    first = (out / "ablation.csv").read_text()
    run("ablate", "--config", str(cfg_path), "--out", str(out))
    check(without_wall(first) == without_wall((out / "ablation.csv").read_text()), "ablation CSV not deterministic")
    run("sweep-guidance", "--config", str(cfg_path), "--out", str(out), "--format", "json")
    g1 = (out / "guidance.json").read_bytes()
    run("sweep-guidance", "--config", str(cfg_path), "--out", str(out), "--format", "json")
    check(g1 == (out / "guidance.json").read_bytes(), "guidance JSON not deterministic")
    run("sdedit-eval", "--config", str(cfg_path), "--out", str(out))
    s1 = (out / "sdedit.csv").read_bytes()
    run("sdedit-eval", "--config", str(cfg_path), "--out", str(out))
    check(s1 == (out / "sdedit.csv").read_bytes(), "sdedit CSV not deterministic")

    # report flags agree with an independent recomputation
    rep = run("report", "--config", str(cfg_path), "--out", str(out))
    summary = json.loads((out / "summary.json").read_text())
    printed = dict(line.split(": ", 1) for line in rep.stdout.strip().splitlines())
    check(printed == summary["flags"], "printed flags differ from summary.json")
    recomputed = json.loads(
        subprocess.run([sys.executable, RECOMPUTE, str(out), "10"], capture_output=True, text=True, check=True).stdout
    )
    check(recomputed == summary["flags"], f"flags disagree: {recomputed} vs {summary['flags']}")
    for name in ["ablation_psnr.csv", "guidance_loglik.csv", "sdedit_mse.csv"]:
        check((out / name).read_text().startswith("x,y,group\n"), f"{name} missing or malformed")

    # report without tables is an error
    run("report", "--config", str(cfg_path), "--out", str(tmp / "empty"), expect=1)

for f in failures:
    print("FAIL:", f)
print(f"{'ok' if not failures else 'FAILED'}: cli tests")
sys.exit(1 if failures else 0)
