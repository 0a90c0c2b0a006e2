"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run just this file with ``pytest tests/test_acceptance.py -s`` (the report
lines are printed either way) or ``python3 tests/test_acceptance.py``.
The ablation behind criteria 6 and 7 trains five teachers and fifteen
students on the shipped default configuration and takes several minutes.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import ortho_group

from cka_distill.cli import main as cli_main
from cka_distill.config import ExperimentConfig
from cka_distill.losses import forward_kl, kl_rows_with_grad, reverse_kl, total_loss
from cka_distill.metrics import compute_metrics
from cka_distill.numeric import Rng
from cka_distill.similarity import awcka, linear_cka
from cka_distill.tensor_io import parse, serialize
from cka_distill.toy.data import generate_dataset
from cka_distill.toy.experiment import median_ua, run_ablation
from cka_distill.toy.model import ToyModelConfig, make_encoder
from cka_distill.toy.train import PretrainConfig, TrainConfig, distill, pretrain_teacher

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).parent / "fixtures"
DEFAULT_CONFIG = ROOT / "configs" / "default.cfg"
SEEDS = range(5)


@pytest.fixture
def report(capsys):
    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}", flush=True)
        assert ok, f"criterion {number} failed: {detail}"

    return emit


def test_criterion_1_cka_invariances(report):
    t0 = time.perf_counter()
    g = np.random.default_rng(101)
    worst = dict(range=0.0, sym=0.0, scale=0.0, orth=0.0, self=0.0)
    in_range = True
    for _ in range(1000):
        L = int(g.integers(3, 33))
        x = g.standard_normal((L, int(g.integers(2, 17))))
        y = g.standard_normal((L, int(g.integers(2, 17))))
        v = linear_cka(x, y)
        in_range &= 0.0 <= v <= 1.0
        worst["sym"] = max(worst["sym"], abs(v - linear_cka(y, x)))
        c = 10.0 ** g.uniform(-2, 2)
        worst["scale"] = max(worst["scale"], abs(v - linear_cka(c * x, y)), abs(v - linear_cka(x, c * y)))
        q = ortho_group.rvs(y.shape[1], random_state=g) if y.shape[1] > 1 else np.ones((1, 1))
        worst["orth"] = max(worst["orth"], abs(v - linear_cka(x, y @ q)))
        worst["self"] = max(worst["self"], abs(linear_cka(x, x) - 1.0))
    elapsed = time.perf_counter() - t0
    ok = (
        in_range
        and worst["sym"] <= 1e-12
        and worst["scale"] <= 1e-12
        and worst["orth"] <= 1e-10
        and worst["self"] <= 1e-12
        and elapsed < 10
    )
    detail = (
        f"1000 pairs, in [0,1]={in_range}, sym={worst['sym']:.1e}, scale={worst['scale']:.1e}, "
        f"orth={worst['orth']:.1e}, self={worst['self']:.1e}, {elapsed:.1f}s"
    )
    report(1, "CKA invariance suite", ok, detail)


def test_criterion_2_awcka_uniform_reduction(report):
    g = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        L = int(g.integers(3, 33))
        x = g.standard_normal((L, int(g.integers(2, 17))))
        y = g.standard_normal((L, int(g.integers(2, 17))))
        worst = max(worst, abs(awcka(x, y, np.full(L, 1.0 / L)) - linear_cka(x, y)))
    report(2, "AwCKA with uniform weights equals CKA", worst <= 1e-12, f"100 pairs, max |diff|={worst:.1e}")


def test_criterion_3_gradcheck(report, capsys):
    t0 = time.perf_counter()
    code = cli_main(["gradcheck", "--seed", "0", "--trials", "20"])
    out = capsys.readouterr().out
    elapsed = time.perf_counter() - t0
    errs = {line.split()[0]: line.split()[1].split("=")[1] for line in out.splitlines()}
    detail = ", ".join(f"{k}={v}" for k, v in errs.items()) + f", 20 shapes each, {elapsed:.1f}s"
    report(3, "analytic gradients match finite differences", code == 0 and len(errs) == 4 and elapsed < 60, detail)


def test_criterion_4_loss_algebra(report):
    g = np.random.default_rng(404)
    min_kl = math.inf
    max_self = 0.0
    for _ in range(1000):
        V = int(g.integers(2, 12))
        p, q = g.dirichlet(np.ones(V)), g.dirichlet(np.ones(V))
        for d in (forward_kl(p, q), reverse_kl(p, q)):
            min_kl = min(min_kl, d)
        max_self = max(max_self, forward_kl(p, p), reverse_kl(q, q))
        z = g.standard_normal((1, V)) * 3
        max_self = max(max_self, float(kl_rows_with_grad(z, z, 2.0)[0][0]), float(kl_rows_with_grad(z, z, 2.0, "Reverse")[0][0]))
    kl_ok = min_kl > 0 and max_self <= 1e-12

    comp_ok = True
    for _ in range(1000):
        ce, dp, da, dr, a, b, c = g.random(7) * 5
        comp_ok &= total_loss(ce, dp, da, dr, a, b, c).total == ce + a * dp + b * da + c * dr

    data = generate_dataset(4, 40, 8, 2, 0.1, Rng(0), feature_dim=8)
    enc = make_encoder(8, Rng(1))
    tcfg = ToyModelConfig(encoder_dim=8, embed_dim=16, heads=2, max_audio_len=8, vocab_size=8)
    scfg = ToyModelConfig(encoder_dim=8, embed_dim=8, heads=2, max_audio_len=8, vocab_size=8)
    teacher = pretrain_teacher(tcfg, data, Rng(2), enc, PretrainConfig(max_steps=1500, eval_every=25))
    kw = dict(steps=25, batch_size=1, grad_accum=16, lr=3e-3, seed=7)
    sft = distill(teacher, tcfg, scfg, data, TrainConfig(strategy="SFT", **kw), enc)
    zero = distill(teacher, tcfg, scfg, data, TrainConfig(strategy="PLDistill", alpha=0.0, beta=0.0, gamma=0.0, **kw), enc)
    bit_ok = all(np.array_equal(sft.params[k], zero.params[k]) for k in sft.params)
    bit_ok &= [h.ce for h in sft.history] == [h.ce for h in zero.history]
    detail = (
        f"min KL(p!=q)={min_kl:.2e}, max KL(p,p)={max_self:.1e}, composition exact={comp_ok}, "
        f"SFT == zero-coefficient PLDistill bitwise={bit_ok}"
    )
    report(4, "loss algebra", kl_ok and comp_ok and bit_ok, detail)


def test_criterion_5_metrics_oracle(report):
    r = compute_metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
    fixture_ok = (
        abs(r.wa - 0.75) <= 1e-9 and abs(r.ua - 0.75) <= 1e-9 and abs(r.macro_f1 - (2 / 3 + 0.8) / 2) <= 1e-9
    )
    g = np.random.default_rng(505)
    worst = 0.0
    for _ in range(100):
        C = int(g.integers(2, 8))
        per = int(g.integers(1, 20))
        y = np.repeat(np.arange(C), per)
        p = g.integers(0, C, size=y.size)
        m = compute_metrics(y, p, C)
        worst = max(worst, abs(m.ua - m.wa))
    detail = f"fixture WA={r.wa:.10f} UA={r.ua:.10f} F1={r.macro_f1:.10f}; balanced max |UA-WA|={worst:.1e}"
    report(5, "metrics oracle", fixture_ok and worst <= 1e-9, detail)


@pytest.fixture(scope="module")
def ablation():
    config = ExperimentConfig.load(DEFAULT_CONFIG)
    t0 = time.perf_counter()
    rows = run_ablation(config, SEEDS)
    return config, rows, time.perf_counter() - t0


def test_shipped_default_config_matches_code_defaults():
    assert ExperimentConfig.load(DEFAULT_CONFIG) == ExperimentConfig()


def test_criterion_6_ablation_ordering(report, ablation):
    config, rows, elapsed = ablation
    med = median_ua(rows)
    lo, mid, hi = med["LDistOnly"], med["LDistPlusCKA"], med["PLDistill"]
    teacher_ok = all(0.85 <= r.teacher_ua <= 0.98 for r in rows)
    setup_ok = (config.num_classes, config.audio_len, config.cue_count) == (4, 32, 4)
    order_ok = lo <= mid <= hi and hi - lo >= 0.02
    per_seed = "; ".join(
        f"s{r.seed}: T={r.teacher_ua:.3f} " + " ".join(f"{k}={v:.3f}" for k, v in r.student_ua.items()) for r in rows
    )
    detail = (
        f"median UA LDistOnly={lo:.4f} LDistPlusCKA={mid:.4f} PLDistill={hi:.4f} "
        f"(gap {100 * (hi - lo):+.2f}pp), teacher UA in [0.85,0.98] for all seeds={teacher_ok}, "
        f"{elapsed / 60:.1f} min [{per_seed}]"
    )
    report(6, "ablation ordering", setup_ok and teacher_ok and order_ok and elapsed < 15 * 60, detail)


def test_criterion_7_attention_premise(report, ablation):
    config, rows, _ = ablation
    baseline = config.cue_count / config.audio_len
    hits = sum(r.cue_mass > baseline for r in rows)
    masses = ", ".join(f"{r.cue_mass:.3f}" for r in rows)
    report(7, "teacher attention concentrates on cues", hits >= 4, f"{hits}/5 seeds above {baseline:.3f}: [{masses}]")


def test_training_loss_decreases_for_every_strategy(ablation):
    _, rows, _ = ablation
    for r in rows:
        for name, (first, last) in r.loss_span.items():
            assert last < first, (r.seed, name, first, last)


def test_criterion_8_determinism_and_round_trip(report, tmp_path, capsys):
    csvs = []
    for name in ("run1", "run2"):
        assert cli_main(["distill", str(DEFAULT_CONFIG), str(tmp_path / name)]) == 0
        csvs.append((tmp_path / name / "losses.csv").read_bytes())
    capsys.readouterr()
    rows = csvs[0].decode().splitlines()
    first, last = float(rows[1].split(",")[-1]), float(rows[-1].split(",")[-1])
    files = sorted((FIXTURES / "tensors").glob("*.tns"))
    kinds = {(parse(p.read_bytes()).data.ndim, parse(p.read_bytes()).dtype_code) for p in files}
    round_trip = all(serialize(parse(p.read_bytes())) == p.read_bytes() for p in files)
    covered = {(n, c) for n in (1, 2, 3) for c in (0, 1)} <= kinds
    ok = csvs[0] == csvs[1] and round_trip and covered and last < first
    detail = (
        f"loss CSVs identical={csvs[0] == csvs[1]} ({len(rows) - 1} steps, total {first:.4f} -> {last:.4f}); "
        f"{len(files)} tensor files round-trip={round_trip}, 1/2/3-dim x f32/f64 covered={covered}"
    )
    report(8, "determinism and tensor round-trip", ok, detail)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
