"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines as they complete.  The Monte Carlo criteria run at desk scale on
pinned seeds; binomial standard errors back every tolerance, with 3-sigma
bands exactly as stated.  Expect roughly an hour and a half on two cores,
dominated by the pinned-budget training of criterion 4.
"""

import math

import numpy as np
import pytest
import scipy.stats

from ambc import (
    SystemParams,
    sample_channel,
    generate_tag_symbol,
    lrt_context,
    lrt_statistic,
    run_point,
    substream,
    derive_seed,
)
from ambc.bench import TrainBudget, train_offline_model
from ambc.cmnet import CmnetArch, TrainConfig, init_params, forward, loss
from ambc.cmnet.arch import CONV_TENSOR_NAMES
from ambc.cmnet.network import backward
from ambc.cmnet.train import train
from ambc.dtl import transfer_learn, detect_batch
from ambc.features import Dataset, build_source_dataset, build_target_dataset, scm, to_planes, _planes_batch
from ambc.sysmodel import frame_from_seed
from ambc.cli import main as cli_main

pytestmark = pytest.mark.slow


def _report(cid: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {cid}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)
    assert ok, f"{cid}: {detail}"


def _sigma_diff(*points) -> float:
    return math.sqrt(sum(p.stderr**2 for p in points))


def _by_detector(points) -> dict:
    return {p.detector: p for p in points}


# --- criterion 1 -------------------------------------------------------------


def test_c1_lrt_matches_density_oracle():
    """Log LRT equals direct density-ratio evaluation to 1e-10 relative."""
    import time

    start = time.time()
    rng = np.random.default_rng(101)
    worst = 0.0
    cases = 0
    for m in (1, 2, 4):
        for n in (1, 3):
            params = SystemParams(
                m=m, n_str=n, p_pilots=2, t_symbols=4,
                snr_db=float(rng.uniform(0, 10)), zeta_db=float(rng.uniform(-10, 0)),
            )
            for _ in range(167):
                chan = sample_channel(params, rng)
                c = int(rng.integers(0, 2))
                x = generate_tag_symbol(chan, c, params, rng).x
                got = lrt_statistic(x, lrt_context(chan))
                want = 0.0
                for col in range(n):
                    xn = x[:, col]
                    q0 = float(np.real(xn.conj() @ np.linalg.inv(chan.sigma_0) @ xn))
                    q1 = float(np.real(xn.conj() @ np.linalg.inv(chan.sigma_1) @ xn))
                    d0 = np.exp(-q0) / (np.pi**m * np.linalg.det(chan.sigma_0).real)
                    d1 = np.exp(-q1) / (np.pi**m * np.linalg.det(chan.sigma_1).real)
                    want += np.log(d1 / d0)
                worst = max(worst, abs(got - want) / max(1.0, abs(want)))
                cases += 1
    elapsed = time.time() - start
    _report(
        "C1 (LRT oracle equivalence)",
        worst <= 1e-10 and cases >= 1000 and elapsed < 10,
        f"{cases} instances, worst rel err {worst:.3g}, {elapsed:.1f}s",
    )


# --- criterion 2 -------------------------------------------------------------


def test_c2_gradient_fidelity():
    """Backprop vs central differences, >=200 coordinates per layer."""
    import time

    start = time.time()
    arch = CmnetArch.for_antennas(8)
    params = init_params(arch, np.random.default_rng(201))
    x = np.random.default_rng(202).standard_normal((3, 2, 8, 8))
    labels = np.array([1, 0, 1])
    grads, _ = backward(params, x, labels, mode="eval")  # dropout off
    picker = np.random.default_rng(203)
    worst = 0.0
    per_layer = 200
    for name, g in grads.items():
        arr = getattr(params, name)
        flat, gflat = arr.ravel(), g.ravel()
        idx = (
            picker.choice(flat.size, size=per_layer, replace=False)
            if flat.size > per_layer
            else np.arange(flat.size)
        )
        for i in idx:
            orig = flat[i]
            flat[i] = orig + 1e-5
            hi = loss(forward(params, x), labels)
            flat[i] = orig - 1e-5
            lo = loss(forward(params, x), labels)
            flat[i] = orig
            fd = (hi - lo) / 2e-5
            worst = max(worst, abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-8))
    elapsed = time.time() - start
    _report(
        "C2 (gradient fidelity)",
        worst <= 1e-4 and elapsed < 60,
        f"max rel err {worst:.3g} over {per_layer}/layer, {elapsed:.1f}s",
    )


# --- criterion 3 -------------------------------------------------------------


def test_c3_degenerate_channel_ber():
    """With the backscatter path off, every detector sits at BER 1/2."""
    params = SystemParams(
        m=8, n_str=16, p_pilots=10, t_symbols=210,
        snr_db=10.0, zeta_db=-np.inf, seed=301,
    )
    budget = TrainBudget(k_s=1000, k_t=200, i_s=2, i_t=5)
    points = run_point(
        params, detectors=("lrt", "ed", "cmnet"), budget=budget,
        trials=10_000, workers=2,
    )
    details = []
    ok = True
    for p in points:
        sigma = math.sqrt(0.25 / p.trials)  # binomial sigma at p = 1/2
        ok = ok and abs(p.ber - 0.5) <= 3 * sigma
        details.append(f"{p.detector}={p.ber:.4f}")
    _report(
        "C3 (degenerate-channel BER)",
        ok,
        f"{', '.join(details)} over {points[0].trials} symbols (band 0.5 +/- {3*math.sqrt(0.25/points[0].trials):.4f})",
    )


# --- criteria 4 and 8 share the pinned-budget offline model -------------------

C4_PARAMS = SystemParams(
    m=16, n_str=50, p_pilots=10, t_symbols=210,
    snr_db=10.0, zeta_db=-20.0, seed=1001,
)
C4_BUDGET = TrainBudget(k_s=20000, k_t=2000, i_s=30, i_t=60)


@pytest.fixture(scope="module")
def c4_model():
    print("\n[acceptance] training criterion-4 offline model "
          f"(K_S={C4_BUDGET.k_s}, I_S={C4_BUDGET.i_s}) ...", flush=True)
    model = train_offline_model(C4_PARAMS, C4_BUDGET, C4_PARAMS.seed)
    print(f"[acceptance] offline model ready, final loss {model.train_loss:.4f}",
          flush=True)
    return model


def test_c4_detector_ordering(c4_model):
    """CMNet tracks the optimal LRT and beats the energy detector."""
    points = _by_detector(
        run_point(
            C4_PARAMS, detectors=("lrt", "ed", "cmnet"), budget=C4_BUDGET,
            trials=20_000, workers=2, model=c4_model,
        )
    )
    lrt, ed, cmnet = points["lrt"], points["ed"], points["cmnet"]
    checks = []
    checks.append(lrt.ber <= cmnet.ber + 3 * _sigma_diff(lrt, cmnet))
    sigma2 = math.sqrt(cmnet.stderr**2 + (2 * lrt.stderr) ** 2)
    checks.append(cmnet.ber <= 2 * lrt.ber + 3 * sigma2)
    if ed.ber >= 5 * lrt.ber:
        checks.append(cmnet.ber < ed.ber - 3 * _sigma_diff(cmnet, ed))
    _report(
        "C4 (detector ordering)",
        all(checks),
        f"lrt={lrt.ber:.6g} ({lrt.errors}/{lrt.trials}), "
        f"cmnet={cmnet.ber:.6g} ({cmnet.errors}/{cmnet.trials}), "
        f"ed={ed.ber:.6g}; clauses={checks}",
    )


# --- criteria 5-7: sweeps ------------------------------------------------------

SWEEP_BUDGET = TrainBudget(k_s=5000, k_t=800, i_s=8, i_t=24)


def _sweep_points(axis, values, fixed, detectors, trials, budget=SWEEP_BUDGET):
    out = {}
    for v in values:
        params = fixed.replace(**({"m": int(v)} if axis == "antennas" else {axis: float(v)}))
        pts = run_point(
            params, detectors=detectors, budget=budget,
            trials=trials, workers=2, axis=axis,
        )
        for p in pts:
            out[(p.detector, v)] = p
        print(f"[acceptance] {axis}={v}: "
              + ", ".join(f"{p.detector}={p.ber:.5g}" for p in pts), flush=True)
    return out


def _non_increasing(points, detector, values):
    msgs = []
    ok = True
    for a, b in zip(values, values[1:]):
        pa, pb = points[(detector, a)], points[(detector, b)]
        bound = pa.ber + 3 * _sigma_diff(pa, pb)
        ok = ok and pb.ber <= bound
        msgs.append(f"{detector}[{b}]={pb.ber:.5g}<={bound:.5g}")
    return ok, "; ".join(msgs)


def test_c5_snr_monotonicity():
    """BER falls (within noise) as direct-link SNR rises, both detectors."""
    fixed = C4_PARAMS.replace(seed=501)
    values = (0.0, 5.0, 10.0, 15.0)
    points = _sweep_points("snr_db", values, fixed, ("lrt", "cmnet"), trials=6000)
    ok_l, msg_l = _non_increasing(points, "lrt", values)
    ok_c, msg_c = _non_increasing(points, "cmnet", values)
    _report("C5 (SNR monotonicity)", ok_l and ok_c, f"{msg_l} | {msg_c}")


def test_c6_zeta_monotonicity():
    """BER falls (within noise) as the backscatter ratio strengthens."""
    fixed = C4_PARAMS.replace(snr_db=5.0, seed=601)
    values = (-30.0, -20.0, -10.0)
    points = _sweep_points("zeta_db", values, fixed, ("lrt", "cmnet"), trials=6000)
    ok_l, msg_l = _non_increasing(points, "lrt", values)
    ok_c, msg_c = _non_increasing(points, "cmnet", values)
    _report("C6 (zeta monotonicity)", ok_l and ok_c, f"{msg_l} | {msg_c}")


def test_c7_antenna_scaling():
    """More antennas help: strict LRT gaps, CMNet non-increasing."""
    fixed = C4_PARAMS.replace(seed=701)
    values = (4, 8, 16)
    # strict-gap claim on the optimal detector needs many symbols
    lrt_points = _sweep_points("antennas", values, fixed, ("lrt",), trials=100_000)
    strict_ok = True
    gap_msgs = []
    for small, big in ((4, 8), (8, 16)):
        lo, hi = lrt_points[("lrt", big)], lrt_points[("lrt", small)]
        gap = hi.ber - lo.ber
        need = 3 * _sigma_diff(lo, hi)
        strict_ok = strict_ok and gap > need
        gap_msgs.append(f"lrt M{small}->M{big} gap {gap:.5g} > {need:.5g}")
    cm_points = _sweep_points("antennas", values, fixed, ("cmnet",), trials=8000)
    ok_c, msg_c = _non_increasing(cm_points, "cmnet", values)
    _report(
        "C7 (antenna scaling)",
        strict_ok and ok_c,
        "; ".join(gap_msgs) + " | " + msg_c,
    )


# --- criterion 8 ---------------------------------------------------------------


def test_c8_transfer_gain(c4_model):
    """Pilot fine-tuning helps: paired pre/post comparison on 50 frames."""
    n_frames = 50
    diffs = []
    pre_total = post_total = 0
    for f in range(n_frames):
        chan, frame = frame_from_seed(C4_PARAMS, derive_seed(801, "frame", f))
        pilots = frame[: C4_PARAMS.p_pilots]
        data = frame[C4_PARAMS.p_pilots :]
        d_t = build_target_dataset(
            pilots, C4_BUDGET.k_t, substream(801, "augment", f)
        )
        transferred = transfer_learn(
            c4_model, d_t,
            TrainConfig(epochs=C4_BUDGET.i_t, freeze_conv=True,
                        seed=derive_seed(801, "transfer", f)),
        )
        x = np.stack([s.x for s in data])
        truth = np.array([s.label for s in data])
        e_pre = int((detect_batch(c4_model, x) != truth).sum())
        e_post = int((detect_batch(transferred, x) != truth).sum())
        diffs.append((e_post - e_pre) / len(truth))
        pre_total += e_pre
        post_total += e_post
        if (f + 1) % 10 == 0:
            print(f"[acceptance] C8 frame {f+1}/{n_frames}: "
                  f"pre={pre_total} post={post_total}", flush=True)
    diffs = np.array(diffs)
    mean = diffs.mean()
    sd = diffs.std(ddof=1)
    if sd == 0.0:
        significant = mean < 0
        t_stat = -np.inf if mean < 0 else np.inf
    else:
        t_stat = mean / (sd / np.sqrt(n_frames))
        significant = t_stat <= -scipy.stats.t.ppf(0.95, df=n_frames - 1)
    _report(
        "C8 (transfer gain)",
        mean <= 0 and significant,
        f"mean per-frame BER diff {mean:.5f} (post-pre), t={t_stat:.2f}, "
        f"totals pre={pre_total} post={post_total} over {n_frames} frames",
    )


# --- criterion 9 ---------------------------------------------------------------


def test_c9_freeze_contract():
    """Conv tensors survive transfer bitwise on every run."""
    params = SystemParams(
        m=8, n_str=16, p_pilots=6, t_symbols=30, snr_db=10.0, zeta_db=0.0, seed=901,
    )
    d_s = build_source_dataset(params, 300, substream(901, "src"))
    pretrained_model = None
    ok = True
    runs = []
    from ambc.dtl import offline_learn

    pretrained_model = offline_learn(d_s, TrainConfig(epochs=2, seed=902))
    for run in range(5):
        chan, frame = frame_from_seed(params, derive_seed(903, "frame", run))
        d_t = build_target_dataset(
            frame[: params.p_pilots], 60, substream(903, "aug", run)
        )
        transferred = transfer_learn(
            pretrained_model, d_t,
            TrainConfig(epochs=3, freeze_conv=True, seed=derive_seed(903, "t", run)),
        )
        same = all(
            np.array_equal(
                getattr(transferred.params, n), getattr(pretrained_model.params, n)
            )
            for n in CONV_TENSOR_NAMES
        )
        changed = not np.array_equal(
            transferred.params.fc1_w, pretrained_model.params.fc1_w
        )
        ok = ok and same and changed
        runs.append(same)
    _report("C9 (freeze contract)", ok, f"conv bitwise-equal on runs {runs}")


# --- criterion 10 ----------------------------------------------------------------


def test_c10_sweep_determinism(tmp_path):
    """ber-sweep twice, same seed, different workers: identical bytes."""
    spec = tmp_path / "sweep.cfg"
    spec.write_text(
        "axis = snr_db\nvalues = 0, 10\ndetectors = lrt,ed,cmnet\ntrials = 1000\n"
        "m = 4\nn_str = 8\np_pilots = 4\nt_symbols = 54\nzeta_db = -5\nseed = 1010\n"
        "k_s = 200\nk_t = 40\ni_s = 2\ni_t = 3\n"
    )
    out1, out2 = tmp_path / "w1.csv", tmp_path / "w2.csv"
    rc1 = cli_main(["ber-sweep", "--spec", str(spec), "--out", str(out1), "--workers", "1"])
    rc2 = cli_main(["ber-sweep", "--spec", str(spec), "--out", str(out2), "--workers", "2"])
    identical = out1.read_bytes() == out2.read_bytes()
    _report(
        "C10 (sweep determinism)",
        rc1 == 0 and rc2 == 0 and identical,
        f"byte-identical={identical} across worker counts 1 and 2",
    )


# --- criterion 11 ----------------------------------------------------------------


def test_c11_invariance_suite():
    """Randomized structural invariants, >=1e4 cases per family."""
    import time

    start = time.time()
    rng = np.random.default_rng(1101)
    n_cases = 10_000
    fails = {}

    # SCM construction invariants and per-column phase invariance
    herm = psd = phase = 0
    for _ in range(n_cases):
        m = int(rng.integers(1, 9))
        n = int(rng.integers(1, 33))
        x = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        r = scm(x)  # constructor enforces Hermitian storage and PSD
        herm += int(not np.array_equal(r.r, r.r.conj().T))
        tol = 1e-10 * np.real(np.trace(r.r)) / m
        psd += int(np.linalg.eigvalsh(r.r)[0] < -tol)
        ph = np.exp(1j * rng.uniform(0, 2 * np.pi, size=n))
        r2 = scm(x * ph[None, :])
        scale = np.abs(r.r).max()
        phase += int(np.abs(r2.r - r.r).max() > 1e-10 * scale)
    fails["scm_hermitian"] = herm
    fails["scm_psd"] = psd
    fails["scm_phase"] = phase

    # LRT per-column phase invariance
    bad_lrt = 0
    params = SystemParams(m=4, n_str=8, p_pilots=2, t_symbols=4,
                          snr_db=5.0, zeta_db=-5.0)
    for _ in range(100):
        chan = sample_channel(params, rng)
        ctx = lrt_context(chan)
        for _ in range(100):
            x = generate_tag_symbol(chan, int(rng.integers(0, 2)), params, rng).x
            ph = np.exp(1j * rng.uniform(0, 2 * np.pi, size=8))
            a = lrt_statistic(x, ctx)
            b = lrt_statistic(x * ph[None, :], ctx)
            if abs(a - b) > 1e-10 * max(1.0, abs(a)):
                bad_lrt += 1
    fails["lrt_phase"] = bad_lrt

    # softmax normalization and positivity on network scores
    arch = CmnetArch.for_antennas(8)
    net = init_params(arch, rng)
    planes = rng.standard_normal((n_cases, 2, 8, 8))
    scores = forward(net, planes)
    fails["softmax_norm"] = int((np.abs(scores.sum(axis=1) - 1.0) > 1e-12).sum())
    fails["softmax_pos"] = int((scores <= 0).sum())

    # trace-normalization scale invariance of the plane split
    from ambc.features import Scm

    bad_scale = 0
    for _ in range(n_cases):
        m = int(rng.integers(2, 9))
        x = rng.standard_normal((m, 12)) + 1j * rng.standard_normal((m, 12))
        r = scm(x)
        p1 = to_planes(r, normalize=True)
        p2 = to_planes(Scm(rng.uniform(0.1, 100.0) * r.r), normalize=True)
        if np.abs(p2 - p1).max() > 1e-12 * np.abs(p1).max():
            bad_scale += 1
    fails["trace_norm_scale"] = bad_scale

    elapsed = time.time() - start
    total_bad = sum(fails.values())
    _report(
        "C11 (invariance suite)",
        total_bad == 0 and elapsed < 60,
        f"failures by family {fails}, {elapsed:.1f}s",
    )
