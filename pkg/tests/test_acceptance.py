"""End-to-end acceptance checks. Each test reports one PASS/FAIL line."""

import hashlib
import io
import math
import time
from contextlib import redirect_stdout

import numpy as np
import pytest

from fusefront import diff
from fusefront.align import align_pair, init_align
from fusefront.analysis import cerr, round_percent
from fusefront.cli import EXIT_OK, run
from fusefront.fusion import (
    CoAttentionParams,
    MoEParams,
    Theta,
    coattention_contexts,
    fuse_moe,
    gate_weights,
)
from fusefront.rng import SplitMix64
from fusefront.spectral import SpectralConfig, Waveform, extract_fbank, power_spectrum, window
from fusefront.ssl_source import SslSourceConfig, ssl_frame_count, synth_features
from fusefront.toytask import (
    ToyDatasetSpec,
    TrainConfig,
    evaluate,
    init_model,
    make_dataset,
    mean_gate_weight,
    probe_accuracy,
    train,
)

from oracles import dft_by_matrix, naive_dft

pytestmark = pytest.mark.slow


def test_criterion_1_dft_oracle(report):
    start = time.perf_counter()
    rng = SplitMix64(1)
    worst_dft, worst_parseval = 0.0, 0.0
    for i in range(100):
        L = (64, 128, 400)[i % 3]
        frame = rng.normal((L,))
        got = power_spectrum(frame, "hann")
        x = frame * window(L, "hann")
        spec = dft_by_matrix(x)
        ref = np.abs(spec[: L // 2 + 1]) ** 2
        worst_dft = max(worst_dft, np.linalg.norm(got - ref) / np.linalg.norm(ref))
        # full spectrum energy from the one-sided half: interior bins count twice
        full = got[0] + 2 * got[1 : (L + 1) // 2].sum() + (got[L // 2] if L % 2 == 0 else 0.0)
        energy = L * math.fsum(x * x)
        worst_parseval = max(worst_parseval, abs(full - energy) / energy)
    # the matrix oracle itself agrees with the element-by-element sum
    small = rng.normal((64,))
    assert np.allclose(dft_by_matrix(small), naive_dft(small), rtol=0, atol=1e-10)
    elapsed = time.perf_counter() - start
    ok = worst_dft < 1e-9 and worst_parseval < 1e-9 and elapsed < 10
    report(1, ok, f"DFT rel err {worst_dft:.2e}, Parseval rel err {worst_parseval:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_2_residual_identity(report):
    rng = SplitMix64(2)
    exact = 0
    for _ in range(50):
        T = 1 + int(rng.uniform(()) * 8)
        D = 1 + int(rng.uniform(()) * 8)
        mats = {n: rng.normal((D, D)) for n in ("W_SF_Q", "W_SF_K", "W_SSL_Q", "W_SSL_K")}
        p = CoAttentionParams(**mats, W_SF_V=np.zeros((D, D)), W_SSL_V=np.zeros((D, D)), W_out=rng.normal((2 * D, D)))
        f_sf, f_ssl = rng.normal((T, D)), rng.normal((T, D))
        h_sf, h_ssl, _, _ = coattention_contexts(f_sf, f_ssl, p)
        exact += h_sf.tobytes() == f_sf.tobytes() and h_ssl.tobytes() == f_ssl.tobytes()
    report(2, exact == 50, f"{exact}/50 cases bitwise equal")
    assert exact == 50


def test_criterion_3_softmax_normalization(report):
    rng = SplitMix64(3)
    worst, finite = 0.0, True
    for scale in (1e-3, 1.0, 1e2, 1e4):
        for _ in range(20):
            T, D = 1 + int(rng.uniform(()) * 8), 1 + int(rng.uniform(()) * 6)
            mats = {n: scale * rng.normal((D, D)) for n in
                    ("W_SF_Q", "W_SF_K", "W_SF_V", "W_SSL_Q", "W_SSL_K", "W_SSL_V")}
            p = CoAttentionParams(**mats, W_out=rng.normal((2 * D, D)))
            f_sf, f_ssl = rng.normal((T, D)), rng.normal((T, D))
            _, _, a_sf, a_ssl = coattention_contexts(f_sf, f_ssl, p)
            W = scale * rng.normal((D, 2))
            # rescale so the largest gate logit hits the target magnitude
            logits_max = np.abs(f_sf @ W).max()
            if logits_max > 0:
                W *= scale / logits_max
            g_soft = gate_weights(f_sf, MoEParams(W, Theta.SOFTMAX)).w
            g_log = gate_weights(f_sf, MoEParams(W, Theta.LOGSOFTMAX)).w
            for rows in (a_sf.sum(-1), a_ssl.sum(-1), g_soft.sum(-1), np.exp(g_log).sum(-1)):
                worst = max(worst, float(np.abs(rows - 1.0).max()))
            finite &= all(np.all(np.isfinite(a)) for a in (a_sf, a_ssl, g_soft, g_log))
    ok = worst < 1e-9 and finite
    report(3, ok, f"max |row sum - 1| = {worst:.2e} over logit scales up to 1e4, all finite={finite}")
    assert ok


def test_criterion_4_gradcheck(report):
    start = time.perf_counter()
    worst, failures = {}, []
    for variant in diff.CHECKABLE:
        for seed in range(20):
            buf = io.StringIO()
            with redirect_stdout(buf):
                code = run(["gradcheck", "--variant", variant, "--seed", str(seed), "--eps", "1e-4"])
            err = float(buf.getvalue().strip().splitlines()[-1].split()[0].split("=")[1])
            worst[variant] = max(worst.get(variant, 0.0), err)
            if code != EXIT_OK:
                failures.append((variant, seed))
    elapsed = time.perf_counter() - start
    ok = not failures and max(worst.values()) < 1e-5 and elapsed < 60
    detail = ", ".join(f"{v} {e:.1e}" for v, e in worst.items())
    report(4, ok, f"max rel err per op over 20 seeds: {detail}; {elapsed:.1f} s")
    assert ok, failures


def test_criterion_5_moe_trivial(report):
    rng = SplitMix64(5)
    f_sf, f_ssl = rng.normal((7, 5)), rng.normal((7, 5))
    out_s, g_s = fuse_moe(f_sf, f_ssl, MoEParams(np.zeros((5, 2)), Theta.SOFTMAX))
    out_l, _ = fuse_moe(f_sf, f_ssl, MoEParams(np.zeros((5, 2)), Theta.LOGSOFTMAX))
    soft_ok = np.all(g_s.w == 0.5) and np.array_equal(out_s, 0.5 * f_sf + 0.5 * f_ssl)
    log_err = float(np.abs(out_l - math.log(0.5) * (f_sf + f_ssl)).max())
    ok = bool(soft_ok) and log_err < 1e-12
    report(5, ok, f"SoftMax exact={bool(soft_ok)}, LogSoftMax max err {log_err:.1e}")
    assert ok


def test_criterion_6_cerr(report):
    a, b = cerr(17.2, 14.2), cerr(15.4, 8.1)
    ok = round_percent(a) == 17 and round_percent(b) == 47
    report(6, ok, f"(17.2, 14.2) {a:.2f} -> {round_percent(a)}%, (15.4, 8.1) {b:.2f} -> {round_percent(b)}%")
    assert ok


def test_criterion_7_gate_tracks_information(report):
    start = time.perf_counter()
    rows = []
    for seed in range(5):
        pair = []
        for informative, col in (("SF", 0), ("SSL", 1)):
            ds = make_dataset(ToyDatasetSpec(informative=informative, seed=seed))
            model = init_model("moe", 8, 2, seed=seed, theta=Theta.SOFTMAX)
            trained, _ = train(model, ds, TrainConfig(seed=seed))
            pair.append(mean_gate_weight(trained, ds)[col])
        rows.append(pair)
    elapsed = time.perf_counter() - start
    passed = sum(sf > 0.7 and ssl > 0.7 for sf, ssl in rows)
    ok = passed == 5 and elapsed < 120
    detail = "; ".join(f"seed {i}: w_SF {sf:.3f} / w_SSL {ssl:.3f}" for i, (sf, ssl) in enumerate(rows))
    report(7, ok, f"{passed}/5 seeds (SoftMax gate) [{detail}], {elapsed:.1f} s")
    assert ok


def test_criterion_8_fusion_helps(report):
    start = time.perf_counter()
    variants = [("linear", None), ("conv", None), ("coattention", None), ("moe", Theta.LOGSOFTMAX)]
    wins = {v: 0 for v, _ in variants}
    probes_in_band = True
    lines = []
    for seed in range(5):
        spec = dict(informative="both", snr=0.25, n_classes=2)
        tr = make_dataset(ToyDatasetSpec(n_utts=256, seed=seed, **spec))
        te = make_dataset(ToyDatasetSpec(n_utts=1000, seed=1000 + seed, **spec))
        probes = [probe_accuracy(tr, te, s, seed=seed) for s in ("SF", "SSL")]
        probes_in_band &= all(0.70 <= p <= 0.85 for p in probes)
        best = max(probes)
        accs = []
        for variant, theta in variants:
            model = init_model(variant, 8, 2, seed=seed, theta=theta or Theta.LOGSOFTMAX)
            trained, _ = train(model, tr, TrainConfig(seed=seed))
            acc = evaluate(trained, te)
            wins[variant] += acc >= best - 0.02
            accs.append(f"{variant} {acc:.3f}")
        lines.append(f"seed {seed}: probes {probes[0]:.3f}/{probes[1]:.3f}, " + ", ".join(accs))
    elapsed = time.perf_counter() - start
    ok = probes_in_band and all(w >= 4 for w in wins.values()) and elapsed < 300
    summary = ", ".join(f"{v} {w}/5" for v, w in wins.items())
    report(8, ok, f"{summary}; probes in 70-85%: {probes_in_band}; {elapsed:.1f} s")
    for line in lines:
        print("   ", line)
    assert ok


def test_criterion_9_shape_clock_contract(report):
    rng = SplitMix64(9)
    cfg = SpectralConfig()
    good = 0
    for i in range(200):
        seconds = 0.2 + 4.8 * float(rng.uniform(()))
        n = int(seconds * 16000)
        f_sf = extract_fbank(Waveform(0.1 * rng.normal((n,)), 16000), cfg)
        T_ssl = ssl_frame_count(n)
        f_ssl = synth_features(SslSourceConfig(seed=i), T_ssl)
        a, b = align_pair(f_sf, f_ssl, init_align(80, 1024, seed=i))
        T = a.n_frames
        good += (a.shape == b.shape == (T, 80) and T == min(f_sf.n_frames // 2, T_ssl)
                 and abs(T - T_ssl) <= 2)
    report(9, good == 200, f"{good}/200 random lengths gave matched T x 80 outputs within 2 frames of T_SSL")
    assert good == 200


def _hash_tree(paths):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(paths)}


def _pipeline(root, wavs):
    root.mkdir()
    calls = []
    for i, wav in enumerate(wavs):
        fb, ssl = root / f"{i}.fbank.feat", root / f"{i}.ssl.feat"
        asf, assl = root / f"{i}.asf.feat", root / f"{i}.assl.feat"
        calls += [
            ["extract-fbank", "--in", str(wav), "--out", str(fb)],
            ["synth-ssl", "--audio", str(wav), "--seed", str(i), "--out", str(ssl)],
            ["align", "--sf", str(fb), "--ssl", str(ssl), "--out-sf", str(asf), "--out-ssl", str(assl), "--seed", "3"],
        ]
        for v in ("linear", "conv", "coattention", "moe"):
            calls.append(["fuse", "--sf", str(asf), "--ssl", str(assl), "--variant", v,
                          "--out", str(root / f"{i}.{v}.feat")])
    model, data = root / "moe.ckpt", root / "toy.bin"
    calls += [
        ["train-toy", "--variant", "moe", "--informative", "SSL", "--theta", "softmax", "--epochs", "30",
         "--out", str(model), "--data-out", str(data)],
        ["analyze-gates", "--model", str(model), "--data", str(data), "--per", "utterance",
         "--out", str(root / "gates.csv")],
    ]
    stdout = io.StringIO()
    with redirect_stdout(stdout):
        codes = [run(c) for c in calls]
        codes.append(run(["gradcheck", "--variant", "all", "--seed", "4"]))
        codes.append(run(["cerr", "--base", "17.2", "--ssl", "14.2"]))
    (root / "stdout.txt").write_text(stdout.getvalue())
    return codes, _hash_tree(root.iterdir())


def test_criterion_10_cli_determinism(report, make_wav, tmp_path):
    wavs = [make_wav(f"w{i}.wav", seconds=s, seed=i) for i, s in enumerate((0.7, 1.0, 2.3))]
    codes_a, hashes_a = _pipeline(tmp_path / "run_a", wavs)
    codes_b, hashes_b = _pipeline(tmp_path / "run_b", wavs)
    same = hashes_a == hashes_b
    ok = same and all(c == EXIT_OK for c in codes_a + codes_b)
    report(10, ok, f"{len(hashes_a)} artifacts from {len(codes_a)} CLI runs, identical hashes across reruns: {same}")
    assert ok
