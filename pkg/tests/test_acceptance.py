"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Criteria 2, 3 and 5 contain clauses that are mathematically unattainable
(composed gradient maps are not gradient fields; float64 cannot invert the
squashing map to 1e-9 at the saturation edge of the stated box). Those
tests implement the stated tolerances anyway and fail honestly with the
measured numbers; the analysis lives next to the repository notes and in
test_verify.py / test_simplex.py regression pins. Everything else passes.
"""

import dataclasses
import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from properlink import autodiff as ad
from properlink import blocks as cvx
from properlink import data as dio
from properlink import losses
from properlink import simplex
from properlink import train as tr
from properlink import verify as ver

import conftest
import test_data as parser_fixtures


def report(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"[ACCEPTANCE] criterion {num} ({name}): {'PASS' if ok else 'FAIL'} -- {detail}")


def rel_err(a, b, floor=1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


# -------------------------------------------------------------------------
# criterion 1: gradient correctness
# -------------------------------------------------------------------------

def _random_param_set(rng, n_blocks, n_classes, n_features, hidden=2, depth=4):
    d = n_classes - 1
    params = {"W": rng.normal(size=(d, n_features)) * 0.3, "b": rng.normal(size=d) * 0.1}
    for i in range(1, n_blocks + 1):
        blk = cvx.init_block(d, hidden, depth, rng)
        pos, free, biases, w0, w1 = blk.param_lists()
        params[f"g{i}.pos1"] = pos[0]
        params[f"g{i}.bias1"] = biases[0]
        for k in range(2, depth + 2):
            params[f"g{i}.free{k}"] = free[k - 2]
            params[f"g{i}.pos{k}"] = pos[k - 1]
            params[f"g{i}.bias{k}"] = biases[k - 1]
        params[f"g{i}.w0"] = w0
        params[f"g{i}.w1"] = w1
    return params


def _nll_loss(params, n_blocks, depth, x_batch, labels0):
    z = ad.matmul(x_batch, ad.transpose(params["W"])) + params["b"]
    for i in range(n_blocks, 0, -1):
        bp = ([params[f"g{i}.pos{k}"] for k in range(1, depth + 2)],
              [params[f"g{i}.free{k}"] for k in range(2, depth + 2)],
              [params[f"g{i}.bias{k}"] for k in range(1, depth + 2)],
              params[f"g{i}.w0"], params[f"g{i}.w1"])
        z = cvx._block_gradient(*bp, z)
    return ad.reduce_sum(ad.lse_plus(z) - ad.take_label(z, labels0)) / x_batch.shape[0]


def test_criterion_01_gradient_correctness():
    started = time.perf_counter()
    depth = 4
    worst_param = 0.0
    worst_first_order = 0.0
    rng = np.random.default_rng(202401)
    for n_blocks in (0, 1, 2):
        for n_classes in (2, 3, 5):
            for n_features in (3, 10):
                params = _random_param_set(rng, n_blocks, n_classes, n_features,
                                           depth=depth)
                x_batch = rng.normal(size=(6, n_features))
                labels0 = rng.integers(0, n_classes, size=6)

                def loss_fn(p):
                    return _nll_loss(p, n_blocks, depth, x_batch, labels0)

                _, grads = ad.value_and_grad_params(loss_fn, params)

                def loss_raw(p):
                    return float(ad.value_of(loss_fn(p)))

                total = sum(int(np.prod(np.shape(v), dtype=int)) or 1
                            for v in params.values())
                budget = None if total <= 120 else 60
                for name, value in params.items():
                    base = np.atleast_1d(np.asarray(value, dtype=np.float64)).copy()
                    coords = list(np.ndindex(base.shape))
                    if budget is not None and len(coords) > 12:
                        picks = rng.choice(len(coords), size=12, replace=False)
                        coords = [coords[int(c)] for c in picks]
                    for idx in coords:
                        hi, lo = base.copy(), base.copy()
                        hi[idx] += 1e-5
                        lo[idx] -= 1e-5
                        shape0 = np.shape(value)
                        p_hi = dict(params)
                        p_lo = dict(params)
                        p_hi[name] = hi.reshape(shape0) if shape0 else float(hi[idx])
                        p_lo[name] = lo.reshape(shape0) if shape0 else float(lo[idx])
                        fd = (loss_raw(p_hi) - loss_raw(p_lo)) / 2e-5
                        analytic = np.atleast_1d(np.asarray(grads[name]))[idx]
                        worst_param = max(worst_param, rel_err(analytic, fd))

    for d in (1, 2, 4):
        blk = cvx.init_block(d, 2, 4, rng)
        for _ in range(5):
            x = rng.normal(size=d) * 2
            grad = np.asarray(cvx.block_grad(blk, x))
            fd = np.zeros(d)
            for i in range(d):
                e = np.zeros(d)
                e[i] = 1e-5
                fd[i] = (cvx.block_eval(blk, x + e) - cvx.block_eval(blk, x - e)) / 2e-5
            worst_first_order = max(worst_first_order, rel_err(grad, fd))

    elapsed = time.perf_counter() - started
    ok = worst_param < 1e-4 and worst_first_order < 1e-5 and elapsed < 60.0
    report(1, "gradient correctness", ok,
           f"param rel err {worst_param:.2e} (<1e-4), first-order {worst_first_order:.2e} "
           f"(<1e-5), {elapsed:.0f}s (<60s)")
    assert ok


# -------------------------------------------------------------------------
# criterion 2: link certification (fails for models with blocks; the
# composed map's Jacobian is a product of two symmetric PD matrices and is
# not symmetric, hence not a gradient field)
# -------------------------------------------------------------------------

def _quick_blobs(rng, n_classes, n_features, per_class=25):
    centers = rng.normal(size=(n_classes, n_features)) * 4
    rows = np.vstack([rng.normal(size=(per_class, n_features)) + c for c in centers])
    labels = np.repeat(np.arange(1, n_classes + 1), per_class)
    text = "\n".join(
        f"{labels[i]} " + " ".join(f"{j + 1}:{rows[i, j]:.6f}" for j in range(n_features))
        for i in range(len(labels)))
    return dio.parse_libsvm(text)


def test_criterion_02_link_certification():
    started = time.perf_counter()
    rng = np.random.default_rng(77)
    models = []
    for seed in (0, 1, 2):
        for n_classes in (2, 3, 5):
            for n_blocks in (0, 1, 2):
                blocks = tuple(cvx.init_block(n_classes - 1, 2, 4,
                                              np.random.default_rng((seed, n_classes, b)))
                               for b in range(n_blocks))
                models.append((f"random C={n_classes} B={n_blocks} s={seed}",
                               tr.LinkModel(np.zeros((n_classes - 1, 3)),
                                            np.zeros(n_classes - 1),
                                            cvx.GradientChain(blocks), n_classes, 3)))
    models = models[:20]
    for n_blocks in (0, 0, 1, 2, 2):
        ds = _quick_blobs(rng, 3, 2)
        cfg = tr.TrainConfig(epochs=8, batch_size=32, n_blocks=n_blocks,
                             hidden_dim=2, depth=4, seed=len(models))
        model, _ = tr.train_link_model(ds, cfg)
        models.append((f"trained B={n_blocks}", model))

    failures = []
    for name, model in models:
        dim = model.n_classes - 1
        reports = ver.certify_link(model, points=100, seed=5)
        asym = max(r.max_asymmetry for r in reports)
        min_eig = min(r.min_eigenvalue for r in reports)
        field = model.link_field()
        mono = ver.check_monotone(field, dim, pairs=1000, seed=6)
        cyc_fail = []
        for n in (2, 3, 4):
            rep = ver.check_cyclic(field, dim, n, cycles=200, seed=7)
            if not rep.passed:
                cyc_fail.append((n, rep.max_cycle_sum))
        clauses = []
        if asym >= 1e-5:
            clauses.append(f"asymmetry {asym:.2e}")
        if min_eig <= 0.0:
            clauses.append(f"min eig {min_eig:.2e}")
        if not mono.strictly_monotone:
            clauses.append(f"monotone min {mono.min_inner_product:.2e}")
        if cyc_fail:
            clauses.append("cyclic " + ",".join(f"n={n}:{s:.1e}" for n, s in cyc_fail))
        if clauses:
            failures.append(f"{name}: " + "; ".join(clauses))

    elapsed = time.perf_counter() - started
    ok = not failures and elapsed < 120.0
    chainless = sum(1 for _, m in models if len(m.chain) == 0)
    binary = sum(1 for _, m in models if len(m.chain) and m.n_classes == 2)
    report(2, "link certification", ok,
           f"{len(models) - len(failures)}/{len(models)} models certified: all "
           f"{chainless} chainless and all {binary} binary-blocked models pass, every "
           f"multiclass model with blocks fails; {elapsed:.0f}s (<120s); "
           + (f"first failure: {failures[0]}" if failures else "all clauses hold"))
    assert ok, (
        f"{len(failures)} of {len(models)} models fail certification at the stated "
        f"tolerances. Every chainless model passes, and so does every binary (C=2) "
        f"model with blocks - in one dimension scalar Jacobians commute, so the "
        f"composition stays a gradient, the classical binary setting. Every "
        f"multiclass model with blocks fails Jacobian symmetry at ~1e-2 (and some "
        f"the eigenvalue clause): the Jacobian of squash(chain(x)) is a product of "
        f"symmetric PD matrices, which is not symmetric unless the factors commute, "
        f"so the composition is invertible but not a gradient field. See the "
        f"decisions ledger and "
        f"test_verify.py::test_composite_link_jacobian_asymmetry_pinned. Failures: "
        + " | ".join(failures[:6]) + (" | ..." if len(failures) > 6 else ""))


# -------------------------------------------------------------------------
# criterion 3: squashing-map algebra (logit-side round trip fails at the
# saturation edge of the stated box; float64 information bound)
# -------------------------------------------------------------------------

def test_criterion_03_softmax_algebra():
    rng = np.random.default_rng(303)
    clause_fail = []

    worst_logit = 0.0
    for _ in range(400):
        x = rng.uniform(-20, 20, size=int(rng.integers(1, 6)))
        worst_logit = max(worst_logit, float(np.max(np.abs(
            simplex.softmax_plus_inverse(simplex.softmax_plus(x)) - x))))
    for corner in ([20.0], [19.5, -20.0, 3.0], [20.0] * 5):
        x = np.asarray(corner)
        worst_logit = max(worst_logit, float(np.max(np.abs(
            simplex.softmax_plus_inverse(simplex.softmax_plus(x)) - x))))
    if worst_logit >= 1e-9:
        clause_fail.append(f"logit round-trip {worst_logit:.2e} >= 1e-9")

    worst_prob = 0.0
    for _ in range(1000):
        k = int(rng.integers(1, 7))
        p = rng.dirichlet(np.ones(k + 1))[:k]
        worst_prob = max(worst_prob, float(np.max(np.abs(
            simplex.softmax_plus(simplex.softmax_plus_inverse(p)) - p))))
    if worst_prob >= 1e-10:
        clause_fail.append(f"probability round-trip {worst_prob:.2e}")

    worst_hess = 0.0
    for _ in range(100):
        x = rng.uniform(-5, 5, size=3)
        jac = ver.numerical_jacobian(simplex.softmax_plus, x, step=1e-5)
        mu = simplex.softmax_plus(x)
        worst_hess = max(worst_hess, float(np.max(np.abs(
            jac - (np.diag(mu) - np.outer(mu, mu))))))
    if worst_hess >= 1e-6:
        clause_fail.append(f"Hessian identity {worst_hess:.2e}")

    big = simplex.stable_log_probs(np.array([1e4]))
    if not np.all(np.isfinite(big)):
        clause_fail.append("stable log-probs not finite at 1e4")

    def naive(x):
        full = np.exp(np.concatenate([x, [0.0]]))
        return np.log(full / full.sum())

    worst_naive = 0.0
    for _ in range(300):
        x = rng.uniform(-20, 20, size=int(rng.integers(1, 6)))
        worst_naive = max(worst_naive, float(np.max(np.abs(
            simplex.stable_log_probs(x) - naive(x)))))
    if worst_naive >= 1e-12:
        clause_fail.append(f"naive agreement {worst_naive:.2e}")

    ok = not clause_fail
    report(3, "squashing-map algebra", ok,
           f"logit round-trip {worst_logit:.2e} (must be <1e-9), probability "
           f"round-trip {worst_prob:.2e} (<1e-10), Hessian {worst_hess:.2e} (<1e-6), "
           f"naive agreement {worst_naive:.2e} (<1e-12)")
    assert ok, (
        "clauses failed: " + "; ".join(clause_fail) + ". The logit-side round trip "
        "cannot meet 1e-9 at the edge of the stated box in float64: with a logit "
        "near +20 the implicit-class probability is ~2e-9 and one ulp of the "
        "dominant component maps back through 1/p_C to ~5e-8 (information bound; "
        "see test_simplex.py::test_logit_round_trip_saturation_floor_documented).")


# -------------------------------------------------------------------------
# criterion 4: chainless training is exactly multinomial logistic regression
# -------------------------------------------------------------------------

def test_criterion_04_mlr_equivalence(iris_dataset):
    cfg = tr.TrainConfig(n_blocks=0, seed=9)
    m_lt, met_lt = tr.train_link_model(iris_dataset, cfg)
    m_mlr, met_mlr = tr.train_mlr(iris_dataset, cfg)
    trace_gap = max(abs(a - b) for a, b in zip(met_lt.trace, met_mlr.trace))
    x = dio.dense_matrix(iris_dataset)
    preds_lt = [tr.predict_class(m_lt, row) for row in x]
    preds_mlr = [tr.predict_class(m_mlr, row) for row in x]
    same = preds_lt == preds_mlr
    ok = trace_gap <= 1e-12 and same
    report(4, "MLR equivalence", ok,
           f"per-epoch NLL trace gap {trace_gap:.1e} (<=1e-12), "
           f"identical predictions on all {len(x)} iris rows: {same}")
    assert ok


# -------------------------------------------------------------------------
# criterion 5: canonical-loss reconstruction (path independence fails for
# learned links with blocks; their field is not conservative)
# -------------------------------------------------------------------------

def test_criterion_05_canonical_loss(blobs_dataset):
    rng = np.random.default_rng(505)
    clause_fail = []

    worst_pot = 0.0
    for _ in range(100):
        x = rng.normal(size=3) * 3
        got = losses.potential(simplex.softmax_plus, x, np.zeros(3), n_quad=64)
        want = simplex.log_sum_exp_plus(x) - math.log(4.0)
        worst_pot = max(worst_pot, abs(got - want))
    if worst_pot >= 1e-8:
        clause_fail.append(f"potential vs closed form {worst_pot:.2e}")

    worst_nll = 0.0
    x0 = np.full(3, -40.0)
    for _ in range(50):
        x = rng.normal(size=3) * 2
        cl = losses.canonical_loss(simplex.softmax_plus, x, x0)
        worst_nll = max(worst_nll, abs(cl.values[-1] - losses.nll(x, 4)))
    if worst_nll >= 1e-6:
        clause_fail.append(f"component C vs nll {worst_nll:.2e}")

    worst_path = 0.0
    for n_blocks in (1, 2):
        cfg = tr.TrainConfig(epochs=6, batch_size=32, n_blocks=n_blocks, seed=n_blocks)
        model, _ = tr.train_link_model(blobs_dataset, cfg)
        field = model.link_field()
        for _ in range(20):
            a, b, mid = (rng.normal(size=2) * 2 for _ in range(3))
            direct = losses.potential(field, b, a, n_quad=64)
            legs = (losses.potential(field, mid, a, n_quad=64)
                    + losses.potential(field, b, mid, n_quad=64))
            worst_path = max(worst_path, abs(direct - legs) / max(abs(direct), 1e-12))
    if worst_path >= 1e-6:
        clause_fail.append(f"path independence (learned link) {worst_path:.2e}")

    worst_mid = -np.inf
    x0 = np.zeros(2)
    for _ in range(100):
        a = rng.normal(size=2) * 3
        b = rng.normal(size=2) * 3
        la = losses.canonical_loss(simplex.softmax_plus, a, x0).values
        lb = losses.canonical_loss(simplex.softmax_plus, b, x0).values
        lm = losses.canonical_loss(simplex.softmax_plus, 0.5 * (a + b), x0).values
        worst_mid = max(worst_mid, float(np.max(lm - 0.5 * (la + lb))))
    if worst_mid > 1e-8:
        clause_fail.append(f"midpoint convexity {worst_mid:.2e}")

    ok = not clause_fail
    report(5, "canonical-loss reconstruction", ok,
           f"potential {worst_pot:.2e} (<1e-8), nll match {worst_nll:.2e} (<1e-6), "
           f"path dependence {worst_path:.2e} (must be <1e-6 relative), "
           f"midpoint convexity excess {worst_mid:.2e} (<=1e-8)")
    assert ok, (
        "clauses failed: " + "; ".join(clause_fail) + ". Line integrals of a link "
        "with blocks are path-dependent at the ~1e-2 relative level because the "
        "composed field is not conservative (not a gradient; see the criterion-2 "
        "failure analysis). The squashing-only clauses all pass.")


# -------------------------------------------------------------------------
# criterion 6: properness suite
# -------------------------------------------------------------------------

def test_criterion_06_properness():
    log_report = losses.properness_check(losses.log_loss_vector, 3, 10_000, seed=60)
    sq_report = losses.properness_check(losses.square_loss_vector, 3, 10_000, seed=61)

    rng = np.random.default_rng(62)
    worst_gap = 0.0
    for _ in range(500):
        p = rng.dirichlet(np.ones(3))
        q = rng.dirichlet(np.ones(3))
        gap = (losses.conditional_risk(p, losses.log_loss_vector(q))
               - losses.conditional_risk(p, losses.log_loss_vector(p)))
        worst_gap = max(worst_gap, abs(gap - losses.kl_divergence(p, q)))

    planted = losses.properness_check(lambda q: np.asarray(q), 3, 2000, seed=63)

    ok = (log_report.n_violations == 0 and sq_report.n_violations == 0
          and worst_gap < 1e-9 and not planted.passed)
    report(6, "properness suite", ok,
           f"log violations {log_report.n_violations}/10000, square "
           f"{sq_report.n_violations}/10000, Bregman-vs-KL gap {worst_gap:.1e} "
           f"(<1e-9), planted improper loss detected: {not planted.passed}")
    assert ok


# -------------------------------------------------------------------------
# criterion 7: desk-scale accuracy reproduction over 20 random splits
# -------------------------------------------------------------------------

def _bench_mean_accuracy(dataset, runs=20, eta=0.0, jobs=2, epochs=240):
    cfg = tr.TrainConfig(epochs=epochs)
    text = dio.serialize_libsvm(dataset)
    jobs_args = [(text, dataset.n_features, run, eta, "lt", 0.8,
                  dataclasses.asdict(cfg)) for run in range(runs)]
    from properlink.cli import _bench_one

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_bench_one, jobs_args))
    else:
        rows = [_bench_one(a) for a in jobs_args]
    accs = [r[4] for r in rows]
    assert all(a is not None for a in accs)
    return float(np.mean(accs))


def test_criterion_07_accuracy_reproduction(iris_dataset, wine_dataset):
    started = time.perf_counter()
    iris_mean = 100.0 * _bench_mean_accuracy(iris_dataset)
    wine_mean = 100.0 * _bench_mean_accuracy(wine_dataset)
    iris_ok = abs(iris_mean - 86.67) <= 3 * 3.89
    wine_ok = abs(wine_mean - 96.94) <= 3 * 1.14
    elapsed = time.perf_counter() - started
    report(7, "accuracy reproduction", iris_ok and wine_ok,
           f"iris mean {iris_mean:.2f}% (band 86.67 +/- 11.67), wine mean "
           f"{wine_mean:.2f}% (band 96.94 +/- 3.42), {elapsed:.0f}s; segment "
           + ("runs below" if conftest.segment_path() else "skipped (dataset not in sandbox)"))
    assert iris_ok and wine_ok


def test_criterion_07_segment_rows():
    path = conftest.segment_path()
    if path is None:
        report(7, "accuracy reproduction [segment rows]", True,
               "SKIPPED: statlog segment is not bundled and this sandbox has no "
               "network route to LIBSVM/UCI/openml; drop a LIBSVM-format "
               "segment.scale into tests/data/ or $PROPERLINK_DATA_DIR to run")
        pytest.skip("segment dataset unavailable offline; see printed note")
    dataset = dio.parse_libsvm(open(path).read())
    clean_mean = 100.0 * _bench_mean_accuracy(dataset)
    noisy_mean = 100.0 * _bench_mean_accuracy(dataset, eta=0.5)
    clean_ok = abs(clean_mean - 95.95) <= 3.0
    noisy_ok = abs(noisy_mean - 86.56) <= 5.0 and noisy_mean > 100.0 / 7.0
    report(7, "accuracy reproduction [segment rows]", clean_ok and noisy_ok,
           f"clean mean {clean_mean:.2f}% (band 95.95 +/- 3.0), eta=0.5 mean "
           f"{noisy_mean:.2f}% (band 86.56 +/- 5.0, above chance 14.29%)")
    assert clean_ok and noisy_ok


# -------------------------------------------------------------------------
# criterion 8: symmetric noise statistics
# -------------------------------------------------------------------------

def test_criterion_08_noise_statistics():
    from scipy import stats as scipy_stats

    n, n_classes, eta = 100_000, 10, 0.5
    labels = tuple(int(v) for v in np.random.default_rng(80).integers(1, n_classes + 1, size=n))
    noisy = dio.inject_symmetric_noise(labels, n_classes, dio.NoiseSpec(eta, seed=81))
    flips = np.asarray(labels) != np.asarray(noisy)
    rate = float(flips.mean())
    sigma = math.sqrt(eta * (1 - eta) / n)
    rate_ok = abs(rate - eta) < 3 * sigma

    ranks = []
    for old, new in zip(np.asarray(labels)[flips], np.asarray(noisy)[flips]):
        ranks.append(new - 1 if new < old else new - 2)
    counts = np.bincount(np.asarray(ranks), minlength=n_classes - 1)
    expected = flips.sum() / (n_classes - 1)
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    threshold = float(scipy_stats.chi2.ppf(0.99, n_classes - 2))
    uniform_ok = chi2 < threshold

    ok = rate_ok and uniform_ok
    report(8, "noise statistics", ok,
           f"empirical rate {rate:.4f} vs eta {eta} (3-sigma {3 * sigma:.4f}), "
           f"chi-square {chi2:.1f} < {threshold:.1f} at alpha=0.01")
    assert ok


# -------------------------------------------------------------------------
# criterion 9: parser conformance
# -------------------------------------------------------------------------

def test_criterion_09_parser_conformance():
    n_checked = 0
    for _, text, (labels, n_features, n_classes) in parser_fixtures.VALID_FIXTURES:
        ds = dio.parse_libsvm(text)
        assert ds.labels == labels and ds.n_features == n_features
        again = dio.parse_libsvm(dio.serialize_libsvm(ds))
        assert again == ds
        n_checked += 1
    for _, text, line, column, fragment in parser_fixtures.MALFORMED_FIXTURES:
        with pytest.raises(dio.ParseError) as err:
            dio.parse_libsvm(text)
        assert err.value.line == line and err.value.column == column
        assert fragment in str(err.value)
        n_checked += 1
    ok = n_checked >= 12
    report(9, "parser conformance", ok,
           f"{n_checked} golden fixtures with exact error positions; "
           "round-trip serialization identity holds")
    assert ok


# -------------------------------------------------------------------------
# criterion 10: projected categorical sampling
# -------------------------------------------------------------------------

def test_criterion_10_projected_categorical():
    n = 100_000
    p = 0.37
    bern = dio.sample_projected_categorical([p], n=n, seed=100)
    bern_gap = abs(float(bern.mean()) - p)
    bern_bound = 5 * math.sqrt(p * (1 - p) / n)

    p_tilde = np.array([0.5, 0.2, 0.1])
    samples = dio.sample_projected_categorical(p_tilde, n=n, seed=101).astype(float)
    emp_cov = np.cov(samples.T, bias=True)
    expected = np.diag(p_tilde) - np.outer(p_tilde, p_tilde)
    bound = 5 * np.sqrt((np.outer(p_tilde, p_tilde) + np.diag(p_tilde)) / n)
    cov_ok = bool(np.all(np.abs(emp_cov - expected) < bound))

    ok = bern_gap < bern_bound and cov_ok
    report(10, "projected categorical", ok,
           f"Bernoulli reduction gap {bern_gap:.2e} (5-sigma {bern_bound:.2e}), "
           f"covariance identity within 5 sigma elementwise: {cov_ok}")
    assert ok
