"""Instrumented benchmark harness.

Runs seeded registrations across cloud sizes and feature modes, emitting
one CSV row per repetition with per-stage wall-clock and op counts. The
op counters are deterministic; wall-clock comparisons always use the
median over repetitions with one discarded warm-up run.

Stage columns do not sum to t_total_ms: the remainder covers normal
estimation, distance-matrix and similarity construction, correspondence
extraction, and transform bookkeeping. t_sinkhorn_ms is strictly the
normalization passes.
"""

from __future__ import annotations

import statistics
import time
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np

from .descriptors import estimate_normals
from .geometry import PointCloud
from .io_synth import SynthConfig, make_base_shape, synth_pair
from .network import CascadeWeights, flop_estimate, init_random
from .pipeline import RegistrationConfig, RegistrationResult, register

CSV_HEADER = (
    "mode,N,K,L,D,rep,seed,t_knn_ms,t_feat_ms,t_sinkhorn_ms,"
    "t_procrustes_ms,t_total_ms,ops_feat,ops_sinkhorn"
)


@dataclass(frozen=True)
class BenchRecord:
    mode: str
    n: int
    k: int
    l_iters: int
    d: int
    rep: int
    seed: int
    t_knn_ms: float
    t_feat_ms: float
    t_sinkhorn_ms: float
    t_procrustes_ms: float
    t_total_ms: float
    ops_feat: int
    ops_sinkhorn: int

    def csv_row(self) -> str:
        return (
            f"{self.mode},{self.n},{self.k},{self.l_iters},{self.d},"
            f"{self.rep},{self.seed},{self.t_knn_ms:.3f},{self.t_feat_ms:.3f},"
            f"{self.t_sinkhorn_ms:.3f},{self.t_procrustes_ms:.3f},"
            f"{self.t_total_ms:.3f},{self.ops_feat},{self.ops_sinkhorn}"
        )


def _thread_limit(threads: int):
    """Pin BLAS pools to `threads` (0 keeps the ambient setting)."""
    if threads <= 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def _record(result: RegistrationResult, cfg: RegistrationConfig,
            n: int, rep: int, seed: int) -> BenchRecord:
    its = result.iterations
    return BenchRecord(
        mode=cfg.mode,
        n=n,
        k=cfg.k,
        l_iters=cfg.l_iters,
        d=cfg.d,
        rep=rep,
        seed=seed,
        t_knn_ms=sum(i.t_knn_ms for i in its),
        t_feat_ms=sum(i.t_feat_ms for i in its),
        t_sinkhorn_ms=sum(i.t_sinkhorn_ms for i in its),
        t_procrustes_ms=sum(i.t_procrustes_ms for i in its),
        t_total_ms=result.t_total_ms,
        ops_feat=result.ops_feat,
        ops_sinkhorn=result.ops_sinkhorn,
    )


def bench_pair(n: int, seed: int) -> tuple[PointCloud, PointCloud]:
    """Deterministic full-overlap benchmark pair of size n, normals attached.

    Normals are estimated here, once, so repetitions time the registration
    itself rather than re-running normal estimation in setup.
    """
    base = make_base_shape("helix", n, seed=seed)
    src, ref, _ = synth_pair(
        SynthConfig(n_points=n, keep_fraction=1.0, noise_sigma=0.0, seed=seed), base
    )
    return estimate_normals(src), estimate_normals(ref)


def run_bench(
    sizes: list[int],
    modes: list[str],
    repeat: int,
    seed: int = 0,
    k: int = 64,
    l_iters: int = 5,
    d: int = 96,
    threads: int = 0,
    weights: CascadeWeights | None = None,
) -> list[BenchRecord]:
    """One warmed-up, instrumented registration per (size, mode, rep)."""
    if repeat < 1:
        raise ValueError(f"repeat must be >= 1, got {repeat}")
    if weights is None:
        weights = init_random(seed, l_iters, d=d)
    records = []
    with _thread_limit(threads):
        for n in sizes:
            src, ref = bench_pair(n, seed)
            for mode in modes:
                cfg = RegistrationConfig(
                    mode=mode, l_iters=l_iters, k=k, d=d, seed=seed
                )
                w = None if mode == "handcrafted" else weights
                register(src, ref, cfg, w)  # warm-up, discarded
                for rep in range(repeat):
                    result = register(src, ref, cfg, w)
                    records.append(_record(result, cfg, n, rep, seed))
    return records


def summarize(records: list[BenchRecord]) -> list[str]:
    """Comment lines comparing measured medians against the analytic counts."""
    lines = ["# summary"]
    sizes = sorted({r.n for r in records})
    modes = sorted({r.mode for r in records})
    for n in sizes:
        per = {
            m: [r for r in records if r.n == n and r.mode == m] for m in modes
        }
        for m in modes:
            if per[m]:
                med = statistics.median(r.t_total_ms for r in per[m])
                lines.append(
                    f"# N={n} {m}: median t_total {med:.3f} ms, "
                    f"ops_feat {per[m][0].ops_feat}"
                )
        if per.get("baseline") and per.get("cascade"):
            b = per["baseline"][0]
            c = per["cascade"][0]
            t_ratio = statistics.median(
                r.t_total_ms for r in per["baseline"]
            ) / statistics.median(r.t_total_ms for r in per["cascade"])
            op_ratio = b.ops_feat / c.ops_feat
            w = init_random(b.seed, b.l_iters, d=b.d)
            analytic = (
                flop_estimate(w, n, b.k, b.l_iters, "baseline").total
                / flop_estimate(w, n, c.k, c.l_iters, "cascade").total
            )
            lines.append(
                f"# N={n} baseline/cascade: time x{t_ratio:.2f}, "
                f"ops_feat x{op_ratio:.4f}, analytic x{analytic:.4f}"
            )
    return lines


# ------------------------------------------------------------- self test

def _suite_fold_equivalence() -> bool:
    from .network import fold_cascade

    rng = np.random.default_rng(7)
    for _ in range(20):
        c = rng.normal(size=(96, 99))
        d = rng.normal(size=(96, 96))
        a_prime, b = fold_cascade(c, d)
        u = rng.uniform(0, 1, size=(50, 96))
        x = rng.normal(size=(50, 3))
        folded = u @ a_prime.T + x @ b.T
        deep = np.concatenate([u @ d.T, x], axis=1) @ c.T
        if np.abs(folded - deep).max() >= 1e-9:
            return False
    return True


def _suite_sinkhorn_equivalence() -> bool:
    from .matching import CorrespondenceMatrix, sinkhorn_log, sinkhorn_standard

    rng = np.random.default_rng(11)
    for _ in range(20):
        logits = rng.uniform(-6, 6, size=(32, 32))
        direct = sinkhorn_standard(
            CorrespondenceMatrix(values=np.exp(logits), slack=False), 20
        )
        logged = sinkhorn_log(logits, 20)
        rel = np.abs(direct.values - logged.values) / np.abs(direct.values)
        if rel.max() >= 1e-5:
            return False
    return True


def _suite_procrustes_recovery() -> bool:
    from .alignment import weighted_procrustes
    from .geometry import sample_random_transform

    rng = np.random.default_rng(13)
    for trial in range(50):
        pts = rng.normal(size=(12, 3))
        t_gt = sample_random_transform(180.0, 1.0, seed=1000 + trial)
        targets = pts @ t_gt.rotation.T + t_gt.translation
        est = weighted_procrustes(
            PointCloud(points=pts), PointCloud(points=targets), np.ones(12)
        )
        if (
            np.abs(est.rotation - t_gt.rotation).max() >= 1e-9
            or np.abs(est.translation - t_gt.translation).max() >= 1e-9
        ):
            return False
    return True


SELFTEST_SUITES = (
    ("fold-equivalence", _suite_fold_equivalence),
    ("sinkhorn-equivalence", _suite_sinkhorn_equivalence),
    ("procrustes-recovery", _suite_procrustes_recovery),
)


def run_selftest(out=print) -> bool:
    """Run the three hot-spot suites; prints one pass/fail line per suite."""
    all_ok = True
    for name, suite in SELFTEST_SUITES:
        t0 = time.perf_counter()
        ok = bool(suite())
        dt = (time.perf_counter() - t0) * 1e3
        out(f"{name}: {'PASS' if ok else 'FAIL'} ({dt:.0f} ms)")
        all_ok = all_ok and ok
    return all_ok
