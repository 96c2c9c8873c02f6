"""Property suite behind ``lapembed check``.

Each check draws random instances, compares the vectorized weight /
Laplacian path against the loop oracles and returns a :class:`CheckResult`.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import laplacian, oracles
from .linalg import pairwise_sq_dist
from .net import init_params, joint_backward, joint_objective
from .weights import CONTRASTIVE, TRIPLET, LossConfig, batch_weights, contrastive_weights, triplet_weights

IDENTITY_TOL = 1e-9
EQUIV_TOL = 1e-9
ROWSUM_TOL = 1e-12
TRANSLATION_TOL = 1e-9
GRAD_TOL = 1e-5
JOINT_GRAD_TOL = 1e-4
FD_EPS = 1e-6
MIN_MARGIN = 1e-3


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tol: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<26} value={self.value:.3e}  tol={self.tol:.0e}  {self.detail}".rstrip()


def unit_ball(rng, d, n):
    """``n`` points drawn uniformly from the d-dimensional unit ball, as columns."""
    x = rng.normal(size=(d, n))
    x /= np.linalg.norm(x, axis=0)
    return x * rng.uniform(size=n) ** (1.0 / d)


def random_batch(rng, n_range=(2, 12), d_range=(2, 8), id_range=(1, 4)):
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    d = int(rng.integers(d_range[0], d_range[1] + 1))
    k = int(rng.integers(id_range[0], id_range[1] + 1))
    return unit_ball(rng, d, n), rng.integers(0, k, size=n)


def margin_safe_batch(rng, cfg, **kw):
    """Random batch whose hinge arguments all stay at least MIN_MARGIN from zero."""
    while True:
        H, labels = random_batch(rng, **kw)
        d2 = oracles.sq_dist_loops(H)
        if oracles.min_hinge_margin(d2, labels, cfg.alpha, cfg.tau) >= MIN_MARGIN:
            return H, labels


def pipeline_loss(H, labels, cfg, parts=(TRIPLET, CONTRASTIVE)):
    """Metric loss with the weights rebuilt from ``H``, as a finite-difference target."""
    s = batch_weights(pairwise_sq_dist(H), labels, cfg, parts=parts)
    return laplacian.loss(H, laplacian.build_laplacian(s))


def check_laplacian_identity(rng, trials=200):
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 17))
        d = int(rng.integers(1, 9))
        H = rng.normal(size=(d, n))
        s = rng.normal(size=(n, n))
        np.fill_diagonal(s, 0.0)
        direct = oracles.weighted_sq_dist_sum(H, s)
        trace = laplacian.loss(H, laplacian.build_laplacian(s))
        worst = max(worst, abs(direct - trace) / (1.0 + abs(direct)))
    return CheckResult("laplacian_identity", worst < IDENTITY_TOL, worst, IDENTITY_TOL, f"{trials} instances")


def _equivalence(rng, trials, which, cfg, _fault=False):
    worst = 0.0
    for _ in range(trials):
        H, labels = random_batch(rng)
        d2 = pairwise_sq_dist(H)
        consts = oracles.hinge_constants(oracles.sq_dist_loops(H), labels, cfg.alpha, cfg.tau)
        if which == CONTRASTIVE:
            naive = oracles.naive_batch_contrastive(H, labels, cfg.alpha)
            s = contrastive_weights(d2, labels, cfg.alpha).s
            const = consts.contrastive_constant
        elif which == TRIPLET:
            naive = oracles.naive_batch_triplet(H, labels, cfg.tau)
            s = triplet_weights(d2, labels, cfg.tau, _fault=_fault).s
            const = consts.triplet_constant
        else:
            naive = oracles.naive_batch_triplet(H, labels, cfg.tau) + cfg.beta * oracles.naive_batch_contrastive(
                H, labels, cfg.alpha
            )
            s = (
                triplet_weights(d2, labels, cfg.tau, _fault=_fault).s
                + cfg.beta * contrastive_weights(d2, labels, cfg.alpha).s
            )
            const = consts.triplet_constant + cfg.beta * consts.contrastive_constant
        report = oracles.EquivalenceReport(naive, laplacian.loss(H, laplacian.build_laplacian(s)), const, 0)
        worst = max(worst, report.residual)
    return worst


def check_equivalences(rng, trials=200, cfg=None, _fault=False):
    cfg = cfg or LossConfig(normalize_rows=False)
    out = []
    for which, name in ((CONTRASTIVE, "contrastive_equivalence"), (TRIPLET, "triplet_equivalence"), ("both", "combined_equivalence")):
        worst = _equivalence(rng, trials, which, cfg, _fault=_fault)
        out.append(CheckResult(name, worst < EQUIV_TOL, worst, EQUIV_TOL, f"{trials} batches"))
    return out


def coincident_batch(identities=3, per_identity=2, d=2):
    labels = np.repeat(np.arange(identities), per_identity)
    return np.zeros((d, len(labels))), labels


def check_triplet_count(cfg=None, _fault=False):
    """Three identities with two coincident samples each must give 24 active triplets."""
    cfg = cfg or LossConfig()
    H, labels = coincident_batch()
    d2 = pairwise_sq_dist(H)
    count = oracles.count_active_triplets(d2, labels, cfg.tau)
    fast = int(triplet_weights(d2, labels, cfg.tau, _fault=_fault).s.clip(min=0).sum())
    ok = count == 24 and fast == 24
    return CheckResult("triplet_count", ok, float(count), 0.0, f"oracle={count} weights={fast} expected=24")


def check_laplacian_structure(rng, trials=200, cfg=None):
    cfg = cfg or LossConfig()
    asym = rowsum = shift = 0.0
    for _ in range(trials):
        H, labels = random_batch(rng)
        s = batch_weights(pairwise_sq_dist(H), labels, cfg)
        psi = laplacian.build_laplacian(s)
        asym = max(asym, float(np.max(np.abs(psi - psi.T))))
        rowsum = max(rowsum, float(np.max(np.abs(psi.sum(axis=1)))))
        moved = H + rng.normal(size=(H.shape[0], 1))
        dl = abs(laplacian.loss(H, psi) - laplacian.loss(moved, psi))
        dg = float(np.max(np.abs(laplacian.grad(H, psi) - laplacian.grad(moved, psi))))
        shift = max(shift, dl, dg)
    return [
        CheckResult("laplacian_symmetry", asym == 0.0, asym, 0.0, "max |Psi - Psi^T|"),
        CheckResult("laplacian_row_sums", rowsum < ROWSUM_TOL, rowsum, ROWSUM_TOL),
        CheckResult("translation_invariance", shift < TRANSLATION_TOL, shift, TRANSLATION_TOL),
    ]


def check_feature_gradient(rng, trials=50, cfg=None):
    """Analytic ``4 H Psi`` vs central differences of the full normalized pipeline."""
    cfg = cfg or LossConfig(normalize_rows=True)
    worst = 0.0
    for _ in range(trials):
        H, labels = margin_safe_batch(rng, cfg)
        psi = laplacian.build_laplacian(batch_weights(pairwise_sq_dist(H), labels, cfg))
        numeric = oracles.finite_diff_grad(lambda h: pipeline_loss(h, labels, cfg), H, FD_EPS)
        worst = max(worst, oracles.max_relative_error(laplacian.grad(H, psi), numeric))
    return CheckResult("feature_gradient", worst < GRAD_TOL, worst, GRAD_TOL, f"{trials} batches, eps={FD_EPS:g}")


def joint_instance(rng, cfg, n_classes=3, per_class=2, d_in=5, hidden=6, embed_dim=4):
    """Small 2-layer net and batch with hinge and ReLU arguments away from their kinks."""
    labels = np.repeat(np.arange(n_classes), per_class)
    while True:
        params = init_params([d_in, hidden, embed_dim], n_classes, rng)
        for b in params.biases + [params.head_b]:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        X = rng.normal(size=(d_in, len(labels)))
        _, parts, cache, _ = joint_objective(params, X, labels, cfg)
        d2 = oracles.sq_dist_loops(cache.H)
        if (
            oracles.min_hinge_margin(d2, labels, cfg.alpha, cfg.tau) >= MIN_MARGIN
            and np.min(np.abs(cache.pre[0])) >= 1e-4
        ):
            return params, X, labels


def joint_param_gradient_error(params, X, labels, cfg, mode="joint"):
    grads, _ = joint_backward(params, X, labels, cfg, mode)
    probe = params.copy()
    analytic, numerics = [], []
    for arr, g in zip(probe.arrays(), grads):
        numeric = np.zeros_like(arr)
        for idx in np.ndindex(*arr.shape):
            old = arr[idx]
            arr[idx] = old + FD_EPS
            up = joint_objective(probe, X, labels, cfg, mode)[0]
            arr[idx] = old - FD_EPS
            down = joint_objective(probe, X, labels, cfg, mode)[0]
            arr[idx] = old
            numeric[idx] = (up - down) / (2 * FD_EPS)
        analytic.append(g.ravel())
        numerics.append(numeric.ravel())
    # scaled over the whole parameter vector; a head that gets no gradient would blow up a per-array ratio
    return oracles.max_relative_error(np.concatenate(analytic), np.concatenate(numerics))


def check_joint_gradient(rng, trials=5, cfg=None):
    worst = 0.0
    for lam in (0.0, 0.6):
        c = replace(cfg, lam=lam) if cfg else LossConfig(lam=lam)
        for _ in range(trials):
            params, X, labels = joint_instance(rng, c)
            worst = max(worst, joint_param_gradient_error(params, X, labels, c))
    return CheckResult("joint_gradient", worst < JOINT_GRAD_TOL, worst, JOINT_GRAD_TOL, "2-layer net, lambda in (0, 0.6)")


def run_all(seed=0, _fault=False):
    rng = np.random.default_rng(seed)
    results = [check_laplacian_identity(rng)]
    results += check_equivalences(rng, _fault=_fault)
    results.append(check_triplet_count(_fault=_fault))
    results += check_laplacian_structure(rng)
    results.append(check_feature_gradient(rng))
    results.append(check_joint_gradient(rng))
    return results
