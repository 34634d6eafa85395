"""Data ingestion and problem builders.

LIBSVM sparse text parsing, the distributionally-robust logistic instance
over the simplex, and synthetic quadratic saddle fixtures with closed forms
(used as oracles throughout the test suite).
"""

import gzip
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import prox
from .errors import ConfigurationError
from .problem import (ConvexityModuli, FiniteSumSpec, NoiseLevels, ProblemSpec,
                      SmoothnessConstants)


@dataclass
class SparseDataset:
    """CSR-ish sparse rows with +-1 labels (file indices are 1-based, memory 0-based)."""

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    n_samples: int
    n_features: int

    def row(self, i):
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.values[lo:hi]

    def dense(self):
        a = np.zeros((self.n_samples, self.n_features))
        for i in range(self.n_samples):
            idx, val = self.row(i)
            a[i, idx] = val
        return a


def _parse_label(tok, lineno):
    try:
        val = float(tok)
    except ValueError:
        raise ConfigurationError(f"line {lineno}: non-numeric label {tok!r}") from None
    if val in (1.0, +1.0):
        return 1
    if val in (-1.0, 0.0):
        return -1
    raise ConfigurationError(f"line {lineno}: label {tok!r} not in {{-1,0,+1}}")


def parse_libsvm(source, n_features: Optional[int] = None) -> SparseDataset:
    """Parse LIBSVM text ("label idx:val idx:val ...", 1-based indices).

    source may be a path (gzip accepted by .gz extension), a text stream, or
    a string of the format itself.  Labels {0,1} map to {-1,+1}.  Malformed
    lines raise with their line number; indices must strictly increase
    within a row.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        s = str(source)
        if "\n" in s or ":" in s:
            text = s
        elif s.endswith(".gz"):
            with gzip.open(s, "rt") as f:
                text = f.read()
        else:
            with open(s, "rt") as f:
                text = f.read()

    indptr = [0]
    indices, values, labels = [], [], []
    max_idx = -1
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        labels.append(_parse_label(toks[0], lineno))
        prev = -1
        for tok in toks[1:]:
            try:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s) - 1
                val = float(val_s)
            except ValueError:
                raise ConfigurationError(
                    f"line {lineno}: malformed feature token {tok!r}"
                ) from None
            if idx < 0:
                raise ConfigurationError(f"line {lineno}: index must be >= 1")
            if idx <= prev:
                raise ConfigurationError(
                    f"line {lineno}: non-increasing index {idx + 1}"
                )
            prev = idx
            indices.append(idx)
            values.append(val)
            max_idx = max(max_idx, idx)
        indptr.append(len(indices))
    if not labels:
        raise ConfigurationError("empty dataset")
    d = max_idx + 1 if n_features is None else n_features
    if d < max_idx + 1:
        raise ConfigurationError("n_features below the largest index present")
    return SparseDataset(
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.asarray(indices, dtype=np.int64),
        values=np.asarray(values, dtype=float),
        labels=np.asarray(labels, dtype=np.int64),
        n_samples=len(labels),
        n_features=d,
    )


def serialize_libsvm(ds: SparseDataset) -> str:
    lines = []
    for i in range(ds.n_samples):
        idx, val = ds.row(i)
        feats = " ".join(f"{j + 1}:{v:.17g}" for j, v in zip(idx, val))
        lines.append(f"{'+1' if ds.labels[i] > 0 else '-1'} {feats}".rstrip())
    return "\n".join(lines) + "\n"


def synthetic_logistic_dataset(n: int, d: int, rng, normalize=True) -> SparseDataset:
    """Dense synthetic binary-classification rows stored sparsely.

    Features are standard normal (row-normalized to unit norm by default);
    labels come from a random ground-truth logistic model.
    """
    a = rng.standard_normal((n, d))
    if normalize:
        a /= np.linalg.norm(a, axis=1, keepdims=True)
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    probs = 1.0 / (1.0 + np.exp(-3.0 * (a @ w)))
    labels = np.where(rng.random(n) < probs, 1, -1)
    indptr = np.arange(0, n * d + 1, d, dtype=np.int64)
    indices = np.tile(np.arange(d, dtype=np.int64), n)
    return SparseDataset(indptr=indptr, indices=indices, values=a.ravel().copy(),
                         labels=labels, n_samples=n, n_features=d)


def _sigmoid_neg(z):
    """sigmoid(-z) = 1/(1+e^z), overflow-safe for any z."""
    return 0.5 * (1.0 - np.tanh(0.5 * z))


def _pairwise_mean(rows):
    """Tree-reduction mean over the row dimension: reproducible accuracy for
    large batches."""
    count = rows.shape[0]
    m = count
    while m > 1:
        half = m // 2
        rows[:half] = rows[:half] + rows[half: 2 * half]
        if m % 2:
            rows[half] = rows[2 * half]
            half += 1
        m = half
        rows = rows[:m]
    return rows[0] / count


@dataclass
class DroInstance:
    """Robust logistic regression over the simplex.

    min_x max_{y in simplex}  (1/n) sum_i y_i * log(1+exp(-b_i a_i' x))
                              + eta1 * sum_j alpha x_j^2/(1+alpha x_j^2)
                              - (eta2/2) ||n y - 1||^2

    The smooth nonconvex regularizer is folded into the coupling (so
    prox_f is the identity); the dual quadratic plus the simplex constraint
    form prox_g.  dual dimension = n_samples.
    """

    dataset: SparseDataset
    alpha: float
    eta1: float
    eta2: float
    problem: ProblemSpec = field(repr=False)
    finite_sum: FiniteSumSpec = field(repr=False)
    features: np.ndarray = field(repr=False)

    def losses(self, x):
        z = self.dataset.labels * (self.features @ x)
        return np.logaddexp(0.0, -z)

    def loss_gradients(self, x):
        """Rows are grad of log(1+exp(-b_i a_i' x))."""
        z = self.dataset.labels * (self.features @ x)
        sig = _sigmoid_neg(z)
        return -(self.dataset.labels * sig)[:, None] * self.features

    def regularizer(self, x):
        ax2 = self.alpha * x**2
        return self.eta1 * float(np.sum(ax2 / (1.0 + ax2)))

    def regularizer_grad(self, x):
        ax2 = self.alpha * x**2
        return self.eta1 * 2.0 * self.alpha * x / (1.0 + ax2) ** 2

    def g_value(self, y):
        n = self.dataset.n_samples
        return 0.5 * self.eta2 * float(np.sum((n * y - 1.0) ** 2))

    def lagrangian(self, x, y):
        n = self.dataset.n_samples
        return (float(y @ self.losses(x)) / n + self.regularizer(x)
                - self.g_value(y))

    def best_response_y(self, x, steps: int = 50):
        """Approximate argmax_y of the dual via prox-gradient ascent."""
        n = self.dataset.n_samples
        losses = self.losses(x)
        y = np.full(n, 1.0 / n)
        step = 1.0 / (self.eta2 * n**2)
        for _ in range(steps):
            y = prox.prox_quadratic_over_simplex(y + step * losses / n, step,
                                                 self.eta2, n)
        return y

    def robust_loss(self, x, steps: int = 50):
        """Primal robust loss at x with the dual solved approximately."""
        return self.lagrangian(x, self.best_response_y(x, steps))


def build_dro(ds: SparseDataset, alpha: float = 10.0, eta1: float = 1e-3,
              eta2: Optional[float] = None, sgrad_batch: int = 1) -> DroInstance:
    """Assemble robust-logistic oracles and conservative analytic constants.

    Constants: the coupling (1/n) sum y_i l_i(x) has deterministic bounds
    l_xx <= max_i ||a_i||^2/4 (weights sum to 1, 1/n folded in) and
    l_yx = l_xy <= (1/n) sqrt(sum_i ||a_i||^2); the per-component
    almost-sure bounds replace those with max_i||a_i||^2/4 and max_i||a_i||.
    The folded regularizer contributes curvature at most 2*eta1*alpha, which
    is also the weak-convexity modulus gamma.  mu_y = eta2*n^2 via g.
    """
    if ds.n_samples < 1 or ds.n_features < 1:
        raise ConfigurationError("dataset must have samples and features")
    n = ds.n_samples
    eta2 = 1.0 / n**2 if eta2 is None else eta2
    inst_holder = {}

    row_norms_sq = np.array([float(np.sum(ds.row(i)[1] ** 2)) for i in range(n)])
    max_norm = math.sqrt(row_norms_sq.max())
    reg_curv = 2.0 * eta1 * alpha
    gamma = reg_curv
    mu_y = eta2 * n**2
    coupling_det = math.sqrt(row_norms_sq.sum()) / n
    det_constants = SmoothnessConstants(
        l_xx=row_norms_sq.max() / 4.0 + reg_curv,
        l_xy=coupling_det, l_yx=coupling_det, l_yy=0.0,
    )
    as_constants = SmoothnessConstants(
        l_xx=row_norms_sq.max() / 4.0 + reg_curv,
        l_xy=max_norm, l_yx=max_norm, l_yy=0.0,
    )

    def grad_x(x, y):
        inst = inst_holder["inst"]
        return inst.loss_gradients(x).T @ y / n + inst.regularizer_grad(x)

    def grad_y(x, y):
        return inst_holder["inst"].losses(x) / n

    def batch_grad_x(idx, x, y):
        # mean over components Phi_i = y_i * l_i(x) + reg(x)
        inst = inst_holder["inst"]
        idx = np.asarray(idx)
        a = inst.features[idx]
        z = ds.labels[idx] * (a @ x)
        sig = _sigmoid_neg(z)
        rows = -(y[idx] * ds.labels[idx] * sig)[:, None] * a
        return _pairwise_mean(rows.copy()) + inst.regularizer_grad(x)

    def batch_grad_y(idx, x, y):
        inst = inst_holder["inst"]
        idx = np.asarray(idx)
        a = inst.features[idx]
        z = ds.labels[idx] * (a @ x)
        out = np.zeros(n)
        np.add.at(out, idx, np.logaddexp(0.0, -z))
        return out / idx.size

    fs = FiniteSumSpec(n_comp=n, batch_grad_x=batch_grad_x,
                       batch_grad_y=batch_grad_y, as_smoothness=as_constants)

    def sgrad_x(x, y, rng):
        return batch_grad_x(fs.sample(rng, sgrad_batch), x, y)

    def sgrad_y(x, y, rng):
        return batch_grad_y(fs.sample(rng, sgrad_batch), x, y)

    def value(x, y):
        return inst_holder["inst"].lagrangian(x, y) + inst_holder["inst"].g_value(y)

    problem = ProblemSpec(
        n=ds.n_features, m=n,
        grad_x=grad_x, grad_y=grad_y,
        prox_f=prox.prox_zero,
        prox_g=lambda v, step: prox.prox_quadratic_over_simplex(v, step, eta2, n),
        smoothness=det_constants,
        convexity=ConvexityModuli(gamma=gamma, mu_y=mu_y),
        noise=NoiseLevels(0.0, 0.0),
        sgrad_x=sgrad_x, sgrad_y=sgrad_y,
        value=value, d_y=math.sqrt(2.0),
        oracle_batch=sgrad_batch,
    )
    inst = DroInstance(dataset=ds, alpha=alpha, eta1=eta1, eta2=eta2,
                       problem=problem, finite_sum=fs, features=ds.dense())
    inst_holder["inst"] = inst
    return inst


@dataclass
class QuadraticSaddle:
    """Phi(x,y) = x'Ax/2 + x'By - mu_y ||y||^2/2 with lambda_min(A) = -gamma.

    Exposes the closed forms every oracle test needs: the primal function
    phi(x) = x'(A + BB'/mu_y)x/2, its Moreau prox, the saddle of any
    quadratically shifted subproblem, and the stage gap.
    """

    a: np.ndarray
    b: np.ndarray
    gamma: float
    mu_y: float
    problem: ProblemSpec = field(repr=False)

    @property
    def h(self):
        return self.a + self.b @ self.b.T / self.mu_y

    def phi(self, x):
        return 0.5 * float(x @ self.h @ x)

    def grad_phi(self, x):
        return self.h @ x

    def moreau_prox(self, x, lam):
        if not (0 < lam < 1.0 / self.gamma):
            raise ConfigurationError("lambda must lie in (0, 1/gamma)")
        n = self.a.shape[0]
        return np.linalg.solve(np.eye(n) + lam * self.h, x)

    def moreau_grad(self, x, lam):
        return (x - self.moreau_prox(x, lam)) / lam

    def moreau_value(self, x, lam):
        w = self.moreau_prox(x, lam)
        return self.phi(w) + float(np.sum((w - x) ** 2)) / (2 * lam)

    def value(self, x, y):
        return (0.5 * float(x @ self.a @ x) + float(x @ self.b @ y)
                - 0.5 * self.mu_y * float(y @ y))

    def shifted_value(self, x, y, center, mu_x):
        return self.value(x, y) + 0.5 * (mu_x + self.gamma) * float(
            np.sum((x - center) ** 2))

    def best_response_y(self, x):
        return self.b.T @ x / self.mu_y

    def best_response_x(self, y, center, mu_x):
        coef = mu_x + self.gamma
        n = self.a.shape[0]
        return np.linalg.solve(self.a + coef * np.eye(n), coef * center - self.b @ y)

    def shifted_saddle(self, center, mu_x):
        """Unique saddle of the mu_x-shifted subproblem; x* = prox_{lam phi}(center)."""
        coef = mu_x + self.gamma
        n = self.a.shape[0]
        x_star = np.linalg.solve(self.a + coef * np.eye(n) + self.b @ self.b.T / self.mu_y,
                                 coef * center)
        return x_star, self.best_response_y(x_star)

    def stage_gap(self, x, y, center, mu_x):
        """Exact max-min gap of the shifted subproblem via the best responses."""
        up = self.shifted_value(x, self.best_response_y(x), center, mu_x)
        lo = self.shifted_value(self.best_response_x(y, center, mu_x), y, center, mu_x)
        return up - lo


def make_scsc_quadratic(a, b, mu_y: float, gamma: float = 1.0) -> QuadraticSaddle:
    """Wrap explicit (A, B, mu_y) as a quadratic instance; A need not be indefinite."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n, m = a.shape[0], b.shape[1]
    constants = SmoothnessConstants(
        l_xx=max(float(np.max(np.abs(np.linalg.eigvalsh(a)))), 1e-12),
        l_xy=float(np.linalg.norm(b, 2)), l_yx=float(np.linalg.norm(b, 2)),
        l_yy=mu_y,
    )
    problem = ProblemSpec(
        n=n, m=m,
        grad_x=lambda x, y: a @ x + b @ y,
        grad_y=lambda x, y: b.T @ x - mu_y * y,
        prox_f=prox.prox_zero, prox_g=prox.prox_zero,
        smoothness=constants,
        convexity=ConvexityModuli(gamma=gamma, mu_y=mu_y),
        value=lambda x, y: (0.5 * float(x @ a @ x) + float(x @ b @ y)
                            - 0.5 * mu_y * float(y @ y)),
    )
    return QuadraticSaddle(a=a, b=b, gamma=gamma, mu_y=mu_y, problem=problem)


def make_quadratic_saddle(n: int, m: int, gamma: float, mu_y: float, rng,
                          coupling: float = 1.0, h_min: Optional[float] = None
                          ) -> QuadraticSaddle:
    """Random instance with lambda_min(A) = -gamma exactly and phi convex.

    A = Q diag(eigs) Q' with one eigenvalue pinned at -gamma; B covers the
    negative eigendirection strongly enough that H = A + BB'/mu_y has
    smallest eigenvalue h_min (default gamma/4), so phi is bounded below
    with its minimizer at the origin.
    """
    if gamma <= 0 or mu_y <= 0:
        raise ConfigurationError("gamma, mu_y must be positive")
    if m < 1 or n < 1:
        raise ConfigurationError("dimensions must be positive")
    h_min = gamma / 4.0 if h_min is None else h_min
    q_mat, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = np.concatenate([[-gamma], rng.uniform(0.2 * gamma, 2.0 * gamma, n - 1)])
    a = (q_mat * eigs) @ q_mat.T
    a = 0.5 * (a + a.T)

    u_mat, _ = np.linalg.qr(rng.standard_normal((m, m)))
    svals = np.zeros(min(n, m))
    svals[0] = math.sqrt(mu_y * (gamma + h_min))
    if svals.size > 1:
        svals[1:] = coupling * rng.uniform(0.1, 1.0, svals.size - 1)
    b = q_mat[:, : svals.size] @ (svals[:, None] * u_mat[: svals.size, :])

    l_xx = float(np.max(np.abs(eigs)))
    l_coupling = float(np.max(svals))
    constants = SmoothnessConstants(l_xx=l_xx, l_xy=l_coupling,
                                    l_yx=l_coupling, l_yy=mu_y)

    def grad_x(x, y):
        return a @ x + b @ y

    def grad_y(x, y):
        return b.T @ x - mu_y * y

    problem = ProblemSpec(
        n=n, m=m, grad_x=grad_x, grad_y=grad_y,
        prox_f=prox.prox_zero, prox_g=prox.prox_zero,
        smoothness=constants,
        convexity=ConvexityModuli(gamma=gamma, mu_y=mu_y),
        value=lambda x, y: (0.5 * float(x @ a @ x) + float(x @ b @ y)
                            - 0.5 * mu_y * float(y @ y)),
    )
    return QuadraticSaddle(a=a, b=b, gamma=gamma, mu_y=mu_y, problem=problem)


@dataclass
class BilinearBoxToy:
    """Phi(x,y) = c*x*y on y in [-1, 1]: the merely-concave test problem.

    phi(x) = |c x| and prox_{lam phi} is soft thresholding, so the smoothing
    path has an exact reference.
    """

    c: float
    gamma: float
    problem: ProblemSpec = field(repr=False)

    def phi(self, x):
        return abs(self.c * float(x[0]))

    def moreau_prox(self, x, lam):
        v = float(x[0])
        t = lam * abs(self.c)
        return np.array([math.copysign(max(abs(v) - t, 0.0), v)])

    def moreau_grad_norm(self, x, lam):
        return abs(float(x[0]) - float(self.moreau_prox(x, lam)[0])) / lam


def make_bilinear_box_toy(c: float = 1.0, gamma: float = 1.0) -> BilinearBoxToy:
    problem = ProblemSpec(
        n=1, m=1,
        grad_x=lambda x, y: c * y,
        grad_y=lambda x, y: c * x,
        prox_f=prox.prox_zero,
        prox_g=lambda v, step: np.clip(v, -1.0, 1.0),
        smoothness=SmoothnessConstants(l_xx=0.0, l_xy=abs(c), l_yx=abs(c), l_yy=0.0),
        convexity=ConvexityModuli(gamma=gamma, mu_y=0.0),
        value=lambda x, y: c * float(x[0]) * float(y[0]),
        d_y=2.0,
    )
    return BilinearBoxToy(c=c, gamma=gamma, problem=problem)


@dataclass
class QuadraticFiniteSum:
    """Finite sum of quadratic components around a quadratic saddle base.

    Component i has gradients
        grad_x Phi_i = (A + E_i) x + (B + F_i) y + c_i
        grad_y Phi_i = (B + F_i)' x - mu_y y + d_i
    with the perturbations summing to zero, so the mean recovers the base.
    Single-draw variances are exact quadratics of the evaluation point.
    """

    base: QuadraticSaddle
    e: np.ndarray  # (n_comp, n, n)
    f: np.ndarray  # (n_comp, n, m)
    c: np.ndarray  # (n_comp, n)
    d: np.ndarray  # (n_comp, m)
    spec: FiniteSumSpec = field(repr=False)

    @property
    def n_comp(self):
        return self.e.shape[0]

    def single_draw_variance_x(self, x, y):
        dev = self.e @ x + self.f @ y + self.c
        return float(np.mean(np.sum(dev**2, axis=1)))

    def single_draw_variance_y(self, x, y):
        dev = np.einsum("kij,i->kj", self.f, x) + self.d
        return float(np.mean(np.sum(dev**2, axis=1)))


def make_quadratic_finite_sum(n_comp: int, n: int, m: int, gamma: float,
                              mu_y: float, rng, spread: float = 0.3
                              ) -> QuadraticFiniteSum:
    base = make_quadratic_saddle(n, m, gamma, mu_y, rng)
    e = rng.standard_normal((n_comp, n, n)) * spread
    e = 0.5 * (e + np.transpose(e, (0, 2, 1)))
    f = rng.standard_normal((n_comp, n, m)) * spread
    c = rng.standard_normal((n_comp, n)) * spread
    d = rng.standard_normal((n_comp, m)) * spread
    for arr in (e, f, c, d):
        arr -= arr.mean(axis=0, keepdims=True)

    a_mat, b_mat = base.a, base.b

    def batch_grad_x(idx, x, y):
        idx = np.asarray(idx)
        ai = a_mat + e[idx]
        bi = b_mat + f[idx]
        rows = np.einsum("kij,j->ki", ai, x) + np.einsum("kij,j->ki", bi, y) + c[idx]
        return rows.mean(axis=0)

    def batch_grad_y(idx, x, y):
        idx = np.asarray(idx)
        bi = b_mat + f[idx]
        rows = np.einsum("kij,i->kj", bi, x) - mu_y * y + d[idx]
        return rows.mean(axis=0)

    l_xx_as = max(np.linalg.norm(a_mat + e[i], 2) for i in range(n_comp))
    l_cpl_as = max(np.linalg.norm(b_mat + f[i], 2) for i in range(n_comp))
    as_constants = SmoothnessConstants(l_xx=float(l_xx_as), l_xy=float(l_cpl_as),
                                       l_yx=float(l_cpl_as), l_yy=mu_y)
    spec = FiniteSumSpec(n_comp=n_comp, batch_grad_x=batch_grad_x,
                         batch_grad_y=batch_grad_y, as_smoothness=as_constants)
    return QuadraticFiniteSum(base=base, e=e, f=f, c=c, d=d, spec=spec)
