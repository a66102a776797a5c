"""Streaming classifiers over pooled embeddings.

Every learner consumes one ``(z, y)`` pair per :meth:`observe` call and
never revisits a sample, except iCaRL through its explicit replay buffer.
Class ids are integers; score columns are always ordered by ascending class
id so that ``argmax`` resolves ties towards the lowest id.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, StateError
from .linalg import shrunk_inverse, shrunk_inverse_logdet
from .rng import RngStream

LEARNER_KINDS = ("ncm", "slda", "sqda", "snb", "prcpt", "sovr", "cbcl", "ft", "icarl", "icarl2pc")


@dataclass(frozen=True)
class Prediction:
    scores: dict
    label: int


def _check_vector(z, dim=None):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ContractError(f"expected a 1-D embedding, got shape {z.shape}")
    if dim is not None and z.shape[0] != dim:
        raise ContractError(f"embedding dim {z.shape[0]} does not match learner dim {dim}")
    if not np.all(np.isfinite(z)):
        raise ContractError("embedding contains non-finite values")
    return z


def update_running_mean(m, t, z):
    """One step of the running class mean; ``t == 0`` means the class is new."""
    z = np.asarray(z, dtype=np.float64)
    if t == 0:
        return z.copy(), 1
    m = np.asarray(m, dtype=np.float64)
    if m.shape != z.shape:
        raise ContractError(f"mean dim {m.shape} does not match sample dim {z.shape}")
    return (t * m + z) / (t + 1), t + 1


def update_running_covariance(sigma, n, z, m_y):
    """``(n * sigma + n/(n+1) * d d^T) / (n + 1)`` with ``d = z - m_y``.

    ``m_y`` must be the class mean *before* this sample is folded into it.
    """
    z = np.asarray(z, dtype=np.float64)
    m_y = np.asarray(m_y, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if z.shape != m_y.shape or sigma.shape != (z.size, z.size):
        raise ContractError("covariance, sample and mean dimensions disagree")
    dev = z - m_y
    delta = (n / (n + 1.0)) * np.outer(dev, dev)
    return (n * sigma + delta) / (n + 1.0)


class PrototypeTable:
    """Running mean ``m_c`` and count ``t_c`` per class."""

    def __init__(self, dim):
        self.dim = dim
        self.means = {}
        self.counts = {}
        self._stack = None

    def __len__(self):
        return len(self.means)

    def __contains__(self, c):
        return c in self.means

    @property
    def classes(self):
        return sorted(self.means)

    def get(self, c):
        return self.means.get(c), self.counts.get(c, 0)

    def update(self, z, y):
        m, t = update_running_mean(self.means.get(y), self.counts.get(y, 0), z)
        self.means[y] = m
        self.counts[y] = t
        self._stack = None

    def matrix(self):
        if self._stack is None:
            cls = self.classes
            self._stack = (np.array(cls), np.stack([self.means[c] for c in cls]))
        return self._stack


def _prediction(classes, row):
    idx = int(np.argmax(row))
    return Prediction({int(c): float(s) for c, s in zip(classes, row)}, int(classes[idx]))


def ncm_scores(prototypes, Z):
    if len(prototypes) == 0:
        raise StateError("no class prototypes stored")
    classes, M = prototypes.matrix()
    diff = Z[:, None, :] - M[None, :, :]
    return classes, -np.sqrt(np.einsum("ncd,ncd->nc", diff, diff))


def ncm_predict(prototypes, z):
    """Label of the l2-nearest prototype; ties go to the lowest class id."""
    z = _check_vector(z, prototypes.dim)
    classes, s = ncm_scores(prototypes, z[None, :])
    return _prediction(classes, s[0])


class Learner:
    kind = None

    def __init__(self, dim):
        if dim < 1:
            raise ContractError("learner dim must be >= 1")
        self.dim = int(dim)
        self.n_observed = 0

    @property
    def classes(self):
        raise NotImplementedError

    def observe(self, z, y):
        z = _check_vector(z, self.dim)
        self._observe(z, int(y))
        self.n_observed += 1
        return self

    def scores(self, Z):
        """``(classes, scores)`` with ``scores`` of shape ``(N, C)``."""
        if not self.classes:
            raise StateError(f"{self.kind} has not observed any class")
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != self.dim:
            raise ContractError(f"embedding dim {Z.shape[1]} does not match learner dim {self.dim}")
        return self._scores(Z)

    def predict(self, z):
        z = _check_vector(z, self.dim)
        classes, s = self.scores(z[None, :])
        return _prediction(classes, s[0])

    def predict_batch(self, Z):
        classes, s = self.scores(Z)
        return classes[np.argmax(s, axis=1)]

    def _observe(self, z, y):
        raise NotImplementedError

    def _scores(self, Z):
        raise NotImplementedError


class NCM(Learner):
    kind = "ncm"

    def __init__(self, dim):
        super().__init__(dim)
        self.prototypes = PrototypeTable(self.dim)

    @property
    def classes(self):
        return self.prototypes.classes

    def _observe(self, z, y):
        self.prototypes.update(z, y)

    def _scores(self, Z):
        return ncm_scores(self.prototypes, Z)


class SLDA(Learner):
    """Streaming LDA with a shared running covariance and shrunk inverse."""

    kind = "slda"

    def __init__(self, dim, epsilon=1e-4):
        super().__init__(dim)
        if not epsilon > 0:
            raise ContractError("epsilon must be > 0")
        self.epsilon = float(epsilon)
        self.prototypes = PrototypeTable(self.dim)
        self.sigma = np.zeros((self.dim, self.dim))
        self.n = 0
        self._weights = None

    @property
    def classes(self):
        return self.prototypes.classes

    def _observe(self, z, y):
        m_y, t_y = self.prototypes.get(y)
        if t_y == 0:
            m_y = z  # unseen class: first sample carries no within-class deviation
        self.sigma = update_running_covariance(self.sigma, self.n, z, m_y)
        self.prototypes.update(z, y)
        self.n += 1
        self._weights = None

    def force_covariance(self, sigma):
        self.sigma = np.array(sigma, dtype=np.float64)
        self._weights = None

    def weights(self):
        if self._weights is None:
            if len(self.prototypes) == 0:
                raise StateError("slda has not observed any class")
            classes, M = self.prototypes.matrix()
            lam = shrunk_inverse(self.sigma, self.epsilon)
            W = M @ lam
            b = -0.5 * np.einsum("cd,cd->c", M, W)
            self._weights = (classes, W, b)
        return self._weights

    def _scores(self, Z):
        classes, W, b = self.weights()
        return classes, Z @ W.T + b


def slda_weights(state):
    """Rows ``w_c = Lambda m_c`` and offsets ``b_c = -0.5 m_c . w_c``."""
    _, W, b = state.weights()
    return W, b


class SQDA(Learner):
    kind = "sqda"

    def __init__(self, dim, epsilon=1e-4):
        super().__init__(dim)
        self.epsilon = float(epsilon)
        self.prototypes = PrototypeTable(self.dim)
        self.sigmas = {}
        self._cache = None

    @property
    def classes(self):
        return self.prototypes.classes

    def _observe(self, z, y):
        m_y, t_y = self.prototypes.get(y)
        if t_y == 0:
            self.sigmas[y] = np.zeros((self.dim, self.dim))
            m_y = z
        self.sigmas[y] = update_running_covariance(self.sigmas[y], t_y, z, m_y)
        self.prototypes.update(z, y)
        self._cache = None

    def _precisions(self):
        if self._cache is None:
            self._cache = {c: shrunk_inverse_logdet(self.sigmas[c], self.epsilon) for c in self.classes}
        return self._cache

    def _scores(self, Z):
        classes, M = self.prototypes.matrix()
        prec = self._precisions()
        out = np.empty((Z.shape[0], len(classes)))
        for j, c in enumerate(classes):
            lam, logdet = prec[int(c)]
            diff = Z - M[j]
            out[:, j] = -0.5 * logdet - 0.5 * np.einsum("nd,de,ne->n", diff, lam, diff)
        return classes, out


class SNB(Learner):
    """Gaussian naive Bayes with per-class Welford mean/variance."""

    kind = "snb"

    def __init__(self, dim, sigma_floor=1e-3):
        super().__init__(dim)
        self.var_floor = float(sigma_floor) ** 2
        self.counts = {}
        self.means = {}
        self.m2 = {}

    @property
    def classes(self):
        return sorted(self.counts)

    def _observe(self, z, y):
        n = self.counts.get(y, 0) + 1
        mean = self.means.get(y, np.zeros(self.dim))
        delta = z - mean
        mean = mean + delta / n
        self.m2[y] = self.m2.get(y, np.zeros(self.dim)) + delta * (z - mean)
        self.means[y] = mean
        self.counts[y] = n

    def variance(self, c):
        """Population variance of class ``c``."""
        return self.m2[c] / self.counts[c]

    def _scores(self, Z):
        classes = np.array(self.classes)
        out = np.empty((Z.shape[0], len(classes)))
        for j, c in enumerate(classes):
            var = np.maximum(self.variance(int(c)), self.var_floor)
            diff = Z - self.means[int(c)]
            out[:, j] = -0.5 * np.sum(np.log(var)) - 0.5 * np.sum(diff * diff / var, axis=1)
        return classes, out


class Perceptron(Learner):
    kind = "prcpt"

    def __init__(self, dim):
        super().__init__(dim)
        self.weights = {}

    @property
    def classes(self):
        return sorted(self.weights)

    def _observe(self, z, y):
        if y not in self.weights:
            self.weights[y] = z.copy()
            return
        pred = self.predict(z).label
        if pred != y:
            self.weights[y] = self.weights[y] + z
            self.weights[pred] = self.weights[pred] - z

    def _scores(self, Z):
        classes = self.classes
        W = np.stack([self.weights[c] for c in classes])
        return np.array(classes), Z @ W.T


class SOvR(Learner):
    """One-vs-rest margin ``z . (m_c - m_all)``."""

    kind = "sovr"

    def __init__(self, dim):
        super().__init__(dim)
        self.sums = {}
        self.counts = {}
        self.total = np.zeros(self.dim)
        self.n = 0

    @property
    def classes(self):
        return sorted(self.sums)

    def _observe(self, z, y):
        self.sums[y] = self.sums.get(y, np.zeros(self.dim)) + z
        self.counts[y] = self.counts.get(y, 0) + 1
        self.total = self.total + z
        self.n += 1

    def _scores(self, Z):
        classes = self.classes
        m_all = self.total / self.n
        M = np.stack([self.sums[c] / self.counts[c] for c in classes])
        return np.array(classes), Z @ (M - m_all).T


class CBCL(Learner):
    """Several count-weighted centroids per class, merged by a distance threshold.

    At prediction the nearest-centroid distance of class ``c`` is divided by
    a class weight proportional to ``1 / N_c``, which offsets the advantage
    that frequently seen classes get from owning more centroids.
    """

    kind = "cbcl"

    def __init__(self, dim, threshold=17.0, max_centroids=44):
        super().__init__(dim)
        if max_centroids < 1:
            raise ContractError("cbcl max_centroids must be >= 1")
        self.threshold = float(threshold)
        self.max_centroids = int(max_centroids)
        self.centroids = {}  # class -> list of [vector, count]
        self.counts = {}

    @property
    def classes(self):
        return sorted(self.centroids)

    def _observe(self, z, y):
        self.counts[y] = self.counts.get(y, 0) + 1
        cents = self.centroids.setdefault(y, [])
        if cents:
            dists = [np.linalg.norm(z - c[0]) for c in cents]
            j = int(np.argmin(dists))
            if dists[j] < self.threshold:
                vec, cnt = cents[j]
                cents[j] = [(cnt * vec + z) / (cnt + 1), cnt + 1]
                return
        cents.append([z.copy(), 1])
        if len(cents) > self.max_centroids:
            self._merge_closest(cents)

    @staticmethod
    def _merge_closest(cents):
        V = np.stack([c[0] for c in cents])
        diff = V[:, None, :] - V[None, :, :]
        d = np.einsum("ijk,ijk->ij", diff, diff)
        d[np.diag_indices_from(d)] = np.inf
        i, j = np.unravel_index(int(np.argmin(d)), d.shape)
        i, j = min(i, j), max(i, j)
        (vi, ci), (vj, cj) = cents[i], cents[j]
        cents[i] = [(ci * vi + cj * vj) / (ci + cj), ci + cj]
        del cents[j]

    def _scores(self, Z):
        classes = self.classes
        inv = np.array([1.0 / self.counts[c] for c in classes])
        weight = inv / inv.sum()
        out = np.empty((Z.shape[0], len(classes)))
        for j, c in enumerate(classes):
            V = np.stack([v for v, _ in self.centroids[c]])
            diff = Z[:, None, :] - V[None, :, :]
            nearest = np.sqrt(np.einsum("nkd,nkd->nk", diff, diff).min(axis=1))
            out[:, j] = -nearest / weight[j]
        return np.array(classes), out


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class FineTune(Learner):
    """Linear softmax layer trained with one SGD step per sample."""

    kind = "ft"

    def __init__(self, dim, lr=0.01):
        super().__init__(dim)
        self.lr = float(lr)
        self._classes = []
        self.W = np.zeros((0, self.dim))
        self.b = np.zeros(0)

    @property
    def classes(self):
        return list(self._classes)

    def _ensure_class(self, y):
        if y in self._classes:
            return
        pos = int(np.searchsorted(self._classes, y))
        self._classes.insert(pos, y)
        self.W = np.insert(self.W, pos, 0.0, axis=0)
        self.b = np.insert(self.b, pos, 0.0)

    def _sgd_step(self, X, labels):
        rows = np.searchsorted(self._classes, labels)
        p = _softmax(X @ self.W.T + self.b)
        p[np.arange(len(rows)), rows] -= 1.0
        p /= len(rows)
        self.W -= self.lr * (p.T @ X)
        self.b -= self.lr * p.sum(axis=0)

    def _observe(self, z, y):
        self._ensure_class(y)
        self._sgd_step(z[None, :], np.array([y]))

    def _scores(self, Z):
        return np.array(self._classes), Z @ self.W.T + self.b


class ICaRL(FineTune):
    """Online iCaRL: class-balanced replay buffer feeding the linear layer.

    ``buffer`` is a fixed capacity; ``per_class`` makes the capacity grow
    as ``per_class * number_of_seen_classes``.
    """

    kind = "icarl"

    def __init__(self, dim, lr=0.01, buffer=1000, per_class=None, replay=16, seed=0):
        super().__init__(dim, lr=lr)
        self.capacity_fixed = buffer
        self.per_class = per_class
        self.replay = int(replay)
        self.rng = RngStream(seed, "learner/icarl")
        self.buffer = {}

    @property
    def capacity(self):
        if self.per_class is not None:
            return self.per_class * len(self._classes)
        return self.capacity_fixed

    @property
    def buffer_size(self):
        return sum(len(v) for v in self.buffer.values())

    def _insert(self, z, y):
        # insert first so the incoming sample counts towards its class size
        self.buffer.setdefault(y, []).append(z.copy())
        while self.buffer_size > self.capacity:
            # most represented class, lowest id on ties
            victim = max(sorted(self.buffer), key=lambda c: len(self.buffer[c]))
            items = self.buffer[victim]
            del items[self.rng.integer(len(items))]
            if not items:
                del self.buffer[victim]

    def _observe(self, z, y):
        self._ensure_class(y)
        self._insert(z, y)
        pool = [(c, v) for c in sorted(self.buffer) for v in self.buffer[c]]
        picks = self.rng.sample_without_replacement(len(pool), self.replay) if pool else []
        X = np.stack([z] + [pool[i][1] for i in picks])
        labels = np.array([y] + [pool[i][0] for i in picks])
        self._sgd_step(X, labels)


def make_learner(kind, dim, epsilon=1e-4, lr=0.01, buffer=None, cbcl_threshold=17.0, cbcl_max=44,
                 sigma_floor=1e-3, seed=0):
    """Build a learner from its config name."""
    if kind == "ncm":
        return NCM(dim)
    if kind == "slda":
        return SLDA(dim, epsilon=epsilon)
    if kind == "sqda":
        return SQDA(dim, epsilon=epsilon)
    if kind == "snb":
        return SNB(dim, sigma_floor=sigma_floor)
    if kind == "prcpt":
        return Perceptron(dim)
    if kind == "sovr":
        return SOvR(dim)
    if kind == "cbcl":
        return CBCL(dim, threshold=cbcl_threshold, max_centroids=cbcl_max)
    if kind == "ft":
        return FineTune(dim, lr=lr)
    if kind == "icarl":
        return ICaRL(dim, lr=lr, buffer=1000 if buffer is None else int(buffer), seed=seed)
    if kind == "icarl2pc":
        learner = ICaRL(dim, lr=lr, per_class=2 if buffer is None else int(buffer), seed=seed)
        learner.kind = "icarl2pc"
        return learner
    raise ContractError(f"unknown learner kind {kind!r}; expected one of {', '.join(LEARNER_KINDS)}")
