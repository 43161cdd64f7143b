"""The four frame classifiers, 6-fold evaluation and per-class metrics.

All models z-score their inputs with statistics frozen at training time, so
rescaling any raw input dimension by a positive constant never changes a
prediction.  Ties anywhere (vote counts, equal posteriors, equal leaf
majorities) resolve toward the more dangerous class: LH > H > LL > NV.
A warning system should err on the side of warning.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np


class SoundClass(enum.Enum):
    H = "H"    # heavy vehicle
    LL = "LL"  # light vehicle, low speed
    LH = "LH"  # light vehicle, high speed
    NV = "NV"  # no vehicle (birds, airplane, crowd)


CLASS_ORDER = [SoundClass.H, SoundClass.LL, SoundClass.LH, SoundClass.NV]
DANGER_ORDER = [SoundClass.LH, SoundClass.H, SoundClass.LL, SoundClass.NV]
_DANGER_RANK = {c: len(DANGER_ORDER) - i for i, c in enumerate(DANGER_ORDER)}


def most_dangerous(classes) -> SoundClass:
    """Tie-break helper: the riskiest class among the candidates."""
    return max(classes, key=_DANGER_RANK.__getitem__)


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: list  # SoundClass per row

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] != len(self.y):
            raise ValueError("X must be (n_samples, dim) with one label per row")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("features must be finite")

    @property
    def class_counts(self) -> dict:
        counts = {c: 0 for c in CLASS_ORDER}
        for label in self.y:
            counts[label] += 1
        return counts

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(self.X[indices], [self.y[i] for i in indices])

    def select_columns(self, cols) -> "LabeledDataset":
        return LabeledDataset(self.X[:, cols], list(self.y))


def _fit_standardizer(X: np.ndarray):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    return mean, std


def _codes(labels) -> np.ndarray:
    index = {c: i for i, c in enumerate(CLASS_ORDER)}
    return np.array([index[label] for label in labels], dtype=np.intp)


def _argmax_danger(scores: np.ndarray) -> SoundClass:
    """Argmax over CLASS_ORDER scores, exact ties going to the riskier class."""
    best = scores.max()
    return most_dangerous([CLASS_ORDER[i] for i in np.flatnonzero(scores == best)])


# ---------------------------------------------------------------------------
# MLP

@dataclass(frozen=True)
class MlpConfig:
    hidden_units: int = 32
    learning_rate: float = 0.01
    epochs: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.hidden_units < 1 or self.epochs < 1:
            raise ValueError("hidden_units and epochs must be >= 1")


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class MlpModel:
    """One sigmoid hidden layer, softmax over the four classes."""

    kind = "mlp"

    def __init__(self, mean, std, w1, b1, w2, b2):
        self.mean, self.std = mean, std
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    def _forward(self, Xs):
        hidden = _sigmoid(Xs @ self.w1 + self.b1)
        return hidden, _softmax(hidden @ self.w2 + self.b2)

    def loss_and_gradients(self, Xs, codes):
        """Mean cross-entropy and its analytic gradients at the current weights."""
        n = Xs.shape[0]
        hidden, probs = self._forward(Xs)
        loss = -np.mean(np.log(probs[np.arange(n), codes] + 1e-300))
        delta_out = probs.copy()
        delta_out[np.arange(n), codes] -= 1.0
        delta_out /= n
        gw2 = hidden.T @ delta_out
        gb2 = delta_out.sum(axis=0)
        delta_hidden = (delta_out @ self.w2.T) * hidden * (1.0 - hidden)
        gw1 = Xs.T @ delta_hidden
        gb1 = delta_hidden.sum(axis=0)
        return loss, (gw1, gb1, gw2, gb2)

    def loss(self, Xs, codes):
        _, probs = self._forward(Xs)
        return -np.mean(np.log(probs[np.arange(Xs.shape[0]), codes] + 1e-300))

    def predict_batch(self, X) -> list:
        Xs = (np.asarray(X, dtype=np.float64) - self.mean) / self.std
        _, probs = self._forward(Xs)
        return [_argmax_danger(p) for p in probs]

    def predict(self, vector) -> SoundClass:
        return self.predict_batch(np.asarray(vector)[np.newaxis, :])[0]

    def to_dict(self):
        return {"kind": self.kind,
                "mean": self.mean.tolist(), "std": self.std.tolist(),
                "w1": self.w1.tolist(), "b1": self.b1.tolist(),
                "w2": self.w2.tolist(), "b2": self.b2.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(*(np.array(doc[k]) for k in ("mean", "std", "w1", "b1", "w2", "b2")))


def train_mlp(data: LabeledDataset, config: MlpConfig = MlpConfig()) -> MlpModel:
    """Full-batch gradient descent with a halving step control.

    Weights and biases start from a seeded uniform(-0.5, 0.5) draw.  Each
    epoch takes one descent step; if the step would increase the loss the
    rate is halved (persistently) until the step no longer hurts, so the
    training loss is non-increasing by construction.
    """
    if len(set(data.y)) < 2:
        raise ValueError("training data must contain at least 2 classes")
    mean, std = _fit_standardizer(data.X)
    Xs = (data.X - mean) / std
    codes = _codes(data.y)
    dim, hidden, n_out = Xs.shape[1], config.hidden_units, len(CLASS_ORDER)
    rng = np.random.default_rng(config.seed)
    model = MlpModel(mean, std,
                     rng.uniform(-0.5, 0.5, (dim, hidden)),
                     rng.uniform(-0.5, 0.5, hidden),
                     rng.uniform(-0.5, 0.5, (hidden, n_out)),
                     rng.uniform(-0.5, 0.5, n_out))
    rate = config.learning_rate
    loss, grads = model.loss_and_gradients(Xs, codes)
    for _ in range(config.epochs):
        while True:
            candidate = MlpModel(mean, std,
                                 model.w1 - rate * grads[0], model.b1 - rate * grads[1],
                                 model.w2 - rate * grads[2], model.b2 - rate * grads[3])
            candidate_loss = candidate.loss(Xs, codes)
            if candidate_loss <= loss or rate <= 1e-12:
                break
            rate *= 0.5
        model = candidate
        loss, grads = model.loss_and_gradients(Xs, codes)
    return model


# ---------------------------------------------------------------------------
# KNN

class KnnModel:
    kind = "knn"

    def __init__(self, mean, std, Xs, labels, k):
        self.mean, self.std = mean, std
        self.Xs = Xs
        self.labels = labels
        self.k = k

    def predict_batch(self, X) -> list:
        Q = (np.asarray(X, dtype=np.float64) - self.mean) / self.std
        out = []
        codes = _codes(self.labels)
        for q in Q:
            d = np.sqrt(((self.Xs - q) ** 2).sum(axis=1))
            nearest = np.argsort(d, kind="stable")[:self.k]
            near_codes = codes[nearest]
            counts = np.bincount(near_codes, minlength=len(CLASS_ORDER))
            top = counts.max()
            tied = [c for c in range(len(CLASS_ORDER)) if counts[c] == top]
            if len(tied) > 1:
                # closer class (smaller mean distance) wins, then danger order
                means = {c: d[nearest[near_codes == c]].mean() for c in tied}
                closest = min(means.values())
                tied = [c for c in tied if means[c] <= closest]
            out.append(most_dangerous([CLASS_ORDER[c] for c in tied]))
        return out

    def predict(self, vector) -> SoundClass:
        return self.predict_batch(np.asarray(vector)[np.newaxis, :])[0]

    def to_dict(self):
        return {"kind": self.kind, "k": self.k,
                "mean": self.mean.tolist(), "std": self.std.tolist(),
                "Xs": self.Xs.tolist(), "labels": [c.value for c in self.labels]}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.array(doc["mean"]), np.array(doc["std"]), np.array(doc["Xs"]),
                   [SoundClass(v) for v in doc["labels"]], doc["k"])


def train_knn(data: LabeledDataset, k: int = 5) -> KnnModel:
    if not (1 <= k <= len(data.y)):
        raise ValueError("need 1 <= k <= dataset size")
    mean, std = _fit_standardizer(data.X)
    return KnnModel(mean, std, (data.X - mean) / std, list(data.y), k)


# ---------------------------------------------------------------------------
# Gaussian Naive Bayes

class GnbModel:
    kind = "gnb"

    def __init__(self, mean, std, classes, class_means, class_vars, log_priors):
        self.mean, self.std = mean, std
        self.classes = classes
        self.class_means = class_means
        self.class_vars = class_vars
        self.log_priors = log_priors

    def log_posteriors(self, Xs):
        out = np.empty((Xs.shape[0], len(self.classes)))
        for i in range(len(self.classes)):
            mu, var = self.class_means[i], self.class_vars[i]
            ll = -0.5 * (np.log(2.0 * np.pi * var) + (Xs - mu) ** 2 / var).sum(axis=1)
            out[:, i] = self.log_priors[i] + ll
        return out

    def predict_batch(self, X) -> list:
        Xs = (np.asarray(X, dtype=np.float64) - self.mean) / self.std
        post = self.log_posteriors(Xs)
        out = []
        for row in post:
            best = row.max()
            tied = [self.classes[i] for i in np.flatnonzero(row >= best - 1e-9)]
            out.append(most_dangerous(tied))
        return out

    def predict(self, vector) -> SoundClass:
        return self.predict_batch(np.asarray(vector)[np.newaxis, :])[0]

    def to_dict(self):
        return {"kind": self.kind,
                "mean": self.mean.tolist(), "std": self.std.tolist(),
                "classes": [c.value for c in self.classes],
                "class_means": self.class_means.tolist(),
                "class_vars": self.class_vars.tolist(),
                "log_priors": self.log_priors.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.array(doc["mean"]), np.array(doc["std"]),
                   [SoundClass(v) for v in doc["classes"]],
                   np.array(doc["class_means"]), np.array(doc["class_vars"]),
                   np.array(doc["log_priors"]))


def train_gnb(data: LabeledDataset, var_floor: float = 1e-9) -> GnbModel:
    """Per-class per-dimension Gaussians (MLE variance, floored) + count priors."""
    mean, std = _fit_standardizer(data.X)
    Xs = (data.X - mean) / std
    present = [c for c in CLASS_ORDER if c in set(data.y)]
    means, variances, priors = [], [], []
    for c in present:
        rows = Xs[np.array([label == c for label in data.y])]
        if rows.shape[0] < 2:
            raise ValueError(f"class {c.value} needs >= 2 samples for a variance")
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0), var_floor))
        priors.append(np.log(rows.shape[0] / Xs.shape[0]))
    return GnbModel(mean, std, present, np.array(means), np.array(variances), np.array(priors))


# ---------------------------------------------------------------------------
# Decision tree

@dataclass
class _TreeNode:
    label: SoundClass | None = None
    feature: int = -1
    threshold: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p ** 2).sum())


def _best_split(Xs: np.ndarray, codes: np.ndarray):
    """Exhaustive (feature, threshold) search maximizing Gini decrease.

    Ties resolve to the lowest feature index, then the lowest threshold.
    Returns None when no split separates anything.
    """
    n, dim = Xs.shape
    total = np.bincount(codes, minlength=len(CLASS_ORDER)).astype(np.float64)
    parent = _gini(total)
    best = None  # (decrease, feature, threshold)
    onehot = np.zeros((n, len(CLASS_ORDER)))
    onehot[np.arange(n), codes] = 1.0
    for f in range(dim):
        order = np.argsort(Xs[:, f], kind="stable")
        xs = Xs[order, f]
        left_counts = np.cumsum(onehot[order], axis=0)  # after i+1 items
        cut = np.flatnonzero(xs[1:] > xs[:-1])  # split between cut and cut+1
        if len(cut) == 0:
            continue
        nl = (cut + 1).astype(np.float64)
        lc = left_counts[cut]
        rc = total - lc
        gl = 1.0 - ((lc / nl[:, None]) ** 2).sum(axis=1)
        gr = 1.0 - ((rc / (n - nl)[:, None]) ** 2).sum(axis=1)
        decrease = parent - (nl / n) * gl - ((n - nl) / n) * gr
        j = int(np.argmax(decrease))  # first max = lowest threshold
        if decrease[j] > 1e-15 and (best is None or decrease[j] > best[0] + 1e-15):
            threshold = 0.5 * (xs[cut[j]] + xs[cut[j] + 1])
            best = (float(decrease[j]), f, float(threshold))
    return best


def _grow(Xs, codes, depth, max_depth) -> _TreeNode:
    counts = np.bincount(codes, minlength=len(CLASS_ORDER))
    top = counts.max()
    majority = most_dangerous([CLASS_ORDER[i] for i in np.flatnonzero(counts == top)])
    if depth >= max_depth or top == len(codes):
        return _TreeNode(label=majority)
    split = _best_split(Xs, codes)
    if split is None:
        return _TreeNode(label=majority)
    _, f, threshold = split
    mask = Xs[:, f] <= threshold
    return _TreeNode(feature=f, threshold=threshold,
                     left=_grow(Xs[mask], codes[mask], depth + 1, max_depth),
                     right=_grow(Xs[~mask], codes[~mask], depth + 1, max_depth))


class DtModel:
    kind = "dt"

    def __init__(self, mean, std, root):
        self.mean, self.std = mean, std
        self.root = root

    def predict(self, vector) -> SoundClass:
        x = (np.asarray(vector, dtype=np.float64) - self.mean) / self.std
        node = self.root
        while node.label is None:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label

    def predict_batch(self, X) -> list:
        return [self.predict(row) for row in np.asarray(X)]

    @staticmethod
    def _node_to_dict(node):
        if node.label is not None:
            return {"label": node.label.value}
        return {"feature": node.feature, "threshold": node.threshold,
                "left": DtModel._node_to_dict(node.left),
                "right": DtModel._node_to_dict(node.right)}

    @staticmethod
    def _node_from_dict(doc):
        if "label" in doc:
            return _TreeNode(label=SoundClass(doc["label"]))
        return _TreeNode(feature=doc["feature"], threshold=doc["threshold"],
                         left=DtModel._node_from_dict(doc["left"]),
                         right=DtModel._node_from_dict(doc["right"]))

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean.tolist(), "std": self.std.tolist(),
                "tree": self._node_to_dict(self.root)}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.array(doc["mean"]), np.array(doc["std"]),
                   cls._node_from_dict(doc["tree"]))


def train_dt(data: LabeledDataset, max_depth: int = 10) -> DtModel:
    if len(data.y) == 0:
        raise ValueError("empty dataset")
    mean, std = _fit_standardizer(data.X)
    root = _grow((data.X - mean) / std, _codes(data.y), 0, max_depth)
    return DtModel(mean, std, root)


# ---------------------------------------------------------------------------
# Metrics and cross-validation

def f_measure(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (both as percent)."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    accuracy: float
    f_measure: float


@dataclass(frozen=True)
class Metrics:
    per_class: dict       # SoundClass -> ClassMetrics, percent values
    overall_accuracy: float
    confusion: np.ndarray  # rows = true class, cols = predicted, CLASS_ORDER


def compute_metrics(y_true, y_pred) -> Metrics:
    n = len(y_true)
    idx = {c: i for i, c in enumerate(CLASS_ORDER)}
    confusion = np.zeros((len(CLASS_ORDER), len(CLASS_ORDER)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[idx[t], idx[p]] += 1
    per_class = {}
    for c in CLASS_ORDER:
        i = idx[c]
        tp = confusion[i, i]
        fp = confusion[:, i].sum() - tp
        fn = confusion[i, :].sum() - tp
        tn = n - tp - fp - fn
        precision = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        recall = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        accuracy = 100.0 * (tp + tn) / n if n else 0.0
        per_class[c] = ClassMetrics(precision, recall, accuracy, f_measure(precision, recall))
    overall = 100.0 * np.trace(confusion) / n if n else 0.0
    return Metrics(per_class=per_class, overall_accuracy=overall, confusion=confusion)


def stratified_folds(labels, folds: int, seed: int) -> np.ndarray:
    """Seeded fold assignment, one entry per sample, each class dealt evenly."""
    labels = list(labels)
    assignment = np.empty(len(labels), dtype=np.intp)
    rng = np.random.default_rng(seed)
    for c in CLASS_ORDER:
        members = np.array([i for i, label in enumerate(labels) if label == c], dtype=np.intp)
        if len(members) == 0:
            continue
        if len(members) < folds:
            raise ValueError(f"class {c.value} has {len(members)} samples, fewer than {folds} folds")
        rng.shuffle(members)
        for j, sample in enumerate(members):
            assignment[sample] = j % folds
    return assignment


def evaluate_cv(data: LabeledDataset, trainer, folds: int = 6, seed: int = 0) -> Metrics:
    """Stratified k-fold CV; predictions pooled over folds into one Metrics."""
    assignment = stratified_folds(data.y, folds, seed)
    y_true, y_pred = [], []
    for fold in range(folds):
        test_idx = np.flatnonzero(assignment == fold)
        train_idx = np.flatnonzero(assignment != fold)
        model = trainer(data.subset(train_idx))
        y_pred.extend(model.predict_batch(data.X[test_idx]))
        y_true.extend(data.y[i] for i in test_idx)
    return compute_metrics(y_true, y_pred)


FEATURE_SETS = {
    "five": list(range(0, 5)),      # the spectral scalars
    "cepstral": list(range(5, 31)),  # MFCC + LPC + gain
    "all": list(range(0, 31)),
}

CLASSIFIER_NAMES = ["mlp", "knn", "nb", "dt"]


def make_trainer(name: str, seed: int = 0, **kwargs):
    if name == "mlp":
        config = MlpConfig(seed=seed, **kwargs)
        return lambda data: train_mlp(data, config)
    if name == "knn":
        k = kwargs.get("k", 5)
        return lambda data: train_knn(data, k)
    if name == "nb":
        return lambda data: train_gnb(data)
    if name == "dt":
        depth = kwargs.get("max_depth", 10)
        return lambda data: train_dt(data, depth)
    raise ValueError(f"unknown classifier {name!r}")


def compare_feature_sets(data: LabeledDataset, seed: int = 0, folds: int = 6,
                         mlp_kwargs: dict | None = None) -> dict:
    """Overall CV accuracy for every classifier x feature-set combination.

    Returns {classifier: {set_name: percent}} over the sets 'five',
    'cepstral' and 'all'; expects full 31-dimensional vectors.
    """
    if data.X.shape[1] != 31:
        raise ValueError("compare_feature_sets expects full 31-dim vectors")
    grid = {}
    for name in CLASSIFIER_NAMES:
        kwargs = dict(mlp_kwargs or {}) if name == "mlp" else {}
        grid[name] = {}
        for set_name, cols in FEATURE_SETS.items():
            trainer = make_trainer(name, seed=seed, **kwargs)
            metrics = evaluate_cv(data.select_columns(cols), trainer, folds=folds, seed=seed)
            grid[name][set_name] = metrics.overall_accuracy
    return grid


# ---------------------------------------------------------------------------
# Persistence

_MODEL_KINDS = {"mlp": MlpModel, "knn": KnnModel, "gnb": GnbModel, "dt": DtModel,
                "nb": GnbModel}


def save_model(path, model, extra: dict | None = None) -> None:
    """JSON persistence; floats round-trip exactly through repr."""
    doc = {"format": "roadwarn-model", "version": 1}
    doc.update(model.to_dict())
    if extra:
        doc["meta"] = dict(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def _read_doc(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "roadwarn-model" or doc.get("version") != 1:
        raise ValueError(f"{path}: not a roadwarn model file")
    return doc


def load_model(path):
    doc = _read_doc(path)
    kind = doc.get("kind")
    if kind not in _MODEL_KINDS:
        raise ValueError(f"{path}: unknown model kind {kind!r}")
    return _MODEL_KINDS[kind].from_dict(doc)


def load_model_meta(path) -> dict:
    return _read_doc(path).get("meta", {})
