"""Desk-scale classification task for training fusion front-ends end to end.

Each utterance carries one class label. The label is planted as a frame-wise
mean shift ``snr * pattern[label]`` on the first four columns of the
informative stream(s); everything else is seeded standard-normal noise.
``pattern[c]`` is the 4-bit binary code of ``c + 1`` (so at most 15 classes),
which keeps every pattern non-negative and distinct.

Model: optional alignment, one fusion operator, frame-mean pooling and an
affine classifier, trained with full-batch (or mini-batch) gradient descent
on cross-entropy.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import align as A
from . import fusion as F
from .analysis import normalize_gates
from .checkpoint import load_container, save_container
from .diff import BACKWARD, HeadParams, cross_entropy, head_backward, head_forward
from .errors import ConfigurationError, TrainingError, UndefinedMetricError
from .params import fan_in_uniform, named_arrays
from .rng import SplitMix64

N_PLANTED = 4
INFORMATIVE = ("SF", "SSL", "both")


@dataclass(frozen=True)
class ToyDatasetSpec:
    """``sf_frames_per_frame=2`` emits the SF stream on a twice-faster clock
    (``2 * frames_per_utt`` frames) for models with an alignment stage."""

    n_utts: int = 64
    frames_per_utt: int = 20
    n_classes: int = 2
    informative: str = "SF"
    snr: float = 1.0
    seed: int = 0
    dim: int = 8
    ssl_dim: int = None
    sf_frames_per_frame: int = 1

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigurationError("n_classes must be >= 2")
        if self.n_classes >= 2**N_PLANTED:
            raise ConfigurationError(f"at most {2**N_PLANTED - 1} classes fit the planted code")
        if self.frames_per_utt < 1:
            raise ConfigurationError("frames_per_utt must be >= 1")
        if self.informative not in INFORMATIVE:
            raise ConfigurationError(f"informative must be one of {INFORMATIVE}")
        if min(self.dim, self.ssl_dim or self.dim) < N_PLANTED:
            raise ConfigurationError(f"stream dims must be >= {N_PLANTED}")
        if self.sf_frames_per_frame not in (1, 2):
            raise ConfigurationError("sf_frames_per_frame must be 1 or 2")


@dataclass
class ToyDataset:
    f_sf: np.ndarray  # N x T_SF x D_SF
    f_ssl: np.ndarray  # N x T x D_SSL
    labels: np.ndarray  # N, int
    n_classes: int

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return zip(self.f_sf, self.f_ssl, (int(y) for y in self.labels))

    def subset(self, idx):
        return ToyDataset(self.f_sf[idx], self.f_ssl[idx], self.labels[idx], self.n_classes)


def class_patterns(n_classes):
    codes = np.arange(1, n_classes + 1)
    return ((codes[:, None] >> np.arange(N_PLANTED)) & 1).astype(np.float64)


def make_dataset(spec):
    rng = SplitMix64(spec.seed).spawn("toy-dataset")
    N, T = spec.n_utts, spec.frames_per_utt
    T_sf = T * spec.sf_frames_per_frame
    labels = np.arange(N) % spec.n_classes
    f_sf = rng.spawn("sf").normal((N, T_sf, spec.dim))
    f_ssl = rng.spawn("ssl").normal((N, T, spec.ssl_dim or spec.dim))
    shift = spec.snr * class_patterns(spec.n_classes)[labels][:, None, :]
    if spec.informative in ("SF", "both"):
        f_sf[..., :N_PLANTED] += shift
    if spec.informative in ("SSL", "both"):
        f_ssl[..., :N_PLANTED] += shift
    return ToyDataset(f_sf, f_ssl, labels, spec.n_classes)


@dataclass
class ToyModel:
    variant: F.Variant
    fusion: object
    head: HeadParams
    align: A.AlignParams = None

    @property
    def groups(self):
        out = {"fusion": self.fusion, "head": self.head}
        if self.align is not None:
            out["align"] = self.align
        return out


def init_model(variant, dim, n_classes, seed=0, theta=F.Theta.LOGSOFTMAX, kernel_size=5,
               bias=True, sf_dim=None, ssl_dim=None, with_align=False):
    cfg = F.FusionConfig(variant=variant, dim=dim, theta=theta, kernel_size=kernel_size, bias=bias)
    rng = SplitMix64(seed).spawn("head")
    head = HeadParams(fan_in_uniform(rng, (dim, n_classes), dim), np.zeros(n_classes) if bias else None)
    al = None
    if with_align:
        al = A.init_align(sf_dim or dim, ssl_dim or dim, dim, seed)
    return ToyModel(cfg.variant, F.init_fusion(cfg, seed), head, al)


def forward(model, f_sf, f_ssl):
    """Logits for a batch ``(N, T, D)`` of utterances."""
    if model.align is not None:
        f_sf, f_ssl = A.align_forward(f_sf, f_ssl, model.align)
    fused = F.fuse(model.variant, f_sf, f_ssl, model.fusion)
    return head_forward(fused, model.head)


def loss_and_grads(model, f_sf, f_ssl, labels):
    """Mean cross-entropy and ``{group: {param: grad}}``."""
    x_sf, x_ssl = f_sf, f_ssl
    if model.align is not None:
        x_sf, x_ssl = A.align_forward(f_sf, f_ssl, model.align)
    fused = F.FORWARD[model.variant](x_sf, x_ssl, model.fusion)
    logits = head_forward(fused, model.head)
    loss, g_logits = cross_entropy(logits, labels)

    g_head = head_backward(fused, model.head, g_logits)
    g_fusion = BACKWARD[model.variant](x_sf, x_ssl, model.fusion, g_head.inputs["x"])
    grads = {"head": g_head.params, "fusion": g_fusion.params}
    if model.align is not None:
        grads["align"], _, _ = A.align_backward(
            f_sf, f_ssl, model.align, g_fusion.grad_f_sf, g_fusion.grad_f_ssl
        )
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.1
    batch_size: int = None  # None: full batch
    seed: int = 0
    frozen: tuple = ()  # parameter groups left untouched: "align", "fusion", "head"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")


def copy_model(model):
    def cp(p):
        return None if p is None else dataclasses.replace(
            p, **{k: v.copy() for k, v in named_arrays(p).items()}
        )

    return ToyModel(model.variant, cp(model.fusion), cp(model.head), cp(model.align))


def train(model, dataset, cfg=None):
    """Plain gradient descent. Returns ``(trained copy, per-epoch loss list)``.

    The loss recorded for an epoch is the mean training loss seen during that
    epoch, before its final update.
    """
    cfg = cfg or TrainConfig()
    model = copy_model(model)
    if len(dataset) == 0:
        raise UndefinedMetricError("cannot train on an empty dataset")
    rng = SplitMix64(cfg.seed).spawn("batches")
    n = len(dataset)
    curve = []
    for epoch in range(cfg.epochs):
        if cfg.batch_size is None or cfg.batch_size >= n:
            batches = [np.arange(n)]
        else:
            order = rng.permutation(n)
            batches = [order[i : i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
        total = 0.0
        for idx in batches:
            loss, grads = loss_and_grads(model, dataset.f_sf[idx], dataset.f_ssl[idx], dataset.labels[idx])
            if not np.isfinite(loss):
                raise TrainingError("loss diverged to a non-finite value", epoch=epoch)
            total += loss * len(idx)
            for group, params in model.groups.items():
                if group in cfg.frozen:
                    continue
                for name, g in grads[group].items():
                    getattr(params, name)[...] -= cfg.learning_rate * g
        curve.append(total / n)
    return model, curve


def predict(model, dataset):
    return np.argmax(forward(model, dataset.f_sf, dataset.f_ssl), axis=-1)


def evaluate(model, dataset):
    """Fraction of utterances whose argmax class (lowest index on ties) is right."""
    if len(dataset) == 0:
        raise UndefinedMetricError("accuracy of an empty dataset is undefined")
    return float(np.mean(predict(model, dataset) == dataset.labels))


def dataset_gates(model, dataset):
    """Raw per-utterance gate weights of an MoE model."""
    if model.variant is not F.Variant.MOE:
        raise ConfigurationError("gate weights need an MoE model")
    f_sf, f_ssl = dataset.f_sf, dataset.f_ssl
    if model.align is not None:
        f_sf, f_ssl = A.align_forward(f_sf, f_ssl, model.align)
    return [F.gate_weights(x, model.fusion) for x in f_sf]


def mean_gate_weight(model, dataset):
    """Corpus means of the normalized ``(w_SF, w_SSL)`` over all frames."""
    gates = [normalize_gates(g) for g in dataset_gates(model, dataset)]
    if not gates:
        raise UndefinedMetricError("no utterances")
    w = np.concatenate([g.w for g in gates], axis=0)
    m_ssl = float(np.mean(w[:, 1]))
    return 1.0 - m_ssl, m_ssl


def probe_accuracy(train_set, test_set, stream, cfg=None, seed=0):
    """Held-out accuracy of a pooled linear classifier on one stream alone."""
    if stream not in ("SF", "SSL"):
        raise ConfigurationError("stream must be 'SF' or 'SSL'")
    pick = (lambda d: d.f_sf) if stream == "SF" else (lambda d: d.f_ssl)
    x = pick(train_set)
    head = HeadParams(
        fan_in_uniform(SplitMix64(seed).spawn("probe"), (x.shape[-1], train_set.n_classes), x.shape[-1]),
        np.zeros(train_set.n_classes),
    )
    cfg = cfg or TrainConfig()
    for epoch in range(cfg.epochs):
        loss, g = cross_entropy(head_forward(x, head), train_set.labels)
        if not np.isfinite(loss):
            raise TrainingError("probe diverged", epoch=epoch)
        gp = head_backward(x, head, g).params
        head.W -= cfg.learning_rate * gp["W"]
        head.b -= cfg.learning_rate * gp["b"]
    pred = np.argmax(head_forward(pick(test_set), head), axis=-1)
    return float(np.mean(pred == test_set.labels))


# checkpoint and dataset containers


def save_model(model, path):
    arrays = {}
    for group, params in model.groups.items():
        for name, arr in named_arrays(params).items():
            arrays[f"{group}/{name}"] = arr
    meta = {"kind": "toy-model", "variant": model.variant.value}
    if model.variant is F.Variant.MOE:
        meta["theta"] = model.fusion.theta.value
    save_container(path, arrays, meta)


def model_from_arrays(arrays, meta):
    if meta.get("kind") != "toy-model":
        raise ConfigurationError("container does not hold a toy model")
    groups = {}
    for key, arr in arrays.items():
        group, _, name = key.partition("/")
        groups.setdefault(group, {})[name] = arr
    variant = F.Variant(meta["variant"])
    fusion_kwargs = groups["fusion"]
    if variant is F.Variant.MOE:
        fusion_kwargs = dict(fusion_kwargs, theta=meta["theta"])
    return ToyModel(
        variant,
        F.PARAM_TYPES[variant](**fusion_kwargs),
        HeadParams(**groups["head"]),
        A.AlignParams(**groups["align"]) if "align" in groups else None,
    )


def load_model(path):
    return model_from_arrays(*load_container(path))


def save_dataset(dataset, path):
    save_container(
        path,
        {"f_sf": dataset.f_sf, "f_ssl": dataset.f_ssl, "labels": dataset.labels},
        {"kind": "toy-dataset", "n_classes": dataset.n_classes},
    )


def load_dataset(path):
    arrays, meta = load_container(path)
    if meta.get("kind") != "toy-dataset":
        raise ConfigurationError("container does not hold a toy dataset")
    return ToyDataset(arrays["f_sf"], arrays["f_ssl"], arrays["labels"].astype(np.int64), meta["n_classes"])
