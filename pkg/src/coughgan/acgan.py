"""Auxiliary-classifier GAN over 128 x 24 mel maps.

The discriminator predicts (real/fake, class); the generator maps
(class label, noise) to a map in [-1, 1]. Generator updates go through the
composite generator -> discriminator graph with the discriminator's
convolution and dense weights frozen; its batch-norm scale/shift stay
trainable on that path.
"""

from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from . import features
from .errors import ConfigError, DomainError, EmptyInputError, TrainingError
from .nn import (
    Activation,
    Adam,
    BatchNorm,
    Conv2D,
    Conv2DTranspose,
    Dense,
    Dropout,
    Embedding,
    Flatten,
    Reshape,
    Sequential,
    bce_loss,
    scce_loss,
    sigmoid_bce_grad,
    softmax_scce_grad,
)
from .nn.losses import binary_accuracy, class_accuracy

log = logging.getLogger(__name__)

IMG_SHAPE = features.MAP_SHAPE
SEED_H, SEED_W = 16, 3
NOISE_CHANNELS = 1024
EMBED_VOCAB = 50
DISC_CHANNELS = (32, 64, 128, 256, 512)
GEN_CHANNELS = (512, 256, 128)
GEN_STRIDES = (2, 2, 1, 2)
SERIES = ("generator", "discriminator_real", "discriminator_fake")


@dataclass
class TrainConfig:
    latent_dim: int = 100
    num_classes: int = 3
    batch_size: int = 64
    epochs: int = 1
    noise_stddev: float = 0.02
    checkpoint_every: int = 10
    seed: int = 0
    paper_faithful: bool = False
    lr: float = 2e-4
    beta1: float = 0.5
    class_names: tuple = ("COVID-19", "healthy", "symptomatic")

    def __post_init__(self):
        self.class_names = tuple(self.class_names)
        if self.latent_dim <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ConfigError("latent_dim, batch_size and epochs must be positive")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if len(self.class_names) != self.num_classes:
            raise ConfigError(f"{len(self.class_names)} class names for {self.num_classes} classes")


@dataclass
class LossRecord:
    total: float
    validity_loss: float
    class_loss: float
    validity_accuracy: float
    class_accuracy: float

    def as_tuple(self):
        return (self.total, self.validity_loss, self.class_loss, self.validity_accuracy, self.class_accuracy)

    @classmethod
    def mean(cls, records):
        return cls(*np.mean([r.as_tuple() for r in records], axis=0).tolist())


@dataclass
class TrainingHistory:
    train: dict = field(default_factory=lambda: defaultdict(list))
    test: dict = field(default_factory=lambda: defaultdict(list))

    def lines(self):
        """History as JSON-lines rows, one per (epoch, split, series)."""
        for split, table in (("train", self.train), ("test", self.test)):
            for series in SERIES:
                for epoch, rec in enumerate(table.get(series, [])):
                    yield {
                        "epoch": epoch, "series": series, "total": rec.total,
                        "validity_loss": rec.validity_loss, "class_loss": rec.class_loss,
                        "validity_acc": rec.validity_accuracy, "class_acc": rec.class_accuracy,
                        "split": split,
                    }

    def save(self, path):
        rows = sorted(self.lines(), key=lambda r: (r["epoch"], r["split"] != "train", SERIES.index(r["series"])))
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        hist = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                row = json.loads(line)
                table = hist.train if row["split"] == "train" else hist.test
                table[row["series"]].append(LossRecord(row["total"], row["validity_loss"], row["class_loss"],
                                                       row["validity_acc"], row["class_acc"]))
        return hist


# ------------------------------------------------------------------ networks

class Discriminator:
    def __init__(self, num_classes, init_rng, dropout_rng, img_shape=IMG_SHAPE):
        layers = []
        c_in = img_shape[2]
        h, w = img_shape[:2]
        for i, c_out in enumerate(DISC_CHANNELS):
            stride = 1 if i == 0 else 2
            layers += [
                Conv2D(c_in, c_out, 3, stride, init_rng, name=f"conv{i}"),
                BatchNorm(c_out, momentum=0.0, name=f"bn{i}"),
                Activation("leaky_relu", alpha=0.2, name=f"lrelu{i}"),
                Dropout(0.5, dropout_rng, name=f"dropout{i}"),
            ]
            c_in = c_out
            h, w = -(-h // stride), -(-w // stride)
        layers.append(Flatten())
        self.features = Sequential(layers, name="features")
        self.flat_size = h * w * c_in
        self.validity = Dense(self.flat_size, 1, init_rng, name="validity")
        self.label = Dense(self.flat_size, num_classes, init_rng, name="label")
        self.num_classes = num_classes

    @property
    def layers(self):
        return self.features.layers + [self.validity, self.label]

    def forward(self, x, training=False):
        """Returns ``(validity (B, 1), class_probs (B, C))``."""
        f = self.features.forward(x, training)
        validity = Activation("sigmoid").forward(self.validity.forward(f, training))
        probs = Activation("softmax").forward(self.label.forward(f, training))
        return validity, probs

    def backward(self, d_validity_logits, d_label_logits):
        df = self.validity.backward(d_validity_logits) + self.label.backward(d_label_logits)
        return self.features.backward(df)

    def predict(self, x, chunk=64):
        outs = [self.forward(x[i : i + chunk], training=False) for i in range(0, len(x), chunk)]
        return np.concatenate([o[0] for o in outs]), np.concatenate([o[1] for o in outs])


class Generator:
    def __init__(self, latent_dim, init_rng):
        n_seed = SEED_H * SEED_W
        self.noise_dense = Dense(latent_dim, NOISE_CHANNELS * n_seed, init_rng, name="noise_dense")
        self.noise_act = Activation("relu", name="noise_relu")
        self.noise_reshape = Reshape((SEED_H, SEED_W, NOISE_CHANNELS), name="noise_reshape")
        self.embedding = Embedding(EMBED_VOCAB, 1, init_rng, name="label_embedding")
        self.label_dense = Dense(1, n_seed, init_rng, name="label_dense")
        self.label_act = Activation("linear", name="label_linear")
        self.label_reshape = Reshape((SEED_H, SEED_W, 1), name="label_reshape")
        layers = []
        c_in = NOISE_CHANNELS + 1
        for i, (c_out, stride) in enumerate(zip(GEN_CHANNELS, GEN_STRIDES)):
            layers += [
                Conv2DTranspose(c_in, c_out, 5, stride, init_rng, name=f"deconv{i}"),
                BatchNorm(c_out, momentum=0.0, name=f"bn{i}"),
                Activation("relu", name=f"relu{i}"),
            ]
            c_in = c_out
        layers += [
            Conv2DTranspose(c_in, IMG_SHAPE[2], 5, GEN_STRIDES[-1], init_rng, name=f"deconv{len(GEN_CHANNELS)}"),
            Activation("tanh", name="tanh"),
        ]
        self.body = Sequential(layers, name="body")
        self.latent_dim = latent_dim

    @property
    def layers(self):
        return [self.noise_dense, self.embedding, self.label_dense] + self.body.layers

    def forward(self, labels, noise, training=False):
        labels = np.asarray(labels).reshape(-1, 1)
        n = self.noise_reshape.forward(self.noise_act.forward(self.noise_dense.forward(noise, training)))
        e = self.embedding.forward(labels, training)
        lab = self.label_reshape.forward(self.label_act.forward(self.label_dense.forward(e, training)))
        combined = np.concatenate([n, lab.astype(n.dtype)], axis=-1)
        return self.body.forward(combined, training)

    def backward(self, dimg):
        d = self.body.backward(dimg)
        dn, dl = d[..., :NOISE_CHANNELS], d[..., NOISE_CHANNELS:]
        self.noise_dense.backward(self.noise_act.backward(self.noise_reshape.backward(dn)))
        self.embedding.backward(self.label_dense.backward(self.label_act.backward(self.label_reshape.backward(dl))))

    def predict(self, labels, noise, chunk=32):
        labels = np.asarray(labels).reshape(-1)
        parts = [self.forward(labels[i : i + chunk], noise[i : i + chunk], training=False)
                 for i in range(0, len(labels), chunk)]
        return np.concatenate(parts) if parts else np.zeros((0,) + IMG_SHAPE, np.float32)


def _named(prefix, layers, store="params", only=None):
    out = {}
    for layer in layers:
        if only is not None and not only(layer):
            continue
        for k, v in getattr(layer, store).items():
            out[f"{prefix}/{layer.name}/{k}"] = v
    return out


def build_discriminator(cfg: TrainConfig, init_rng=None, dropout_rng=None) -> Discriminator:
    init_rng = init_rng if init_rng is not None else np.random.default_rng(cfg.seed)
    dropout_rng = dropout_rng if dropout_rng is not None else np.random.default_rng(cfg.seed + 1)
    return Discriminator(cfg.num_classes, init_rng, dropout_rng)


def build_generator(cfg: TrainConfig, init_rng=None) -> Generator:
    init_rng = init_rng if init_rng is not None else np.random.default_rng(cfg.seed)
    return Generator(cfg.latent_dim, init_rng)


class Composite:
    """Generator feeding the discriminator.

    ``trainable_params`` is what the composite optimizer may touch: every
    generator tensor plus the discriminator's batch-norm gamma/beta.
    """

    def __init__(self, generator: Generator, discriminator: Discriminator):
        self.generator = generator
        self.discriminator = discriminator

    def forward(self, labels, noise, training=False):
        img = self.generator.forward(labels, noise, training)
        return self.discriminator.forward(img, training)

    def backward(self, d_validity_logits, d_label_logits):
        dimg = self.discriminator.backward(d_validity_logits, d_label_logits)
        self.generator.backward(dimg)

    def trainable(self, store="params"):
        out = _named("generator", self.generator.layers, store)
        out.update(_named("discriminator", self.discriminator.layers, store,
                          only=lambda l: isinstance(l, BatchNorm)))
        return out


def build_composite(generator, discriminator) -> Composite:
    return Composite(generator, discriminator)


def _record(validity, probs, valid_target, labels) -> LossRecord:
    v_loss, _ = bce_loss(validity.reshape(-1), valid_target)
    c_loss, _ = scce_loss(probs, labels)
    if not (np.isfinite(v_loss) and np.isfinite(c_loss)):
        raise TrainingError(f"non-finite loss (validity {v_loss}, class {c_loss})")
    return LossRecord(v_loss + c_loss, v_loss, c_loss,
                      binary_accuracy(validity, valid_target), class_accuracy(probs, labels))


# ------------------------------------------------------------------ trainer

class ACGAN:
    """Generator, discriminator, their optimizers and the random streams."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        init_rng, dropout_rng, self.noise_rng, self.label_rng, self.shuffle_rng = (
            np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(5)
        )
        self.generator = build_generator(cfg, init_rng)
        self.discriminator = build_discriminator(cfg, init_rng, dropout_rng)
        self.composite = build_composite(self.generator, self.discriminator)
        self.d_opt = Adam(cfg.lr, cfg.beta1)
        self.g_opt = Adam(cfg.lr, cfg.beta1)
        self.history = TrainingHistory()
        self.epochs_done = 0

    # parameter views -------------------------------------------------------
    def discriminator_params(self, store="params"):
        return _named("discriminator", self.discriminator.layers, store)

    def generator_params(self, store="params"):
        return _named("generator", self.generator.layers, store)

    def tensors(self) -> dict[str, np.ndarray]:
        """Every persistent tensor: weights, moving statistics and Adam state."""
        out = {}
        for store in ("params", "buffers"):
            out.update(self.generator_params(store))
            out.update(self.discriminator_params(store))
        out.update({f"adam_d/{k}": v for k, v in self.d_opt.state().items()})
        out.update({f"adam_g/{k}": v for k, v in self.g_opt.state().items()})
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        for store in ("params", "buffers"):
            for layers, prefix in ((self.generator.layers, "generator"),
                                   (self.discriminator.layers, "discriminator")):
                for layer in layers:
                    target = getattr(layer, store)
                    for k in target:
                        key = f"{prefix}/{layer.name}/{k}"
                        if key not in tensors:
                            raise ConfigError(f"checkpoint is missing tensor {key}")
                        if tensors[key].shape != target[k].shape:
                            raise ConfigError(f"tensor {key} has shape {tensors[key].shape}, "
                                              f"expected {target[k].shape}")
                        target[k] = tensors[key].astype(np.float32).copy()
        for name, opt in (("adam_d/", self.d_opt), ("adam_g/", self.g_opt)):
            opt.load_state({k[len(name):]: v for k, v in tensors.items() if k.startswith(name)})

    # sampling ------------------------------------------------------------
    def noise(self, n):
        return self.noise_rng.normal(0.0, self.cfg.noise_stddev, (n, self.cfg.latent_dim)).astype(np.float32)

    def fake_labels(self, n):
        if self.cfg.paper_faithful:
            return np.zeros(n, dtype=np.int64)
        return self.label_rng.integers(0, self.cfg.num_classes, n)

    def generator_labels(self, n):
        high = self.cfg.num_classes - 1 if self.cfg.paper_faithful else self.cfg.num_classes
        return self.label_rng.integers(0, high, n)

    # steps ---------------------------------------------------------------
    def _train_discriminator(self, x, valid_target, labels) -> LossRecord:
        D = self.discriminator
        validity, probs = D.forward(x, training=True)
        rec = _record(validity, probs, valid_target, labels)
        D.backward(sigmoid_bce_grad(validity, valid_target), softmax_scce_grad(probs, labels))
        self.d_opt.step(self.discriminator_params(), self.discriminator_params("grads"))
        return rec

    def discriminator_step(self, real_batch, real_labels):
        """One update on real maps, one on generated maps; returns (real, fake) records."""
        real_batch = np.asarray(real_batch, dtype=np.float32)
        real_labels = np.asarray(real_labels).reshape(-1)
        b = len(real_batch)
        noise = self.noise(b)
        sampled = self.fake_labels(b)
        fakes = self.generator.predict(sampled, noise)
        real = self._train_discriminator(real_batch, np.ones(b, np.float32), real_labels)
        fake = self._train_discriminator(fakes, np.zeros(b, np.float32), sampled)
        return real, fake

    def generator_step(self) -> LossRecord:
        n = self.cfg.num_classes * self.cfg.batch_size
        noise = self.noise(n)
        labels = self.generator_labels(n)
        trick = np.ones(n, np.float32)
        validity, probs = self.composite.forward(labels, noise, training=True)
        rec = _record(validity, probs, trick, labels)
        self.composite.backward(sigmoid_bce_grad(validity, trick), softmax_scce_grad(probs, labels))
        self.g_opt.step(self.composite.trainable(), self.composite.trainable("grads"))
        return rec

    def evaluate(self, x_test, y_test):
        """Test-split records with no parameter updates (inference mode)."""
        n = len(x_test)
        C = self.cfg.num_classes
        v, p = self.discriminator.predict(np.asarray(x_test, np.float32))
        real = _record(v, p, np.ones(n, np.float32), y_test)
        sampled = self.generator_labels(n)
        fakes = self.generator.predict(sampled, self.noise(n))
        v, p = self.discriminator.predict(fakes)
        fake = _record(v, p, np.zeros(n, np.float32), sampled)
        sampled = self.generator_labels(C * n)
        v, p = self.discriminator.predict(self.generator.predict(sampled, self.noise(C * n)))
        gen = _record(v, p, np.ones(C * n, np.float32), sampled)
        return gen, real, fake

    def sample(self, labels, noise=None, seed=None):
        """Generate maps; returns ``(unit, raw)`` with unit = 0.5 * raw + 0.5."""
        labels = np.asarray(labels).reshape(-1)
        if labels.size and (labels.min() < 0 or labels.max() >= self.cfg.num_classes):
            raise DomainError(f"labels must lie in [0, {self.cfg.num_classes})")
        if noise is None:
            rng = np.random.default_rng(seed)
            noise = rng.normal(0.0, self.cfg.noise_stddev, (labels.size, self.cfg.latent_dim))
        raw = self.generator.predict(labels, np.asarray(noise, np.float32))
        return 0.5 * raw + 0.5, raw

    # loop ------------------------------------------------------------------
    def train(self, x_train, y_train, x_test, y_test, out_dir=None, export_samples=True,
              figures=False, on_epoch=None) -> TrainingHistory:
        """Run ``cfg.epochs`` epochs, appending to ``self.history``.

        With ``out_dir`` set, checkpoints and the history file go to
        ``out_dir`` every ``checkpoint_every`` epochs and a 2 x 2 sample grid
        (PGM + WAV) is exported after each epoch.
        """
        cfg = self.cfg
        x_train = np.asarray(x_train, np.float32)
        y_train = np.asarray(y_train).reshape(-1)
        if len(x_train) == 0:
            raise EmptyInputError("training set is empty")
        if len(x_train) < cfg.batch_size:
            raise EmptyInputError(f"training set has {len(x_train)} items, fewer than batch size {cfg.batch_size}")
        if len(x_train) != len(y_train):
            raise ConfigError("images and labels differ in length")
        n_batches = len(x_train) // cfg.batch_size

        for _ in range(cfg.epochs):
            epoch = self.epochs_done
            order = self.shuffle_rng.permutation(len(x_train))
            gen_recs, real_recs, fake_recs = [], [], []
            for b in range(n_batches):
                idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
                try:
                    real, fake = self.discriminator_step(x_train[idx], y_train[idx])
                    gen = self.generator_step()
                except TrainingError as exc:
                    raise TrainingError(f"epoch {epoch + 1}, batch {b + 1}: {exc}") from None
                real_recs.append(real)
                fake_recs.append(fake)
                gen_recs.append(gen)
            h = self.history
            h.train["generator"].append(LossRecord.mean(gen_recs))
            h.train["discriminator_real"].append(LossRecord.mean(real_recs))
            h.train["discriminator_fake"].append(LossRecord.mean(fake_recs))
            if len(x_test):
                gen, real, fake = self.evaluate(x_test, y_test)
                h.test["generator"].append(gen)
                h.test["discriminator_real"].append(real)
                h.test["discriminator_fake"].append(fake)
            self.epochs_done += 1
            log.info("epoch %d done", self.epochs_done)
            if on_epoch is not None:
                on_epoch(self, epoch)
            if out_dir is not None:
                self._persist(out_dir, epoch, export_samples, figures)
        return self.history

    def _persist(self, out_dir, epoch, export_samples, figures):
        from . import export
        from .checkpoint import save_checkpoint

        os.makedirs(out_dir, exist_ok=True)
        if (epoch + 1) % self.cfg.checkpoint_every == 0:
            save_checkpoint(self, os.path.join(out_dir, f"ckpt-{epoch + 1:04d}.acgn"))
            self.history.save(os.path.join(out_dir, "history.jsonl"))
            if figures:
                from .plots import plot_history
                plot_history(self.history, os.path.join(out_dir, "loss_curves.png"))
        if export_samples:
            labels = np.array([num for _ in range(2) for num in range(2)]) % self.cfg.num_classes
            unit, raw = self.sample(labels, noise=self.noise(len(labels)))
            export.export_samples(unit, raw, os.path.join(out_dir, "samples"), prefix=f"epoch_{epoch}",
                                  figure=figures)
        self.history.save(os.path.join(out_dir, "history.jsonl"))


# ---------------------------------------------------------------- classify

@dataclass
class ClassifyResult:
    path: str
    segment_probs: np.ndarray | None = None
    error: str | None = None

    @property
    def probs(self):
        return None if self.segment_probs is None or not len(self.segment_probs) else self.segment_probs.mean(axis=0)

    @property
    def label(self):
        p = self.probs
        return None if p is None else int(np.argmax(p))

    @property
    def no_cough(self):
        return self.error is None and (self.segment_probs is None or not len(self.segment_probs))


def segment_maps(buffer, preprocess_cfg=None, segment_cfg=None):
    """WAV buffer -> stacked feature maps, one per detected cough."""
    from .dsp import PreprocessConfig, SegmentConfig, fix_length, preprocess_cough, segment_cough

    processed, fs = preprocess_cough(buffer, preprocess_cfg or PreprocessConfig())
    segs = segment_cough(processed.samples, fs, segment_cfg or SegmentConfig()).segments
    maps = [features.featurize(fix_length(s, features.SEGMENT_SAMPLES)).values for s in segs]
    return np.stack(maps) if maps else np.zeros((0,) + IMG_SHAPE, np.float32)


def classify(model: ACGAN, audio_files) -> list[ClassifyResult]:
    """Per-file class probabilities from the discriminator's label head."""
    from .wavio import load_wav

    results = []
    for path in audio_files:
        try:
            maps = segment_maps(load_wav(path))
        except Exception as exc:  # reported per file, never fatal
            results.append(ClassifyResult(str(path), error=f"{type(exc).__name__}: {exc}"))
            continue
        if len(maps) == 0:
            results.append(ClassifyResult(str(path), segment_probs=np.zeros((0, model.cfg.num_classes))))
            continue
        _, probs = model.discriminator.predict(maps)
        results.append(ClassifyResult(str(path), segment_probs=probs))
    return results


def config_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["class_names"] = list(cfg.class_names)
    return d
