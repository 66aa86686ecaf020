"""Adversarial autoencoder with a Gaussian-reparameterized encoder.

Training alternates three phases per minibatch:

1. reconstruction: encoder and decoder minimise ``0.5 ||x - G(z')||^2``;
2. discriminator: the latent discriminator learns prior draws (label 1)
   against encoder samples ``z'`` (label 0);
3. adversarial: the encoder alone minimises ``-log D(z')``.

The KL divergence to the standard-normal prior is only tracked as a
diagnostic; it is not part of any update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import NumericalError
from .nn import (
    DenseNet,
    binary_cross_entropy,
    checkpoint_document,
    gaussian_nll_reconstruction,
    init_net,
    make_optimizer,
    minibatches,
    mlp_specs,
    net_from_dict,
    optimizer_step,
)
from .seeding import derive_seed

SUBNETS = ("encoder", "mu_head", "log_sigma_head", "decoder", "discriminator")
ENCODER_PARTS = ("encoder", "mu_head", "log_sigma_head")


@dataclass
class AaeModel:
    encoder: DenseNet
    mu_head: DenseNet
    log_sigma_head: DenseNet
    decoder: DenseNet
    discriminator: DenseNet
    log_sigma_clamp: tuple[float, float] = (-6.0, 2.0)

    def __post_init__(self):
        latent = self.mu_head.output_dim
        if latent < 1:
            raise ValueError("latent_dim must be at least 1")
        if self.log_sigma_head.output_dim != latent:
            raise ValueError("mu and log-sigma heads disagree on latent_dim")
        if self.mu_head.input_dim != self.encoder.output_dim or self.log_sigma_head.input_dim != self.encoder.output_dim:
            raise ValueError("heads do not match the encoder trunk")
        if self.decoder.input_dim != latent or self.discriminator.input_dim != latent:
            raise ValueError("decoder and discriminator must take latent vectors")
        if self.decoder.output_dim != self.encoder.input_dim:
            raise ValueError("decoder must map back to the input dimension")
        if self.discriminator.output_dim != 1 or self.discriminator.specs[-1].activation != "sigmoid":
            raise ValueError("latent discriminator needs a single sigmoid output")
        lo, hi = self.log_sigma_clamp
        if not lo < hi:
            raise ValueError("log_sigma clamp must satisfy low < high")

    @property
    def latent_dim(self) -> int:
        return self.mu_head.output_dim

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim

    def subnet(self, name: str) -> DenseNet:
        return getattr(self, name)

    def copy(self) -> "AaeModel":
        return AaeModel(*(self.subnet(n).copy() for n in SUBNETS), tuple(self.log_sigma_clamp))

    def to_dict(self) -> dict:
        doc = checkpoint_document({n: self.subnet(n) for n in SUBNETS})
        doc["log_sigma_clamp"] = list(self.log_sigma_clamp)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "AaeModel":
        nets = [net_from_dict(doc["networks"][n]) for n in SUBNETS]
        return cls(*nets, tuple(doc["log_sigma_clamp"]))


def build_aae(
    input_dim: int,
    latent_dim: int = 16,
    encoder_hidden: Sequence[int] = (64,),
    decoder_hidden: Sequence[int] = (64,),
    discriminator_hidden: Sequence[int] = (32,),
    seed: int = 0,
    log_sigma_clamp=(-6.0, 2.0),
) -> AaeModel:
    if latent_dim < 1:
        raise ValueError("latent_dim must be at least 1")
    if not encoder_hidden:
        raise ValueError("the encoder trunk needs at least one hidden layer")
    trunk_out = encoder_hidden[-1]
    nets = {
        "encoder": mlp_specs([input_dim, *encoder_hidden], output="relu"),
        "mu_head": mlp_specs([trunk_out, latent_dim]),
        "log_sigma_head": mlp_specs([trunk_out, latent_dim]),
        "decoder": mlp_specs([latent_dim, *decoder_hidden, input_dim]),
        "discriminator": mlp_specs([latent_dim, *discriminator_hidden, 1], output="sigmoid"),
    }
    built = {name: init_net(specs, derive_seed(seed, "aae-init", i)) for i, (name, specs) in enumerate(nets.items())}
    return AaeModel(**built, log_sigma_clamp=tuple(log_sigma_clamp))


# --- analytic pieces --------------------------------------------------------------


@dataclass
class _EncoderPass:
    trunk_acts: list
    mu_acts: list
    ls_acts: list
    mu: np.ndarray
    log_sigma: np.ndarray
    clamp_mask: np.ndarray


def _encode_pass(model: AaeModel, x) -> _EncoderPass:
    trunk = model.encoder.forward(x)
    mu_acts = model.mu_head.forward(trunk[-1])
    ls_acts = model.log_sigma_head.forward(trunk[-1])
    raw = ls_acts[-1]
    lo, hi = model.log_sigma_clamp
    log_sigma = np.clip(raw, lo, hi)
    mask = ((raw > lo) & (raw < hi)).astype(np.float64)
    return _EncoderPass(trunk, mu_acts, ls_acts, mu_acts[-1], log_sigma, mask)


def encode(model: AaeModel, x) -> tuple[np.ndarray, np.ndarray]:
    """``(mu, log_sigma)`` of the Gaussian posterior; ``log_sigma`` is clamped."""
    x = np.asarray(x, dtype=np.float64)
    p = _encode_pass(model, x)
    if x.ndim == 1:
        return p.mu[0], p.log_sigma[0]
    return p.mu, p.log_sigma


def reparameterize(mu, log_sigma, eta) -> np.ndarray:
    return np.asarray(mu) + np.exp(log_sigma) * np.asarray(eta)


def decode(model: AaeModel, z) -> np.ndarray:
    out = model.decoder(z)
    return out[0] if np.ndim(z) == 1 else out


def kl_to_standard_normal(mu, log_sigma) -> float | np.ndarray:
    """``KL(N(mu, sigma^2) || N(0, I))`` summed over latent dims (per row for batches)."""
    mu = np.asarray(mu, dtype=np.float64)
    ls = np.asarray(log_sigma, dtype=np.float64)
    # expm1 keeps the sigma^2 - 1 - 2 log sigma part exactly zero at log_sigma = 0
    terms = 0.5 * (mu * mu + np.expm1(2.0 * ls) - 2.0 * ls)
    total = terms.sum(axis=-1)
    return float(total) if np.ndim(total) == 0 else total


def _encoder_backward(model: AaeModel, p: _EncoderPass, eta: np.ndarray, grad_z: np.ndarray) -> dict:
    """Gradients for trunk and heads given ``dL/dz`` with ``z = mu + exp(ls) * eta``."""
    grad_mu = grad_z
    grad_ls = grad_z * np.exp(p.log_sigma) * eta * p.clamp_mask
    mu_grads, h_from_mu = model.mu_head.backward(p.mu_acts, grad_mu)
    ls_grads, h_from_ls = model.log_sigma_head.backward(p.ls_acts, grad_ls)
    trunk_grads, _ = model.encoder.backward(p.trunk_acts, h_from_mu + h_from_ls)
    return {"encoder": trunk_grads, "mu_head": mu_grads, "log_sigma_head": ls_grads}


def reconstruction_loss_and_grads(model: AaeModel, x, eta) -> tuple[float, dict]:
    p = _encode_pass(model, x)
    z = reparameterize(p.mu, p.log_sigma, eta)
    dec_acts = model.decoder.forward(z)
    loss, grad_out = gaussian_nll_reconstruction(np.atleast_2d(x), dec_acts[-1])
    dec_grads, grad_z = model.decoder.backward(dec_acts, grad_out)
    grads = _encoder_backward(model, p, eta, grad_z)
    grads["decoder"] = dec_grads
    return loss, grads


def adversarial_loss_and_grads(model: AaeModel, x, eta) -> tuple[float, dict]:
    """Non-saturating encoder loss ``mean(-log D(z'))`` and encoder gradients."""
    p = _encode_pass(model, x)
    z = reparameterize(p.mu, p.log_sigma, eta)
    d_acts = model.discriminator.forward(z)
    loss, grad_out = binary_cross_entropy(d_acts[-1], 1.0)
    _, grad_z = model.discriminator.backward(d_acts, grad_out)
    return loss, _encoder_backward(model, p, eta, grad_z)


def discriminator_loss_and_grads(model: AaeModel, prior_draws, fake_latents) -> tuple[float, list]:
    real_acts = model.discriminator.forward(prior_draws)
    fake_acts = model.discriminator.forward(fake_latents)
    real_loss, real_grad = binary_cross_entropy(real_acts[-1], 1.0)
    fake_loss, fake_grad = binary_cross_entropy(fake_acts[-1], 0.0)
    g_real, _ = model.discriminator.backward(real_acts, real_grad)
    g_fake, _ = model.discriminator.backward(fake_acts, fake_grad)
    return real_loss + fake_loss, [a + b for a, b in zip(g_real, g_fake)]


# --- training -----------------------------------------------------------------------


@dataclass(frozen=True)
class AaeTrainConfig:
    latent_dim: int = 16
    encoder_hidden: tuple = (64,)
    decoder_hidden: tuple = (64,)
    discriminator_hidden: tuple = (32,)
    lr_reconstruction: float = 1e-3
    lr_discriminator: float = 5e-4
    lr_adversarial: float = 5e-4
    batch_size: int = 64
    epochs: int = 30
    log_sigma_clamp: tuple = (-6.0, 2.0)
    seed: int = 0

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be at least 1")
        lo, hi = self.log_sigma_clamp
        if not lo < hi:
            raise ValueError("log_sigma clamp must satisfy low < high")
        for name in ("lr_reconstruction", "lr_discriminator", "lr_adversarial"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("need batch_size >= 1 and epochs >= 0")


@dataclass(frozen=True)
class EpochMetrics:
    reconstruction: float
    discriminator: float
    adversarial: float
    kl: float

    def to_dict(self) -> dict:
        return {
            "reconstruction": self.reconstruction,
            "discriminator": self.discriminator,
            "adversarial": self.adversarial,
            "kl": self.kl,
        }


@dataclass
class AaeTrainer:
    """Holds one Adam state per (phase, sub-network) pair."""

    model: AaeModel
    config: AaeTrainConfig = field(default_factory=AaeTrainConfig)
    optimizers: dict = field(default_factory=dict)

    def __post_init__(self):
        self.config.validate()
        if not self.optimizers:
            c = self.config
            for name in (*ENCODER_PARTS, "decoder"):
                self.optimizers[f"reconstruction/{name}"] = make_optimizer("adam", c.lr_reconstruction, self.model.subnet(name))
            for name in ENCODER_PARTS:
                self.optimizers[f"adversarial/{name}"] = make_optimizer("adam", c.lr_adversarial, self.model.subnet(name))
            self.optimizers["discriminator/discriminator"] = make_optimizer(
                "adam", c.lr_discriminator, self.model.discriminator
            )

    def _apply(self, phase: str, grads: dict) -> None:
        for name, g in grads.items():
            optimizer_step(self.optimizers[f"{phase}/{name}"], self.model.subnet(name), g)

    def reconstruction_step(self, batch_x, rng: np.random.Generator) -> float:
        x = np.atleast_2d(batch_x)
        eta = rng.standard_normal((x.shape[0], self.model.latent_dim))
        loss, grads = reconstruction_loss_and_grads(self.model, x, eta)
        self._apply("reconstruction", grads)
        return loss

    def discriminator_step(self, batch_x, rng: np.random.Generator) -> float:
        x = np.atleast_2d(batch_x)
        n, k = x.shape[0], self.model.latent_dim
        mu, ls = encode(self.model, x)
        fake = reparameterize(mu, ls, rng.standard_normal((n, k)))  # no gradient flows to the encoder
        prior = rng.standard_normal((n, k))
        loss, grads = discriminator_loss_and_grads(self.model, prior, fake)
        self._apply("discriminator", {"discriminator": grads})
        return loss

    def adversarial_encoder_step(self, batch_x, rng: np.random.Generator) -> float:
        x = np.atleast_2d(batch_x)
        eta = rng.standard_normal((x.shape[0], self.model.latent_dim))
        loss, grads = adversarial_loss_and_grads(self.model, x, eta)
        self._apply("adversarial", grads)
        return loss


def train(model: AaeModel, dataset: Dataset, config: AaeTrainConfig) -> tuple[AaeModel, list[EpochMetrics]]:
    """Train a copy of ``model``; the argument is left untouched."""
    config.validate()
    if len(dataset) == 0:
        raise ValueError("cannot train an autoencoder on an empty dataset")
    if dataset.feature_dim != model.input_dim:
        raise ValueError(f"dataset dim {dataset.feature_dim} != model input dim {model.input_dim}")
    trainer = AaeTrainer(model.copy(), config)
    rng = np.random.default_rng(derive_seed(config.seed, "aae-train"))
    x_all = dataset.features
    history = []
    for _ in range(config.epochs):
        sums = np.zeros(3)
        weight = 0
        for idx in minibatches(len(dataset), config.batch_size, rng):
            batch = x_all[idx]
            losses = (
                trainer.reconstruction_step(batch, rng),
                trainer.discriminator_step(batch, rng),
                trainer.adversarial_encoder_step(batch, rng),
            )
            sums += len(idx) * np.array(losses)
            weight += len(idx)
        mu, ls = encode(trainer.model, x_all)
        means = sums / weight
        kl = float(np.mean(kl_to_standard_normal(mu, ls)))
        if not np.all(np.isfinite([*means, kl])):
            raise NumericalError("autoencoder training diverged")
        history.append(EpochMetrics(*map(float, means), kl))
    return trainer.model, history


def synthesize(model: AaeModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Decode ``count`` standard-normal latent draws; returns a ``(count, d)`` array."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return np.zeros((0, model.input_dim))
    eta = rng.standard_normal((count, model.latent_dim))
    return model.decoder(eta)
