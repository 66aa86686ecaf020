"""
An adversarial autoencoder as the synthetic-data generator
==========================================================

The encoder outputs a Gaussian posterior; a latent discriminator pushes
the aggregate posterior toward N(0, I), so decoding prior draws gives new
samples that look like the training data.
"""

import numpy as np

from pate_forge import aae
from pate_forge.data import ToyDatasetConfig, generate_toy_dataset
from pate_forge.evaluation import fid_between

data = generate_toy_dataset(ToyDatasetConfig(samples_per_class=300, feature_dim=16, seed=1))
model = aae.build_aae(data.feature_dim, latent_dim=4, seed=1)

# closed-form KL of the posterior to the prior, exactly zero at the prior
print("KL(N(0,1) || N(0,1)) =", aae.kl_to_standard_normal(np.zeros(4), np.zeros(4)))

untrained = aae.synthesize(model, 1000, np.random.default_rng(2))
print("FID of an untrained decoder vs data:", round(fid_between(untrained, data.features).fid, 2))

trained, history = aae.train(model, data, aae.AaeTrainConfig(latent_dim=4, epochs=20, seed=1))
for epoch in (0, 9, 19):
    m = history[epoch]
    print(f"epoch {epoch + 1:2d}: recon {m.reconstruction:.3f} disc {m.discriminator:.3f} adv {m.adversarial:.3f} kl {m.kl:.3f}")

samples = aae.synthesize(trained, 1000, np.random.default_rng(2))
print("FID after training:", round(fid_between(samples, data.features).fid, 2))

# the discriminator pushes the aggregate posterior (all codes pooled) toward N(0, I);
# after 20 epochs it is only roughly there
mu, log_sigma = aae.encode(trained, data.features)
codes = aae.reparameterize(mu, log_sigma, np.random.default_rng(3).standard_normal(mu.shape))
print("aggregate posterior mean:", codes.mean(0).round(2), "std:", codes.std(0).round(2))
