"""vade: visual attribution through denoising-diffusion editing, desk scale.

Trains a small text-conditioned diffusion model on a procedural chest-phantom
corpus, generates minimally perturbed healthy counterfactuals of diseased
scans by guide-initialized reverse diffusion, and reads disease evidence off
the signed difference map. Ships the numeric substrate (seeded RNG streams,
convolution, Jacobi eigendecomposition), the phantom generator, schedules and
samplers, an optional learned latent codec, attribution and metric suites
(SSIM / MS-SSIM / Frechet), plus a CLI and a small HTTP service.
"""

__version__ = "0.1.0"
