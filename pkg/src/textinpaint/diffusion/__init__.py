"""Diffusion machinery: schedule, denoisers, samplers, and training."""

from .denoisers import (OracleDenoiser, UNetDenoiser, assemble_input,
                        predict_clean, reconstruct_from_noise)
from .sampling import (make_tau, markov_step, posterior_coefficients,
                       sample_ddim, sample_markov, sample_non_markov)
from .schedule import NoiseSchedule, forward_noise, make_schedule
from .training import (DiffusionTrainConfig, DiffusionTrainReport,
                       heldout_reconstruction_loss, mse_loss,
                       records_to_diffusion_arrays, train_denoiser)
from .unet import CondUNet, TimeResBlock, sinusoidal_embedding

__all__ = [
    "NoiseSchedule", "make_schedule", "forward_noise",
    "CondUNet", "TimeResBlock", "sinusoidal_embedding",
    "OracleDenoiser", "UNetDenoiser", "assemble_input", "predict_clean",
    "reconstruct_from_noise",
    "markov_step", "posterior_coefficients", "sample_markov",
    "sample_non_markov", "sample_ddim", "make_tau",
    "DiffusionTrainConfig", "DiffusionTrainReport", "mse_loss",
    "train_denoiser", "records_to_diffusion_arrays",
    "heldout_reconstruction_loss",
]
