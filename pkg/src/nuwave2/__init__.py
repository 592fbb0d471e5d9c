"""Neural audio upsampling to 48 kHz from arbitrary input rates with a diffusion model."""

__version__ = "0.1.0"
