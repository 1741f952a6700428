"""RED-Net: very deep convolutional encoder-decoder networks with
symmetric skip connections, for image denoising and super-resolution,
on a small numpy engine."""

__version__ = "0.1.0"
