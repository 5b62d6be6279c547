"""Multi-resolution physics-informed recurrent surrogate for sEMG-driven elbow motion."""

from . import autodiff, cli, datagen, dynamics, muscle, network, physics, trainer, wavelet

__all__ = ["autodiff", "cli", "datagen", "dynamics", "muscle", "network", "physics", "trainer", "wavelet"]
__version__ = "0.1.0"
