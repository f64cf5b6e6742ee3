"""Neural demoireing guide refiner.

Trains a multi-scale network on focused/aligned/ground-truth triples from
the dual-camera synthetic dataset layout and exports refined guide frames
(PNG) for the core pipeline's guided mode.  The dataset directory and PNG
files are the only interfaces to the core package.
"""

__version__ = "0.1.0"
