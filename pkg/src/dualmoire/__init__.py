"""Dual-camera video demoireing toolkit.

A focused frame carries crisp texture plus moire; a synchronized defocused
frame is blurry but moire-free.  This package synthesizes such pairs from
clean images, aligns the defocused frame onto the focused one, and removes
the moire with a joint bilateral filter steered by a moire-free guide.
"""

from dualmoire.imgcore import Homography, Image, load_png, save_png

__all__ = ["Image", "Homography", "load_png", "save_png"]
__version__ = "0.1.0"
