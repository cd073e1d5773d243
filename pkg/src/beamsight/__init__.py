"""Camera-driven mmWave beam-pair selection at desk scale.

A synthetic testbed (rendered scenes plus a geometric link-quality oracle)
feeds a two-stage pipeline: a crop classifier locates the transmitter and
receiver in the image, and a second classifier maps the resulting
detection bitmaps to the best beam pair. The crop classifier can be
rewritten into a fully convolutional network for single-pass inference.
"""

__version__ = "0.1.0"
