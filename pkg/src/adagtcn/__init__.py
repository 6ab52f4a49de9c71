"""AdaGTCN: adaptive graph learning, deep-neighborhood graph convolution and
dilated inception temporal convolution for EEG reading-task classification."""

__version__ = "0.1.0"
