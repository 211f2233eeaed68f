"""Level 0-3 analysis toolkit for neural-network inference benchmarks."""

__version__ = "0.1.0"
__author__ = "tierbench Team"
__description__ = "Cost models, roofline predictions and measurement analysis for NN inference hardware"
