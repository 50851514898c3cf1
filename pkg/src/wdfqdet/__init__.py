"""Wavelet-decoupled multispectral detection pipeline."""
