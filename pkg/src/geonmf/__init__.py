"""Separable NMF topic discovery via extreme points and subspace clustering."""

__version__ = "0.1.0"
