"""Parallelized t-SNE mapping: embedding, adaptive density, water-track clustering."""
