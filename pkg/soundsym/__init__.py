"""Sound-symbolism robustness toolkit: corpus ingestion, feature annotation,
Dirichlet multilevel regression with phylogenetic and areal controls, and
HPDI/ROPE effect evaluation."""

__version__ = '0.1.0'
