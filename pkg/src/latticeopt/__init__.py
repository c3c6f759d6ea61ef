"""Multiscale topology optimization of functionally graded lattice structures.

Subpackages cover the full pipeline: quasi-stochastic beam-lattice RVE
generation and homogenization (``beam_rve``), isotropic projection
(``isotropy``), Monte Carlo density estimation and the aspect-ratio map
(``densmap``), the constrained neural material model (``pann``), the
voxel-grid FE kernel (``fe_core``), the relaxed two-field compliance
optimizer (``optimizer``), and a command-line front end (``cli``).
"""

__version__ = "0.1.0"
