"""Multi-task Gaussian processes with spectral mixture kernels.

Single-channel spectral kernels live in :mod:`mtgp.kernels`, the seven
multi-task families in :mod:`mtgp.multitask`, exact inference in
:mod:`mtgp.gp`, spectrum-driven initialization in :mod:`mtgp.spectral`,
training in :mod:`mtgp.trainer`, datasets in :mod:`mtgp.data`, and the
experiment command line in :mod:`mtgp.cli`.
"""

__version__ = "0.1.0"
