"""Multi-modal trajectory prediction in polar coordinates.

The package is a small numpy/scipy library: a float64 autodiff engine
(:mod:`polartraj.autodiff`, :mod:`polartraj.nn`), polar geometry
(:mod:`polartraj.geometry`), a synthetic driving-scene generator and codec
(:mod:`polartraj.scene`, :mod:`polartraj.generator`, :mod:`polartraj.sceneio`),
the relative-embedding attention model (:mod:`polartraj.ret`,
:mod:`polartraj.encoder`, :mod:`polartraj.heads`, :mod:`polartraj.model`),
dual-coordinate training losses (:mod:`polartraj.objective`), forecasting
metrics and k-means ensembling (:mod:`polartraj.metrics`,
:mod:`polartraj.ensemble`), and a training/evaluation CLI
(:mod:`polartraj.cli`).
"""

__version__ = "0.1.0"
