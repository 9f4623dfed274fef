"""Adaptive robust-loss learning for classification with noisy labels.

Subpackages: ``losses`` (robust loss families and their gradients),
``model`` (small MLP classifier with hand-derived backprop), ``data``
(synthetic datasets and label-noise injectors), ``meta`` (the bilevel
hyperparameter learning loop), ``theory`` (numeric verification of the
bounded-loss robustness guarantees), ``cli`` (experiment runner).
"""

__version__ = "0.1.0"
