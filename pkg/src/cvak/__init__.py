"""Toolkit for crafting and evaluating adversarial attacks on complex-valued inputs.

Core pieces: a reverse-mode autodiff engine producing Wirtinger gradients
(`autodiff`), small real- and complex-valued classifiers over complex images
(`models`), complex sign-gradient attacks (`attacks_gradient`), magnitude-
preserving phase attacks and phase-preserving magnitude attacks
(`attacks_phase`), synthetic datasets (`data`), a training/robustness-sweep
harness (`harness`), and independent oracles for testing (`verify`).
"""

__version__ = "0.1.0"

from . import attacks_gradient, attacks_phase, autodiff, data, harness, models, verify  # noqa: F401
