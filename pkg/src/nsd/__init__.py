"""Noise models for soliton spectral amplitudes in the nonlinear spectral domain.

Submodules
----------
units      fibre constants, normalisation and the noise PSD
waveform   time grids, signals, soliton and N-soliton synthesis
nft        Zakharov-Shabat scattering and discrete spectrum extraction
ssfm       split-step simulation of the stochastic NLSE
perturb    soliton perturbation SDEs and spectral-amplitude channel models
analytics  closed-form noise statistics
harness    Monte Carlo runner, moment estimation, reports
"""

__version__ = "0.1.0"
