"""Signature methods for quadratic hedging under rough and path-dependent volatility.

Subpackages, roughly bottom-up:

    tensoralg   truncated tensor algebra (words, shuffle, half-shuffle, tables)
    sigpath     signatures of sampled paths, lead-lag, expected signatures
    models      stochastic volatility simulators and signature representations
    fourier     Riccati characteristic functionals and Fourier pricing/hedging
    linhedge    linear-in-signature payoffs and hedging strategies
    sigvolreg   calibration of signature volatility from expected signatures
    deephedge   small feedforward/LSTM hedgers trained from scratch
    harness     experiment configs, payoffs, P&L evaluation, reports, CLI
"""

__version__ = "0.1.0"
