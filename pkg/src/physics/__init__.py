"""
Ladder physics: atomic constants, Lindblad steady states, Doppler averaging,
spectra, lock-in error signals and noise models.
"""
