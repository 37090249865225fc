"""Phonon-mediated quasiparticle poisoning of superconducting qubits.

Simulation (phonon transport, quasiparticle rate equations, transmon
spectra) and the fits used to analyse injection experiments.
"""
__version__ = "0.1.0"
