"""Unit conventions and conversion factors.

Energies of films, gaps and phonons are in µeV, transmon energies in GHz·h,
lengths in mm, times in µs, bias in mV, current in nA.
"""
from scipy import constants as const

#: GHz per µeV (E/h)
GHZ_PER_UEV = 1e-6 * const.e / const.h * 1e-9
#: µeV per GHz·h
UEV_PER_GHZ = 1.0 / GHZ_PER_UEV
#: µeV per mV of bias for a single electron charge
UEV_PER_MV = 1000.0
#: electrons per µs carried by 1 nA
ELECTRONS_PER_US_PER_NA = 1e-9 / const.e * 1e-6
#: Boltzmann constant in µeV/mK
KB_UEV_PER_MK = const.k / const.e * 1e6 * 1e-3


def ueV_to_GHz(energy_ueV):
    return energy_ueV * GHZ_PER_UEV


def GHz_to_ueV(energy_GHz):
    return energy_GHz * UEV_PER_GHZ
