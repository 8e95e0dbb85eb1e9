"""Element parameters shipped with the priors.

DFT-D2 values (Grimme, J. Comput. Chem. 27, 1787 (2006)): C6 in J·nm⁶/mol,
van der Waals radii R0 in Å, keyed by atomic number.
"""

from common.units import J_NM6_PER_MOL_TO_EV_A6

D2_C6_J_NM6_PER_MOL = {
    1: 0.14,  # H
    6: 1.75,  # C
    7: 1.23,  # N
    8: 0.70,  # O
    9: 0.75,  # F
    16: 5.57,  # S
    17: 5.07,  # Cl
}

D2_R0_ANGSTROM = {
    1: 1.001,
    6: 1.452,
    7: 1.397,
    8: 1.342,
    9: 1.287,
    16: 1.683,
    17: 1.639,
}

# eV·Å⁶
D2_C6 = {z: c6 * J_NM6_PER_MOL_TO_EV_A6 for z, c6 in D2_C6_J_NM6_PER_MOL.items()}

D2_DEFAULT_STEEPNESS = 20.0
# Global scaling for PBE.
D2_DEFAULT_S6 = 0.75

# Universal screening function: (coefficient, exponent) pairs.
ZBL_SCREENING = (
    (0.18175, 3.19980),
    (0.50986, 0.94229),
    (0.28022, 0.40290),
    (0.02817, 0.20162),
)
ZBL_LENGTH_PREFACTOR = 0.8854
ZBL_EXPONENT = 0.23
