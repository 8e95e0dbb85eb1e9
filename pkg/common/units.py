"""Internal unit system: Å, eV, eV/Å, amu, fs, K, elementary charge."""

import math

# CODATA 2018 exact / recommended values.
AVOGADRO = 6.02214076e23
ELEMENTARY_CHARGE = 1.602176634e-19  # C
AMU_KG = 1.66053906660e-27

# Coulomb constant, eV·Å/e².
COULOMB_CONSTANT = 14.399645
# Boltzmann constant, eV/K.
BOLTZMANN = 8.617333262e-5
# Bohr radius, Å.
BOHR_RADIUS = 0.529177

# 1 J/mol expressed in eV.
J_PER_MOL_TO_EV = 1.0 / (AVOGADRO * ELEMENTARY_CHARGE)
# J·nm⁶/mol -> eV·Å⁶.
J_NM6_PER_MOL_TO_EV_A6 = J_PER_MOL_TO_EV * 1.0e6

# Acceleration of 1 eV/Å acting on 1 amu, in Å/fs². The same factor turns
# eV/amu into (Å/fs)².
EV_PER_AMU_TO_A2_PER_FS2 = ELEMENTARY_CHARGE / AMU_KG * 1.0e-10

FS_PER_PS = 1000.0
SECONDS_PER_DAY = 86400.0

PI = math.pi
