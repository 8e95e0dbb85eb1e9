"""Element lookups backed by ``ase.data``."""

from ase.data import atomic_masses, atomic_numbers, chemical_symbols

from common.exceptions import ElementError


def atomic_number(symbol: str) -> int:
    key = symbol.strip()
    key = key[:1].upper() + key[1:].lower()
    number = atomic_numbers.get(key)
    if number is None or number == 0:
        raise ElementError(f"unknown element symbol {symbol!r}")
    return number


def element_symbol(number: int) -> str:
    if not 0 < number < len(chemical_symbols):
        raise ElementError(f"no element with atomic number {number}")
    return chemical_symbols[number]


def atomic_mass(number: int) -> float:
    if not 0 < number < len(atomic_masses):
        raise ElementError(f"no mass for atomic number {number}")
    return float(atomic_masses[number])
