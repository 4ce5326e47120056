__author__ = "Thorin Schiffer"

from typing import Dict, Iterable, List, Sequence, Tuple

from django_reach.exceptions import ConfigurationError


def parse_overrides(pairs: Iterable[str]) -> Dict[str, int]:
    """
    Parses constant overrides given on the command line
    @param pairs: strings in format NAME=integer
    @return: dict mapping constant names to their values
    """
    overrides = {}
    for pair in pairs or ():
        name, sep, value = pair.partition("=")
        name = name.strip()
        if not sep or not name:
            raise ConfigurationError(f"Constant override must look like NAME=value, got '{pair}'")
        try:
            overrides[name] = int(value)
        except ValueError:
            raise ConfigurationError(f"Constant {name} must be an integer, got '{value}'")
    return overrides


def positions(mask: Sequence[bool]) -> Tuple[int, ...]:
    """
    Returns the indices of the set entries of a boolean mask
    """
    return tuple(j for j, bit in enumerate(mask) if bit)


def restrict(vector: Sequence[int], mask: Sequence[bool]) -> Tuple[int, ...]:
    """
    Restricts a vector to the positions set in the mask
    @param vector: full length vector
    @param mask: boolean mask of the same length
    @return: the projected vector
    """
    return tuple(value for value, bit in zip(vector, mask) if bit)


def bits(row: Sequence[bool]) -> str:
    return "".join("1" if bit else "0" for bit in row)


def permute(items: Sequence, perm: Sequence[int]) -> List:
    """
    Reorders items, perm maps the new position to the original index
    """
    return [items[j] for j in perm]
