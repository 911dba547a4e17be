import math
from pathlib import Path

U64_MAX = 2 ** 64 - 1


def is_finite_vector(values: list[float]) -> list[float]:
    """
    Checks that every entry of a list is a finite number.

    :param values: Numbers to be validated
    :type values: list[float]
    :return: The validated numbers
    :rtype: list[float]
    :raises ValueError: If some entry is infinite or NaN
    """
    if not all(math.isfinite(value) for value in values):
        raise ValueError("Every entry must be a finite number.")
    return values


def is_positive_vector(values: list[float]) -> list[float]:
    """
    Checks that a list is non-empty and strictly positive.

    :param values: Numbers to be validated
    :type values: list[float]
    :return: The validated numbers
    :rtype: list[float]
    :raises ValueError: If the list is empty or some entry is not positive
    """
    if not values:
        raise ValueError("At least one entry is required.")
    if not all(math.isfinite(value) and value > 0 for value in values):
        raise ValueError("Every entry must be strictly positive.")
    return values


def is_increasing(values: list[float]) -> list[float]:
    """
    Checks that a list is strictly increasing.

    :raises ValueError: If two consecutive entries are not increasing
    """
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("Entries must be strictly increasing.")
    return values


def is_open_fraction_list(values: list[float]) -> list[float]:
    """
    Checks that every entry lies in the open interval (0, 1).

    :raises ValueError: If some entry is outside (0, 1)
    """
    if not all(0 < value < 1 for value in values):
        raise ValueError("Fractions of the horizon must lie strictly between 0 and 1.")
    return values


def is_u64(seed: int) -> int:
    """
    Checks that a seed fits in an unsigned 64-bit integer.

    :param seed: Seed to be validated
    :type seed: int
    :return: The validated seed
    :rtype: int
    :raises ValueError: If the seed is negative or too large
    """
    if not 0 <= seed <= U64_MAX:
        raise ValueError("Seed must be an unsigned 64-bit integer.")
    return seed


def is_complex_vector(values: list[float | list[float]]) -> list[list[float]]:
    """
    Normalizes a complex vector to `[re, im]` pairs.

    Plain numbers are read as real entries, two-element lists as `[re, im]`.

    :param values: Entries to be normalized
    :type values: list[float | list[float]]
    :return: The vector as a list of `[re, im]` pairs
    :rtype: list[list[float]]
    :raises ValueError: If an entry is neither a number nor a pair, or is not finite
    """
    pairs = []
    for value in values:
        if isinstance(value, list):
            if len(value) != 2:
                raise ValueError("Complex entries must be written as [re, im].")
            pair = [float(value[0]), float(value[1])]
        else:
            pair = [float(value), 0.0]
        if not all(math.isfinite(part) for part in pair):
            raise ValueError("Complex entries must be finite.")
        pairs.append(pair)
    return pairs


def is_existing_file(path: Path | None) -> Path | None:
    """
    Checks that an optional path points to an existing file.

    :raises ValueError: If the path is given but no file exists there
    """
    if path is not None and not path.is_file():
        raise ValueError(f"File {path} does not exist.")
    return path
