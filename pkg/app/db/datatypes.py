from pathlib import Path
from typing import Annotated

from pydantic import AfterValidator

from app.helpers.validations import (is_complex_vector, is_existing_file,
                                     is_finite_vector, is_increasing,
                                     is_open_fraction_list, is_positive_vector,
                                     is_u64)

FiniteVector = Annotated[
    list[float],
    AfterValidator(is_finite_vector)
]

PositiveVector = Annotated[
    list[float],
    AfterValidator(is_positive_vector)
]

IncreasingVector = Annotated[
    list[float],
    AfterValidator(is_finite_vector),
    AfterValidator(is_increasing)
]

HorizonFractions = Annotated[
    list[float],
    AfterValidator(is_open_fraction_list)
]

Seed = Annotated[
    int,
    AfterValidator(is_u64)
]

ComplexVector = Annotated[
    list[float | list[float]],
    AfterValidator(is_complex_vector)
]

ExistingFile = Annotated[
    Path | None,
    AfterValidator(is_existing_file)
]
