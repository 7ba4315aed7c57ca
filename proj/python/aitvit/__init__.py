"""Python bindings for the aitvit modulation classifier and attack toolkit."""

from ._aitvit import (
    SCHEMES,
    AitvitError,
    ConfigError,
    DataError,
    Model,
    NumericalError,
    epsilon_from_pnr,
    fnr,
    generate_dataset,
    read_dataset,
    run_command,
    write_dataset,
)

__all__ = [
    "SCHEMES",
    "AitvitError",
    "ConfigError",
    "DataError",
    "Model",
    "NumericalError",
    "epsilon_from_pnr",
    "fnr",
    "generate_dataset",
    "read_dataset",
    "run_command",
    "write_dataset",
]
