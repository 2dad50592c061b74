"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures onto its documented exit statuses without a lookup table.
"""


class SynflowError(Exception):
    exit_code = 1


class InputError(SynflowError, ValueError):
    """Problem with the data handed to an analysis."""

    exit_code = 3


class ConfigError(SynflowError, ValueError):
    """Problem with the requested configuration or parameters."""

    exit_code = 4


class ZeroVarianceColumn(InputError):
    def __init__(self, name):
        super().__init__(f"column {name!r} has zero variance")
        self.name = name


class UnknownLabel(InputError):
    def __init__(self, label):
        super().__init__(f"unknown variable label {label!r}")
        self.label = label


class InsufficientSamples(InputError):
    pass


class FeatureExplosion(ConfigError):
    pass


class SingularDesign(InputError):
    pass


class TooFewSurrogates(ConfigError):
    pass


class InvalidPartition(ConfigError):
    pass


class TooManyDrivers(ConfigError):
    pass


class SubsetTooLarge(ConfigError):
    pass


class AsymmetricInput(InputError):
    pass


class EmptyMatrix(InputError):
    pass


class NonstationaryParameters(ConfigError):
    pass


class InfeasibleAmplitude(ConfigError):
    pass
