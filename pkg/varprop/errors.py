"""Exception hierarchy shared by the library and the command line."""


class VarpropError(Exception):
    """Base class for every error raised by varprop."""


class ConfigError(VarpropError):
    """Invalid run configuration or output path."""


class SchemaError(VarpropError):
    """A CSV file does not carry a recognised varprop schema."""


class NumericalError(VarpropError):
    """A numerical routine could not produce a trustworthy result."""


class NotHermitianError(NumericalError, ValueError):
    pass


class DimensionMismatchError(NumericalError, ValueError):
    pass


class InsufficientMomentsError(NumericalError, ValueError):
    pass


class DegenerateMomentsError(NumericalError):
    """h1*h3 - h2**2 vanishes, so the closed-form coefficients are undefined."""


class EigensolverError(NumericalError):
    pass


class IntegrationError(NumericalError):
    pass


class ResidualActionError(NumericalError):
    pass


class NonOrthonormalBasisError(NumericalError, ValueError):
    pass
