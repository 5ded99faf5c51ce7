"""Presentation helpers for SI quantities.

All values inside the package are strict SI (joules, farads, volts, seconds,
hertz) in double precision.  These helpers exist only for report formatting.
"""

_ENERGY_SCALES = (
    (1e-3, 1e3, "mJ"),
    (1e-6, 1e6, "uJ"),
    (1e-9, 1e9, "nJ"),
    (1e-12, 1e12, "pJ"),
    (0.0, 1e15, "fJ"),
)


def joules_to_fj(value: float) -> float:
    return value * 1e15


def format_energy(value: float, digits: int = 3) -> str:
    """Render an energy in the most readable of fJ/pJ/nJ/uJ/mJ."""
    mag = abs(value)
    for threshold, scale, suffix in _ENERGY_SCALES:
        if mag >= threshold:
            return f"{value * scale:.{digits}f} {suffix}"
    return f"{value:.{digits}e} J"


def format_tops(ops_per_s: float, digits: int = 3) -> str:
    return f"{ops_per_s / 1e12:.{digits}f} TOP/s"


def format_topsw(ops_per_j: float, digits: int = 3) -> str:
    return f"{ops_per_j / 1e12:.{digits}f} TOP/s/W"
