import random
from pathlib import Path

import pytest

from imc_forge import MacroSpec, ModelConstants, TechnologyProfile
from imc_forge.tech import load_tech_config

DATA = Path(__file__).parent.parent / "src" / "imc_forge" / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def default_tech_config():
    return load_tech_config(DATA / "tech_default.toml")


@pytest.fixture(scope="session")
def constants() -> ModelConstants:
    return ModelConstants()


@pytest.fixture
def tech28() -> TechnologyProfile:
    return TechnologyProfile(node=28.0, c_inv=0.9e-15, v_nominal=0.8)


def random_macro_spec(rng: random.Random, paradigm: str | None = None,
                      vdd: float | None = None) -> MacroSpec:
    """Random but always-valid macro geometry for property tests."""
    paradigm = paradigm or rng.choice(["AIMC", "DIMC"])
    weight_bits = rng.choice([1, 2, 4, 8])
    d1 = rng.choice([1, 2, 4, 8, 16, 32, 64])
    d2 = rng.choice([1, 2, 4, 8, 16, 32, 64, 128, 256])
    row_mux = 1 if paradigm == "AIMC" else rng.choice([1, 2, 4, 8])
    if paradigm == "AIMC":
        adc_res = rng.randint(1, 8)
        dac_res = rng.randint(1, 8)
    else:
        adc_res = dac_res = 0
    return MacroSpec(
        paradigm=paradigm,
        rows=d2 * row_mux,
        cols=d1 * weight_bits,
        row_mux=row_mux,
        weight_bits=weight_bits,
        input_bits=rng.choice([1, 2, 4, 8]),
        adc_res=adc_res,
        dac_res=dac_res,
        vdd=vdd if vdd is not None else rng.uniform(0.5, 1.2),
        f_clk=rng.choice([100e6, 250e6, 500e6, 1e9]),
        macros=rng.choice([1, 2, 4, 8]),
    )


def random_cycle_counts(rng: random.Random) -> "CycleCounts":
    from imc_forge import CycleCounts
    return CycleCounts(
        prech_cycles=rng.randint(0, 1000),
        acc_cycles=rng.randint(0, 1000),
        dac_conversions=rng.randint(0, 100_000),
        total_macs=rng.randint(1, 10_000_000),
        presentations=rng.randint(1, 1000),
    )
