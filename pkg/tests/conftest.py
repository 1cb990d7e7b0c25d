import warnings

import pytest
from hypothesis import settings

from tmw_spdc.material import DiffusionGeometry, MaterialParams
from tmw_spdc.modes import WaveguideModes

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def mat():
    return MaterialParams()


@pytest.fixture(scope="session")
def guides():
    """Shared mode databases keyed by strip width (um)."""
    cache = {}

    def get(width):
        if width not in cache:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cache[width] = WaveguideModes(DiffusionGeometry(strip_width=width))
        return cache[width]

    return get


@pytest.fixture(scope="session")
def degenerate_source(guides):
    """Type-0 degenerate source on a 4 um guide, 20 mm uniform poling."""
    from tmw_spdc.qpm import InteractionChannel, PhaseMatchTarget, design_uniform_period, uniform_profile
    from tmw_spdc.spdc import SourceSpec, joint_spectrum

    db = guides(4.0)
    ch = (InteractionChannel(0, 1),)
    d = design_uniform_period(ch, PhaseMatchTarget.from_wavelengths(0.406), 1, db)
    src = SourceSpec(4.0, uniform_profile(d.period, 20.0), 0.406, ch)
    return src, joint_spectrum(src, db)


@pytest.fixture(scope="session")
def nondegenerate_source(guides):
    """Type-0 source on a 4.2 um guide designed for 780 nm, 2 mm poling."""
    from tmw_spdc.qpm import InteractionChannel, PhaseMatchTarget, design_uniform_period, uniform_profile
    from tmw_spdc.spdc import SourceSpec, joint_spectrum

    db = guides(4.2)
    ch = (InteractionChannel(0, 1), InteractionChannel(1, 0))
    d = design_uniform_period(ch, PhaseMatchTarget.from_wavelengths(0.406, 0.780), 1, db)
    src = SourceSpec(4.2, uniform_profile(d.period, 2.0), 0.406, ch, 0.780)
    return src, joint_spectrum(src, db)
