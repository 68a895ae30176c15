import pytest
from hypothesis import settings

from nvcomparator.config import default_config_path, load_settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def calibrated():
    """(ComparatorConfig, CampaignSettings) from the shipped calibrated file."""
    return load_settings(default_config_path())
