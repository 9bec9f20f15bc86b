"""
Shared fixtures for the tmc_transfer test suite
"""

import sys
from pathlib import Path

import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from tmc_transfer.datagen import generate_network


def make_record(**overrides):
    """Well-formed raw CSV record (all string tokens, bin 0 = 07:00)"""
    record = {
        "intersection_id": "INT000", "approach_id": "N", "day_index": "0", "interval_index": "0",
        "o_tm": "120.5", "d_tm": "80", "g_tm": "400", "c_tm": "7", "m_tm": "9.5", "s_tm": "4.2",
        "o_lm": "30", "d_lm": "12", "g_lm": "90", "c_lm": "7", "m_lm": "40", "s_lm": "20", "p_lm": "60",
        "l_sl": "0", "l_el": "1", "l_tl": "2", "l_er": "1", "l_sr": "0",
        "e_poie": "850", "e_poic": "14", "r": "1", "l": "2", "h_moh": "1", "h_hod": "7",
        "v_lm": "11.5", "v_tm": "70.25", "v_rm": "9",
    }
    record.update(overrides)
    return record


@pytest.fixture
def raw_record():
    """Factory fixture for raw records"""
    return make_record


@pytest.fixture(scope="session")
def small_network():
    """4 intersections x 2 days, seed 7"""
    return generate_network(4, 2, seed=7)


@pytest.fixture(scope="session")
def network_30():
    """30 intersections x 2 days, seed 42"""
    return generate_network(30, 2, seed=42)
