import random

import pytest

from sracare.device import DEFAULT_MAP, BootLayout, init_device
from sracare.frames import assemble_flash, assemble_rom, build_image

KEY = bytes(range(32))
CHIP_INFO = b"SRACARE-SOC-0001"


def make_device(app_size=5734, key=KEY, seed=1, mm=DEFAULT_MAP, trace=None):
    """Device with a framed app in flash and the same frames as golden copy in ROM."""
    binary = random.Random(seed).randbytes(app_size)
    frames = build_image(key, binary)
    layout = BootLayout(image_frames=len(frames))
    rom = assemble_rom(mm, layout, CHIP_INFO, key, frames)
    flash = assemble_flash(mm, layout, frames)
    dev = init_device(mm, rom, flash, layout, trace)
    return dev, frames, flash


@pytest.fixture
def device():
    return make_device()
