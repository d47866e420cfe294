"""Shared scenario factories for the test suite."""

import numpy as np

from omnisurf import element as el
from omnisurf.channel import BaseStation, Scenario, SurfacePanel, UserTerminal

LAMBDA_36 = 299_792_458.0 / 3.6e9


def make_scenario(
    rows=2,
    cols=3,
    n_antennas=4,
    users=None,
    kappa=4.0,
    table=None,
    pathloss_mode="scatter",
    noise_power_w=1e-10,
    tx_power_w=1.0,
    bs_position=(0.0, 3.0, 0.0),
    tx_beamwidth_deg=None,
    carrier_hz=3.6e9,
):
    """Small panel at the origin with its normal on +y; BS above, users anywhere."""
    if users is None:
        users = [
            UserTerminal(position=(1.5, 2.0, 0.0)),
            UserTerminal(position=(-1.0, -2.5, 0.3)),
        ]
    lam = 299_792_458.0 / carrier_hz
    return Scenario(
        bs=BaseStation(position=bs_position, n_antennas=n_antennas, tx_power_w=tx_power_w),
        panel=SurfacePanel(
            center=(0.0, 0.0, 0.0),
            normal=(0.0, 1.0, 0.0),
            rows=rows,
            cols=cols,
            pitch_x=lam / 2,
            pitch_y=lam / 2,
            table=table or el.two_state_pin_table(),
        ),
        users=tuple(users),
        carrier_hz=carrier_hz,
        noise_power_w=noise_power_w,
        kappa=kappa,
        pathloss_mode=pathloss_mode,
        tx_beamwidth_deg=tx_beamwidth_deg,
    )
