"""Published initial states of periodic orbits, ten significant digits.

Each fixture is a phase state at ``t = 0`` for ``T = 1`` together with the
mass ratio, the rotation angle ``P*pi/Q`` and the period of the full orbit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boundary import RotationAngle
from .dynamics import MassModel, PhaseState


@dataclass(frozen=True)
class OrbitFixture:
    name: str
    mu: float
    P: int
    Q: int
    period: float
    q: tuple
    v: tuple

    @property
    def masses(self):
        return MassModel.from_mu(self.mu)

    @property
    def angle(self):
        return RotationAngle.from_rational(self.P, self.Q)

    @property
    def theta(self):
        return self.P * math.pi / self.Q

    def state(self):
        return PhaseState(np.array(self.q).reshape(4, 2), np.array(self.v).reshape(4, 2))


_RAW = [
    ("star-pentagon", 1.0, 4, 5, 20.0,
     [-0.2997475302, 0.4125670813, 1.195555973, -0.5096218631,
      -1.011040523, 1.391577897, 0.1152320804, -1.294523115],
     [1.114760563, 0.8099231855, -0.8600513847, -0.003559696213,
      0.01444607736, 0.01049661818, -0.2691552559, -0.8168601074]),
    ("pentagon-mu0.5", 0.5, 4, 5, 20.0,
     [-0.03365216432, 0.04631823056, 1.229294751, -0.7817016926,
      -0.762779971, 1.049876561, 0.3635695192, -1.410687891],
     [0.8791868243, 0.6387681838, -0.904358996, -0.2059939437,
      -0.1893205096, -0.1375492335, -0.4753736332, -0.7964439574]),
    ("pentagon-mu1.5", 1.5, 4, 5, 20.0,
     [-0.4954623785, 0.6819454601, 1.17942819, -0.3292799005,
      -1.196730568, 1.647158317, -0.05129955936, -1.223455951],
     [1.286530639, 0.93472253, -0.8390962366, 0.1359441271,
      0.1671195441, 0.121421328, -0.1300038857, -0.8400400324]),
    ("square-7pi8", 1.0, 7, 8, 16.0,
     [-0.3657149699, 0.8829140403, 1.104628492, -1.169044107,
      -0.7844622398, 1.893859379, 0.04554871816, -1.607729312],
     [1.186543081, 0.4914819077, -0.7831641034, 0.3494036031,
      -0.09666570501, -0.04003861407, -0.3067132724, -0.8008468968]),
    ("square-7pi8-mu1.5", 1.5, 7, 8, 16.0,
     [-0.5350773026, 1.291790881, 1.099754106, -0.9458393211,
      -0.9513025743, 2.296647577, -0.1088341884, -1.446452984],
     [1.350250694, 0.5592959079, -0.7454903418, 0.4733604227,
      0.05662296548, 0.02345549633, -0.1924254315, -0.8618613589]),
    ("choreography-7pi9", 1.0, 7, 9, 36.0,
     [-0.27004813, 0.3218308291, 1.207641964, -0.3501521227,
      -1.072721533, 1.278419741, 0.1351276988, -1.250098447],
     [1.071180019, 0.8988296083, -0.8488458756, -0.1158622427,
      0.03916771092, 0.03286635046, -0.2615018538, -0.815833716]),
]

FIXTURES = {i + 1: OrbitFixture(name, mu, P, Q, per, tuple(q), tuple(v))
            for i, (name, mu, P, Q, per, q, v) in enumerate(_RAW)}
BY_NAME = {f.name: f for f in FIXTURES.values()}


def get_fixture(key):
    """Look a fixture up by its number (``1``..``6``, int or str) or name."""
    if isinstance(key, str) and key.isdigit():
        key = int(key)
    if key in FIXTURES:
        return FIXTURES[key]
    if key in BY_NAME:
        return BY_NAME[key]
    raise KeyError(f"unknown fixture {key!r}; choose 1-6 or one of {sorted(BY_NAME)}")
