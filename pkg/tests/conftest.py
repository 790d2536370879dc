import math

import numpy as np
import pytest

from avplan.geometry import Point2, Polygon, Polyline, Pose2
from avplan.scene import Agent, EgoState, PredictedTrajectory, PredictedState


def straight_prediction(x0, y0, heading, speed, horizon=8.0, dt=0.5):
    ts = np.arange(0.0, horizon + dt / 2, dt)
    states = [PredictedState(float(t),
                             Pose2(Point2(x0 + speed * t * math.cos(heading),
                                          y0 + speed * t * math.sin(heading)),
                                   heading),
                             speed)
              for t in ts]
    return PredictedTrajectory(states)


def make_agent(aid, x, y, heading, speed, kind="vehicle", length=4.5, width=1.9,
               accel=0.0, stationary_duration=0.0, flag=False, prediction=None):
    from avplan.geometry import OrientedBox
    pred = prediction or straight_prediction(x, y, heading, speed)
    return Agent(id=aid, kind=kind,
                 footprint=OrientedBox(Pose2(Point2(x, y), heading), length, width),
                 speed=speed, longitudinal_acceleration=accel,
                 predictions=[pred], operator_drive_around_flag=flag,
                 stationary_duration=stationary_duration)


def make_ego(x=0.0, y=0.0, heading=0.0, speed=5.0, length=4.6, width=2.0):
    return EgoState(pose=Pose2(Point2(x, y), heading), speed=speed,
                    acceleration=0.0, length=length, width=width)


def straight_path(length=80.0, y=0.0):
    return Polyline([(0.0, y), (length, y)])


def rect(x0, y0, x1, y1):
    return Polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


@pytest.fixture
def ego():
    return make_ego()


@pytest.fixture
def path():
    return straight_path()
