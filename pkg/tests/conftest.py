import numpy as np
import pytest

from teacharm.control import ControllerCommand, ImpedanceGains
from teacharm.model import READY_Q, JointState, make_lab_arm
from teacharm.servo import ServoArm
from teacharm.world import make_task_board


@pytest.fixture(scope="session")
def lab_model():
    return make_lab_arm()


@pytest.fixture()
def board_world():
    return make_task_board()


@pytest.fixture()
def ready_arm(lab_model):
    """Servo-looped arm at the working posture, no world."""
    return ServoArm(lab_model, None, JointState(READY_Q.copy(), np.zeros(7)))


@pytest.fixture()
def board_arm(lab_model, board_world):
    return ServoArm(lab_model, board_world,
                    JointState(READY_Q.copy(), np.zeros(7)))


def settle(arm, goal_pose, gains=None, ticks=300, q_ns=None):
    """Drive the arm toward a fixed goal for a number of ticks."""
    gains = gains or ImpedanceGains()
    cmd = ControllerCommand(goal_pose, gains,
                            READY_Q.copy() if q_ns is None else q_ns)
    last = None
    for _ in range(ticks):
        last = arm.tick(cmd)
    return last
