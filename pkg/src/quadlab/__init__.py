"""Quadrotor simulation, cascaded PID control and TD3 learners for navigation and gain tuning."""
from .dynamics import QuadParams, hover_rpm, make_state, simulate, step
from .nav import NavConfig, NavEnv
from .pid import GOLDEN_GAINS, PidLimits, PidParams18
from .pidtune import PidTuner
from .td3 import TD3Agent

__all__ = ["QuadParams", "hover_rpm", "make_state", "simulate", "step", "NavConfig", "NavEnv",
           "GOLDEN_GAINS", "PidLimits", "PidParams18", "PidTuner", "TD3Agent"]
__version__ = "0.1.0"
