"""teacharm: interactive teaching workbench for a simulated
impedance-controlled arm.

Core pieces: a torque-level 7-DoF arm simulation with penalty contact
against a task board, a variable Cartesian impedance controller,
demonstration recording and interactive trajectory shaping with spiral
self-exploration for insertions, visual+haptic board localization, and a
session service exposing a CLI and a WebSocket endpoint.
"""

__version__ = "0.1.0"
