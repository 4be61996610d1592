"""Path tracking for a four-wheel independently steered and driven vehicle.

Field-based reference generation, linear time-varying MPC steering, sliding-mode
yaw-moment control, and EKF or LSTM tire-force estimation, run against a
nonlinear vehicle simulator.
"""

__version__ = "0.1.0"
