"""Foot-mounted inertial odometry with FootSLAM-based zero-velocity threshold calibration.

Modules: ``sensor_io`` (IMU files), ``zupt_ins`` (detector, filter, odometry),
``hexgrid``, ``footslam``, ``calibration``, ``gaitsim`` (simulator),
``evaluation`` (metrics) and ``cli``.
"""

__version__ = "0.1.0"
