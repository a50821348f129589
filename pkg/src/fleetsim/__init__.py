"""fleetsim: peer-to-peer multi-robot coordination framework and simulator.

The package is organized in three layers. Team-level logic (guidance laws,
distributed task assignment, distributed MPC) exchanges messages over an
explicit communication graph; per-robot planning and control map velocity
commands onto robot models; the integration layer runs kinematic models,
a deterministic lockstep scenario engine, and a trace pipeline.
"""

from . import (
    assignment,
    codec,
    communicator,
    control,
    dynamics,
    errors,
    guidance,
    lp,
    mpc,
    netgraph,
    runtime,
    simrunner,
    transport,
)

__version__ = "0.1.0"
