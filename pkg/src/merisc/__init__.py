"""Memory-enhanced genetic control of a quantized reconfigurable intelligent surface."""
from .scene import SceneConfig, SceneGeometry, UserSnapshot, build_scene, make_snapshot
from .em import SusceptibilityTable, calibrate_state_table, load_table, save_table
from .beamforming import zf_weights
from .qos import build_context, evaluate_cost, throughput
from .ga import GaParams, MemoryPool, optimize_step
from .scenario import Trajectory, gen_aperiodic, gen_periodic, import_trajectory, run
from .config import ConfigError, RunConfig, parse_config

__version__ = "0.1.0"
