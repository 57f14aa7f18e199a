"""UAV-assisted integrated access and backhaul simulator."""

from .channel import ChannelParams, LinkDraws
from .errors import ConfigError, IabSimError, Infeasible, ParseError, RankDeficient, ValidationError
from .experiments import MODES, export_results, run_monte_carlo, run_trial, waterfill, waterfilling_baseline
from .fixed_point import Allocation, PaOptions, solve_pa
from .network import Network
from .orchestrator import SolveOptions, Solution, solve, solve_reversed
from .pso import PsoOptions, run_pso, solve_pb
from .scenario import Layout, Scenario, dump_scenario, load_scenario, realize

__version__ = "0.1.0"
