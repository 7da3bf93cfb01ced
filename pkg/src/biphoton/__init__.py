"""Simulation and analysis of anisotropic spatial entanglement in SPDC photon pairs."""
from .model import (CrystalSpec, PumpBeam, GaussianBiphotonModel, EntanglementReport,
                    sigma_minus_from_crystal, asymmetry_factor, model_from_pump,
                    conditional_position_width, conditional_momentum_width, gamma_product,
                    mode_count, epr_entangled, theoretical_profile)
from .simulator import (CameraConfig, OpticsConfig, OpticsMode, SourceConfig, FrameStack, StackMode,
                        simulate_stack, simulate_dark_stack, render_frame)
from .analysis import (DarkCalibration, JdpMatrix, CorrelationProfile, DoubleGaussianFit,
                       calibrate_dark, threshold_frame, marginalize, accumulate_jdp,
                       extract_profile, fit_double_gaussian, resultant_width,
                       to_position_width, to_momentum_width, build_report)
from .config import ExperimentConfig, ConfigError, load_config, save_config
from .stackio import read_stack, write_stack

__version__ = "0.1.0"
