"""Differential DAPSK transmission over a massive-MIMO uplink with one-bit
and variable-quantization-level ADCs."""

from .modem import ConstellationSpec, dapsk_encode, psk_map, psk_unmap, recover_bits
from .channel import ChannelConfig, apply_channel, gen_channel
from .quantize import bussgang_params, sign_quantize, vql_quantize, vql_quantizer
from .detect import energy_statistic, ncx2_pdf, onebit_ml_detect, vql_phase_detect
from .neural import MlpModel, TrainConfig, generate_dataset, load_model, save_model, train
from .harness import MetricsRecord, SimConfig, emit_csv, emit_svg, run_block, sweep

__version__ = "0.1.0"

__all__ = [
    "ConstellationSpec",
    "dapsk_encode",
    "psk_map",
    "psk_unmap",
    "recover_bits",
    "ChannelConfig",
    "gen_channel",
    "apply_channel",
    "bussgang_params",
    "sign_quantize",
    "vql_quantize",
    "vql_quantizer",
    "onebit_ml_detect",
    "vql_phase_detect",
    "energy_statistic",
    "ncx2_pdf",
    "MlpModel",
    "TrainConfig",
    "generate_dataset",
    "train",
    "save_model",
    "load_model",
    "SimConfig",
    "MetricsRecord",
    "run_block",
    "sweep",
    "emit_csv",
    "emit_svg",
    "__version__",
]
