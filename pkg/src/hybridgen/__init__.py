"""Hybrid discrete-continuous sequence generation.

Autoregressive generator pairing a categorical head with a conditional
diffusion head over variable-length sequences of atomic units, plus an
exact-integer design-rule-check engine for rectangle layouts, precision
and quantization analysis, and a rule-satisfying synthetic layout
generator.
"""

from .schema import (AtomicUnit, SchemaSpec, UnitSequence, ValidationResult,
                     denormalize, layout_schema, load_sequences, normalize,
                     save_sequences, svg_schema, validate_sequence)
from .backbone import ModelConfig, ParameterStore, gradient_check
from .diffusion import (DiffusionConfig, NoiseSchedule, build_schedule,
                        corrupt, denoise_loss, sample_reverse,
                        uniform_stride_steps)
from .heads import (StepOutputs, ce_loss, discrete_logits, eos_adjust,
                    expected_length, length_loss, step_outputs)
from .model import SequenceModel
from .training import (TrainConfig, TrainingDiverged, total_loss, train,
                       default_gradient_check, parse_train_config,
                       format_train_config)
from .generator import GenConfig, GenResult, complete_batch, generate
from .drc import (DrcConfig, DrcReport, DrcSummary, LayoutSample, Rect,
                  clc, evaluate, hsc, load_layouts, pdc, save_layouts, vsc)
from .precision import (PrecisionSpec, precision_bits, quantize_dataset,
                        required_vocab)
from .synthgen import (LengthStats, SynthConfig, generate_layouts,
                       layouts_to_sequences, length_stats,
                       sequences_to_layouts)
from .estimators import GridQuantizer, HybridSequenceGenerator, LayoutSequencer

__all__ = [
    "AtomicUnit", "SchemaSpec", "UnitSequence", "ValidationResult",
    "normalize", "denormalize", "validate_sequence", "layout_schema",
    "svg_schema", "load_sequences", "save_sequences",
    "ModelConfig", "ParameterStore", "gradient_check",
    "DiffusionConfig", "NoiseSchedule", "build_schedule", "corrupt",
    "denoise_loss", "sample_reverse", "uniform_stride_steps",
    "StepOutputs", "discrete_logits", "eos_adjust", "ce_loss",
    "expected_length", "length_loss", "step_outputs",
    "SequenceModel",
    "TrainConfig", "TrainingDiverged", "total_loss", "train",
    "default_gradient_check", "parse_train_config", "format_train_config",
    "GenConfig", "GenResult", "generate", "complete_batch",
    "Rect", "LayoutSample", "DrcConfig", "DrcReport", "DrcSummary",
    "clc", "pdc", "hsc", "vsc", "evaluate", "load_layouts", "save_layouts",
    "PrecisionSpec", "precision_bits", "required_vocab", "quantize_dataset",
    "SynthConfig", "LengthStats", "generate_layouts", "layouts_to_sequences",
    "sequences_to_layouts", "length_stats",
    "GridQuantizer", "HybridSequenceGenerator", "LayoutSequencer",
]

__version__ = "0.1.0"
