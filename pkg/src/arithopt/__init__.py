"""Diffusion-guided design-space exploration for multiplier datapaths."""

from .ct import (
    CompressorTree,
    dadda_tree,
    initial_pp_counts,
    propagate_counts,
    validate_ct,
    wallace_min_stages,
    wallace_tree,
)
from .drv import DesignRuleViolation
from .prefix import (
    PrefixBitmap,
    brent_kung_prefix,
    canonical_parents,
    kogge_stone_prefix,
    serial_prefix,
    sklansky_prefix,
    validate_prefix,
)
from .codec import DesignTensor, from_tensor, to_tensor
from .legalize import (
    LegalizeAction,
    LegalizeReport,
    apply_action,
    candidate_actions,
    legalize_ct,
    legalize_prefix,
)
from .netlist import (
    Netlist,
    TimingModel,
    assemble_multiplier,
    build_ct_netlist,
    build_prefix_netlist,
    emit_hdl,
    parse_hdl,
    verify_exhaustive,
)
from .qor import QoRLabel, evaluate_design, evaluate_qor, wallace_reference
from .dataset import DatasetSpec, generate_dataset, mutate_ct, mutate_prefix, seed_design
from .neural import (
    DenoiserNet,
    NoiseSchedule,
    PredictorNet,
    forward_diffuse,
    grad_wrt_input,
    make_schedule,
    train_diffusion,
    train_predictor,
)
from .sampling import (
    GuidanceConfig,
    ddim_step,
    guided_step,
    predict_x0,
    reflect,
    sample_guided,
    sample_unconditional,
)
from .campaign import CampaignConfig, ParetoArchive, ParetoPoint, pareto_update, run_campaign

__version__ = "0.1.0"
