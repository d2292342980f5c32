"""Federated optimization of frecency ranking weights on simulated clients."""

from .frecency import (
    DEFAULT_PARAMS,
    PARAM_NAMES,
    ModelParams,
    Page,
    Visit,
    VisitType,
    apply_decay,
    frecency,
    recency_weight,
    visit_score,
)
from .ranking_loss import LossConfig, SearchEvent, event_loss, svm_loss
from .gradients import DiffMode, GradConfig, approx_gradient
from .rprop import ConstraintSpec, RpropConfig, RpropState, project, rprop_step, sign_vote
from .config import ClientConfig, RunConfig, load_config
from .protocol import ClientUpdate, run_iteration, run_training, weighted_average
from .clients import SyntheticClientPool, gen_history, simulate_click, simulate_search_round
from .analysis import compare_arms, mann_whitney_u, rolling_average, stability_study

__version__ = "0.1.0"
